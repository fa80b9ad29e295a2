#pragma once

#include "calens/random.hpp"
#include "calens/types.hpp"

#include <span>

namespace calens {

/// Biophysical layer. Column 0 of `c` is c_{i,0}; column t (1..T) pairs with
/// observation column t-1 of the data.
struct CalciumState {
    Matrix c;
    Vector b;
    double gamma = 0.9;
    double sigma2 = 1.0;
    double tau2 = 1.0;

    /// Throws ArgumentError unless gamma in (0,1), variances > 0 and all entries finite.
    void validate() const;
};

/// Spike-and-slab layer. Column t-1 of s, a and xi is the transition into c_t.
/// xi = 0 means no spike; xi = j >= 1 selects amp_atoms[j-1].
struct SpikeState {
    IntMatrix s;
    Matrix a;
    IntMatrix xi;
    Vector amp_atoms;  // length J_max, each > a_bar
    Vector dp_sticks;  // length J_max, last entry 1
};

/// Forward Kalman quantities for one neuron, indexed 0..T. q and R are the
/// one-step predictions (entry 0 unused); m and C the filtered moments.
struct KalmanPass {
    Vector q;
    Vector R;
    Vector m;
    Vector C;
};

/// Filter for c_t = gamma c_{t-1} + a_t + eta, y_t = b + c_t + eps with
/// c_0 ~ N(0, C0). `a` holds the spike amplitude of each transition (0 when silent).
KalmanPass kalman_filter(std::span<const double> y, double b, double gamma, double sigma2, double tau2,
                         std::span<const double> a, double C0);

/// Backward sampling recursion: c_T = offset[T] + sqrt(var[T]) e and, for t < T,
/// c_t = offset[t] + gain[t] c_{t+1} + sqrt(var[t]) e.
struct BackwardKernel {
    Vector offset;
    Vector gain;
    Vector var;
};
BackwardKernel backward_kernel(const KalmanPass& pass, double gamma, double tau2);

struct GaussianMoments {
    Vector mean;
    Matrix cov;
};
/// Exact joint mean and covariance of the path the kernel generates.
GaussianMoments backward_path_moments(const BackwardKernel& kernel);

/// Exact draw of (c_0, ..., c_T) given everything else.
Vector ffbs_sample_calcium(std::span<const double> y, double b, double gamma, double sigma2, double tau2,
                           std::span<const double> a, double C0, Rng& rng);

struct NormalParams {
    double mean = 0.0;
    double var = 1.0;
};

/// Full conditional of b_i given y_i and c_i(1..T).
NormalParams baseline_posterior(std::span<const double> y, std::span<const double> c, double sigma2,
                                double b0, double B0);
double sample_baseline(std::span<const double> y, std::span<const double> c, double sigma2, double b0,
                       double B0, Rng& rng);

/// Shape-rate parameters of a Gamma full conditional on a precision.
struct GammaParams {
    double shape = 1.0;
    double rate = 1.0;
};

/// 1/sigma^2 | rest. `y` is n x T, `c` is n x (T+1).
GammaParams sigma2_posterior(const Matrix& y, const Vector& b, const Matrix& c, double alpha_sigma,
                             double beta_sigma);
/// Returns sigma^2. `rate_multiplier` scales the posterior rate; anything but 1
/// corrupts the update and exists only to exercise the Geweke harness.
double sample_sigma2(const Matrix& y, const Vector& b, const Matrix& c, double alpha_sigma, double beta_sigma,
                     Rng& rng, double rate_multiplier = 1.0);

/// 1/tau^2 | rest from the state residuals c_t - gamma c_{t-1} - a_t.
GammaParams tau2_posterior(const Matrix& c, double gamma, const Matrix& a, double alpha_tau, double beta_tau);
double sample_tau2(const Matrix& c, double gamma, const Matrix& a, double alpha_tau, double beta_tau, Rng& rng);

/// Sufficient statistics of the state equation for gamma:
/// spp = sum c_{t-1}^2, spc = sum c_{t-1} (c_t - a_t).
struct DecayStats {
    double spp = 0.0;
    double spc = 0.0;
};
DecayStats decay_stats(const Matrix& c, const Matrix& a);

/// Unnormalized log full conditional of gamma (on the gamma scale, no Jacobian).
double gamma_log_target(double gamma, const DecayStats& stats, double tau2, double alpha_gamma,
                        double beta_gamma);

/// One random-walk Metropolis step on logit(gamma). Sets *accepted when given.
double sample_gamma(double gamma, const DecayStats& stats, double tau2, double alpha_gamma, double beta_gamma,
                    double step, Rng& rng, bool* accepted = nullptr);

} // namespace calens
