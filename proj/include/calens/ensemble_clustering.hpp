#pragma once

#include "calens/random.hpp"
#include "calens/types.hpp"

#include <span>
#include <vector>

namespace calens {

/// Diagonal jitter added to the proximity and GP covariance matrices.
inline constexpr double kCovJitter = 1e-8;

/// Sigma(i, j) = exp(-theta |l_i - l_j|^2), without jitter.
Matrix proximity_matrix(std::span<const Point2> locations, double theta);

/// theta placing the median off-diagonal proximity at 0.05. Scale-free, so
/// rescaling the locations rescales theta accordingly. Returns 1 for n < 2.
double default_theta(std::span<const Point2> locations);

/// Probit stick-breaking weights pi_k, k = 0..K-1; the last weight is the remainder.
Vector psbp_weights(std::span<const double> alpha);
Vector psbp_log_weights(std::span<const double> alpha);

/// Per-atom tables for the allocation likelihood:
/// base[k] = sum_t log(1 - Phi(stilde_{k,t})), lift(k, t) = log Phi - log(1 - Phi).
struct AtomLikelihood {
    Vector base;
    Matrix lift;
};
AtomLikelihood atom_likelihood(const Matrix& gp_atoms);

/// Normalized P(zeta_i = k) for one neuron with spike row `s` and PSBP weights `log_pi`.
Vector cluster_allocation_probs(std::span<const int> s, const Vector& log_pi, const AtomLikelihood& lik);

/// Draws zeta_i (0-based).
int sample_cluster_allocation(std::span<const int> s, const Vector& log_pi, const AtomLikelihood& lik, Rng& rng);

/// Conditional of one PSBP row alpha_k(.) given its augmented latents z_k:
/// prior alpha_k ~ N(mu_alpha 1, Sigma), z_k | alpha_k ~ N(alpha_k, sigma2_alpha I).
/// Sigma + jitter is eigendecomposed once; eigenvalues are floored at the jitter.
class ProximityPosterior {
public:
    ProximityPosterior(const Matrix& proximity, double mu_alpha, double sigma2_alpha);

    std::size_t size() const { return static_cast<std::size_t>(shrink_.rows()); }
    double mu() const { return mu_; }

    Vector mean(const Vector& z) const;
    const Matrix& covariance() const { return cov_; }
    Vector sample(const Vector& z, Rng& rng) const;
    Vector sample_prior(Rng& rng) const;

private:
    double mu_;
    Matrix shrink_;      // U diag(lambda / (lambda + s)) U^T
    Matrix post_root_;   // U diag(sqrt(lambda s / (lambda + s)))
    Matrix prior_root_;  // U diag(sqrt(lambda))
    Matrix cov_;
};

/// Augmented latents for row k (0-based) given 0-based labels: z <= 0 for
/// k < zeta_i, z > 0 for k == zeta_i < K-1, unconstrained N(alpha, 1) otherwise.
Vector sample_psbp_latent_row(int k, int K, std::span<const int> zeta, std::span<const double> alpha_row, Rng& rng);

/// Omega(t, t') = variance exp(-(t - t')^2 / (2 lengthscale^2)) + jitter 1{t = t'}.
Matrix gp_covariance(std::size_t T, double variance, double lengthscale);

/// Sequential conditionals of the GP: s_t | s_{t-h..t-1} with h = min(t, p)
/// (0-based t) has mean mu + weights[t] . (s_{t-h..t-1} - mu) and variance cond_var[t].
struct VecchiaFactor {
    std::size_t T = 0;
    std::size_t p = 0;
    std::vector<std::vector<double>> weights;  // weights[t][j] multiplies s_{t-h+j}
    Vector cond_var;
};
VecchiaFactor vecchia_coefficients(const Matrix& omega, std::size_t p);

/// Lower Cholesky factor of a symmetric banded matrix, stored by diagonals:
/// band(t, d) = L(t, t - d), d = 0..p.
struct BandedCholesky {
    std::size_t p = 0;
    Matrix band;

    /// Solves L x = rhs in place.
    void solve_lower(Vector& x) const;
    /// Solves L^T x = rhs in place.
    void solve_upper(Vector& x) const;
};
/// `a` holds the lower band of a symmetric positive-definite matrix in the same layout.
BandedCholesky banded_cholesky(const Matrix& a, std::size_t p);

/// Draws GP atoms under the Vecchia prior. Given n_k members with augmented
/// latents summing to S_t, the atom's conditional is Gaussian with precision
/// Q + n_k I and mean solving (Q + n_k I) m = Q mu 1 + S, where
/// Q = (I - B)^T D^{-1} (I - B) is the banded Vecchia precision. The draw is
/// joint and exact. Factorizations for member counts 0..max_members are
/// built up front so concurrent draws share read-only state.
class GpAtomSampler {
public:
    GpAtomSampler(VecchiaFactor factor, double mu, int max_members);

    std::size_t frames() const { return factor_.T; }
    const VecchiaFactor& factor() const { return factor_; }

    /// Dense Vecchia precision, for tests and diagnostics.
    Matrix precision() const;

    /// Posterior mean for `members` latents with per-frame sums `S`.
    Vector posterior_mean(int members, const Vector& S) const;
    /// Dense (Q + members I)^{-1}, for tests and diagnostics.
    Matrix posterior_covariance(int members) const;
    Vector sample(int members, const Vector& S, Rng& rng) const;
    /// Sequential draw from the Vecchia prior.
    Vector sample_prior(Rng& rng) const;

private:
    const BandedCholesky& factor_for(int members) const;

    VecchiaFactor factor_;
    double mu_;
    Matrix q_band_;  // lower band of Q
    std::vector<BandedCholesky> factors_;
};

/// Sum over members of truncated-normal latents z ~ N(atom_t, 1), positive where
/// the member spiked and non-positive otherwise.
Vector sample_gp_latent_sums(std::span<const int> members, const IntMatrix& s, std::span<const double> atom,
                             Rng& rng);

} // namespace calens
