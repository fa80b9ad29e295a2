#include "calens/calcium_dynamics.hpp"

#include "calens/errors.hpp"

#include <cmath>

namespace calens {

void CalciumState::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ArgumentError("gamma must lie in (0, 1)");
    }
    if (!(sigma2 > 0.0) || !(tau2 > 0.0) || !std::isfinite(sigma2) || !std::isfinite(tau2)) {
        throw ArgumentError("variances must be positive and finite");
    }
    if (!c.allFinite() || !b.allFinite()) {
        throw ArgumentError("calcium state contains non-finite values");
    }
}

KalmanPass kalman_filter(std::span<const double> y, double b, double gamma, double sigma2, double tau2,
                         std::span<const double> a, double C0) {
    if (!(sigma2 > 0.0) || !(tau2 > 0.0) || !(C0 > 0.0)) {
        throw ArgumentError("Kalman filter needs positive variances");
    }
    if (a.size() != y.size()) {
        throw ArgumentError("amplitude row and observation row differ in length");
    }
    const std::size_t T = y.size();
    KalmanPass k;
    k.q = Vector::Zero(static_cast<Eigen::Index>(T + 1));
    k.R = Vector::Zero(static_cast<Eigen::Index>(T + 1));
    k.m = Vector::Zero(static_cast<Eigen::Index>(T + 1));
    k.C = Vector::Zero(static_cast<Eigen::Index>(T + 1));
    k.C[0] = C0;
    for (std::size_t t = 1; t <= T; ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        const double q = gamma * k.m[i - 1] + a[t - 1];
        const double R = gamma * gamma * k.C[i - 1] + tau2;
        const double gain = R / (R + sigma2);
        k.q[i] = q;
        k.R[i] = R;
        k.m[i] = q + gain * (y[t - 1] - b - q);
        // R - R^2/(R + sigma2), written to stay positive.
        k.C[i] = R * sigma2 / (R + sigma2);
    }
    return k;
}

BackwardKernel backward_kernel(const KalmanPass& k, double gamma, double tau2) {
    const Eigen::Index T = k.m.size() - 1;
    BackwardKernel b;
    b.offset.resize(T + 1);
    b.gain = Vector::Zero(T + 1);
    b.var.resize(T + 1);
    b.offset[T] = k.m[T];
    b.var[T] = k.C[T];
    for (Eigen::Index t = 0; t < T; ++t) {
        const double g = gamma * k.C[t] / k.R[t + 1];
        b.gain[t] = g;
        b.offset[t] = k.m[t] - g * k.q[t + 1];
        // C - gamma^2 C^2 / R = C tau2 / R since R = gamma^2 C + tau2.
        b.var[t] = k.C[t] * tau2 / k.R[t + 1];
    }
    return b;
}

GaussianMoments backward_path_moments(const BackwardKernel& b) {
    const Eigen::Index T = b.offset.size() - 1;
    GaussianMoments g;
    g.mean.resize(T + 1);
    g.cov = Matrix::Zero(T + 1, T + 1);
    g.mean[T] = b.offset[T];
    g.cov(T, T) = b.var[T];
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        g.mean[t] = b.offset[t] + b.gain[t] * g.mean[t + 1];
        for (Eigen::Index s = t + 1; s <= T; ++s) {
            g.cov(t, s) = g.cov(s, t) = b.gain[t] * g.cov(t + 1, s);
        }
        g.cov(t, t) = b.gain[t] * b.gain[t] * g.cov(t + 1, t + 1) + b.var[t];
    }
    return g;
}

Vector ffbs_sample_calcium(std::span<const double> y, double b, double gamma, double sigma2, double tau2,
                           std::span<const double> a, double C0, Rng& rng) {
    const BackwardKernel k = backward_kernel(kalman_filter(y, b, gamma, sigma2, tau2, a, C0), gamma, tau2);
    const auto T = static_cast<Eigen::Index>(y.size());
    Vector c(T + 1);
    c[T] = k.offset[T] + std::sqrt(k.var[T]) * rng.normal();
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        c[t] = k.offset[t] + k.gain[t] * c[t + 1] + std::sqrt(k.var[t]) * rng.normal();
    }
    return c;
}

NormalParams baseline_posterior(std::span<const double> y, std::span<const double> c, double sigma2, double b0,
                                double B0) {
    if (!(B0 > 0.0)) {
        throw ArgumentError("B0 must be positive");
    }
    if (y.empty() || c.size() != y.size()) {
        throw ArgumentError("baseline update needs matching, nonempty y and c");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        sum += y[t] - c[t];
    }
    const double T = static_cast<double>(y.size());
    const double w = sigma2 * B0 / (sigma2 + T * B0);
    return {w * (sum / sigma2 + b0 / B0), w};
}

double sample_baseline(std::span<const double> y, std::span<const double> c, double sigma2, double b0, double B0,
                       Rng& rng) {
    const NormalParams p = baseline_posterior(y, c, sigma2, b0, B0);
    return p.mean + std::sqrt(p.var) * rng.normal();
}

GammaParams sigma2_posterior(const Matrix& y, const Vector& b, const Matrix& c, double alpha_sigma,
                             double beta_sigma) {
    const Eigen::Index n = y.rows();
    const Eigen::Index T = y.cols();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < T; ++t) {
            const double r = y(i, t) - b[i] - c(i, t + 1);
            ss += r * r;
        }
    }
    return {alpha_sigma + 0.5 * static_cast<double>(n * T), beta_sigma + 0.5 * ss};
}

double sample_sigma2(const Matrix& y, const Vector& b, const Matrix& c, double alpha_sigma, double beta_sigma,
                     Rng& rng, double rate_multiplier) {
    const GammaParams p = sigma2_posterior(y, b, c, alpha_sigma, beta_sigma);
    return 1.0 / rng.gamma(p.shape, p.rate * rate_multiplier);
}

GammaParams tau2_posterior(const Matrix& c, double gamma, const Matrix& a, double alpha_tau, double beta_tau) {
    const Eigen::Index n = a.rows();
    const Eigen::Index T = a.cols();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 1; t <= T; ++t) {
            const double r = c(i, t) - gamma * c(i, t - 1) - a(i, t - 1);
            ss += r * r;
        }
    }
    return {alpha_tau + 0.5 * static_cast<double>(n * T), beta_tau + 0.5 * ss};
}

double sample_tau2(const Matrix& c, double gamma, const Matrix& a, double alpha_tau, double beta_tau, Rng& rng) {
    const GammaParams p = tau2_posterior(c, gamma, a, alpha_tau, beta_tau);
    return 1.0 / rng.gamma(p.shape, p.rate);
}

DecayStats decay_stats(const Matrix& c, const Matrix& a) {
    DecayStats s;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index t = 1; t <= a.cols(); ++t) {
            const double prev = c(i, t - 1);
            s.spp += prev * prev;
            s.spc += prev * (c(i, t) - a(i, t - 1));
        }
    }
    return s;
}

double gamma_log_target(double gamma, const DecayStats& stats, double tau2, double alpha_gamma,
                        double beta_gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        return -INFINITY;
    }
    return -(gamma * gamma * stats.spp - 2.0 * gamma * stats.spc) / (2.0 * tau2) +
           (alpha_gamma - 1.0) * std::log(gamma) + (beta_gamma - 1.0) * std::log1p(-gamma);
}

double sample_gamma(double gamma, const DecayStats& stats, double tau2, double alpha_gamma, double beta_gamma,
                    double step, Rng& rng, bool* accepted) {
    const double u = std::log(gamma) - std::log1p(-gamma);
    const double u_new = u + step * rng.normal();
    const double g_new = 1.0 / (1.0 + std::exp(-u_new));
    // log |d gamma / d u| = log gamma + log(1 - gamma).
    auto log_jacobian = [](double g) { return std::log(g) + std::log1p(-g); };
    bool ok = false;
    if (g_new > 0.0 && g_new < 1.0) {
        const double log_ratio = gamma_log_target(g_new, stats, tau2, alpha_gamma, beta_gamma) + log_jacobian(g_new) -
                                 gamma_log_target(gamma, stats, tau2, alpha_gamma, beta_gamma) - log_jacobian(gamma);
        ok = std::log(rng.uniform()) < log_ratio;
    }
    if (accepted) {
        *accepted = ok;
    }
    return ok ? g_new : gamma;
}

} // namespace calens
