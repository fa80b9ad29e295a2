#include "calens/ensemble_clustering.hpp"

#include "calens/errors.hpp"
#include "calens/numerics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace calens {

Matrix proximity_matrix(std::span<const Point2> locations, double theta) {
    if (!(theta > 0.0) || !std::isfinite(theta)) {
        throw ArgumentError("theta must be positive and finite");
    }
    const auto n = static_cast<Eigen::Index>(locations.size());
    for (const Point2& p : locations) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw ArgumentError("neuron locations must be finite");
        }
    }
    Matrix S(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        S(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double dx = locations[static_cast<std::size_t>(i)].x - locations[static_cast<std::size_t>(j)].x;
            const double dy = locations[static_cast<std::size_t>(i)].y - locations[static_cast<std::size_t>(j)].y;
            S(i, j) = S(j, i) = std::exp(-theta * (dx * dx + dy * dy));
        }
    }
    return S;
}

double default_theta(std::span<const Point2> locations) {
    std::vector<double> d2;
    for (std::size_t i = 0; i < locations.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double dx = locations[i].x - locations[j].x;
            const double dy = locations[i].y - locations[j].y;
            d2.push_back(dx * dx + dy * dy);
        }
    }
    if (d2.empty()) {
        return 1.0;
    }
    const auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
    std::nth_element(d2.begin(), mid, d2.end());
    double med = *mid;
    if (d2.size() % 2 == 0) {
        med = 0.5 * (med + *std::max_element(d2.begin(), mid));
    }
    if (!(med > 0.0)) {
        throw ArgumentError("cannot pick theta: median pairwise distance is zero");
    }
    return -std::log(0.05) / med;
}

Vector psbp_log_weights(std::span<const double> alpha) {
    const auto K = static_cast<Eigen::Index>(alpha.size());
    Vector lw(K);
    double rest = 0.0;  // sum_{r<k} log(1 - Phi(alpha_r))
    for (Eigen::Index k = 0; k + 1 < K; ++k) {
        const double a = alpha[static_cast<std::size_t>(k)];
        lw[k] = norm_log_cdf(a) + rest;
        rest += norm_log_cdf(-a);
    }
    if (K > 0) {
        lw[K - 1] = rest;
    }
    return lw;
}

Vector psbp_weights(std::span<const double> alpha) {
    const auto K = static_cast<Eigen::Index>(alpha.size());
    Vector w(K);
    double rest = 1.0;
    double used = 0.0;
    for (Eigen::Index k = 0; k + 1 < K; ++k) {
        const double a = alpha[static_cast<std::size_t>(k)];
        w[k] = norm_cdf(a) * rest;
        used += w[k];
        rest *= norm_cdf(-a);
    }
    if (K > 0) {
        w[K - 1] = std::max(0.0, 1.0 - used);
    }
    return w;
}

AtomLikelihood atom_likelihood(const Matrix& gp_atoms) {
    AtomLikelihood lik;
    lik.base = Vector::Zero(gp_atoms.rows());
    lik.lift.resize(gp_atoms.rows(), gp_atoms.cols());
    for (Eigen::Index k = 0; k < gp_atoms.rows(); ++k) {
        for (Eigen::Index t = 0; t < gp_atoms.cols(); ++t) {
            const double on = norm_log_cdf(gp_atoms(k, t));
            const double off = norm_log_cdf(-gp_atoms(k, t));
            lik.base[k] += off;
            lik.lift(k, t) = on - off;
        }
    }
    return lik;
}

namespace {

void allocation_log_probs(std::span<const int> s, const Vector& log_pi, const AtomLikelihood& lik, Vector& out) {
    out = log_pi + lik.base;
    for (std::size_t t = 0; t < s.size(); ++t) {
        if (s[t] != 0) {
            out += lik.lift.col(static_cast<Eigen::Index>(t));
        }
    }
}

} // namespace

Vector cluster_allocation_probs(std::span<const int> s, const Vector& log_pi, const AtomLikelihood& lik) {
    Vector lp;
    allocation_log_probs(s, log_pi, lik, lp);
    const double z = log_sum_exp({lp.data(), static_cast<std::size_t>(lp.size())});
    if (!std::isfinite(z)) {
        throw NumericError("cluster allocation weights vanish", "step7a");
    }
    return (lp.array() - z).exp();
}

int sample_cluster_allocation(std::span<const int> s, const Vector& log_pi, const AtomLikelihood& lik, Rng& rng) {
    thread_local Vector lp;
    allocation_log_probs(s, log_pi, lik, lp);
    try {
        return static_cast<int>(rng.categorical_log({lp.data(), static_cast<std::size_t>(lp.size())}));
    } catch (const NumericError&) {
        throw NumericError("cluster allocation weights vanish", "step7a");
    }
}

ProximityPosterior::ProximityPosterior(const Matrix& proximity, double mu_alpha, double sigma2_alpha)
    : mu_(mu_alpha) {
    if (!(sigma2_alpha > 0.0)) {
        throw ArgumentError("sigma2_alpha must be positive");
    }
    Eigen::MatrixXd S = proximity;
    S.diagonal().array() += kCovJitter;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    if (eig.info() != Eigen::Success) {
        throw NumericError("eigendecomposition of the proximity matrix failed; increase the jitter", "step7b");
    }
    const Eigen::MatrixXd& U = eig.eigenvectors();
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(kCovJitter);
    const double s = sigma2_alpha;
    const Eigen::VectorXd shrink = lam.array() / (lam.array() + s);
    const Eigen::VectorXd post_var = lam.array() * s / (lam.array() + s);
    shrink_ = U * shrink.asDiagonal() * U.transpose();
    post_root_ = U * post_var.cwiseSqrt().asDiagonal();
    prior_root_ = U * lam.cwiseSqrt().asDiagonal();
    cov_ = U * post_var.asDiagonal() * U.transpose();
}

Vector ProximityPosterior::mean(const Vector& z) const {
    return (shrink_ * (z.array() - mu_).matrix()).array() + mu_;
}

Vector ProximityPosterior::sample(const Vector& z, Rng& rng) const {
    Vector eps(z.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i) {
        eps[i] = rng.normal();
    }
    return mean(z) + post_root_ * eps;
}

Vector ProximityPosterior::sample_prior(Rng& rng) const {
    Vector eps(prior_root_.cols());
    for (Eigen::Index i = 0; i < eps.size(); ++i) {
        eps[i] = rng.normal();
    }
    return (prior_root_ * eps).array() + mu_;
}

Vector sample_psbp_latent_row(int k, int K, std::span<const int> zeta, std::span<const double> alpha_row,
                              Rng& rng) {
    Vector z(static_cast<Eigen::Index>(zeta.size()));
    for (std::size_t i = 0; i < zeta.size(); ++i) {
        const double m = alpha_row[i];
        double v;
        if (k < zeta[i]) {
            v = rng.truncated_normal_negative(m);
        } else if (k == zeta[i] && k < K - 1) {
            v = rng.truncated_normal_positive(m);
        } else {
            v = m + rng.normal();
        }
        z[static_cast<Eigen::Index>(i)] = v;
    }
    return z;
}

Matrix gp_covariance(std::size_t T, double variance, double lengthscale) {
    if (!(variance > 0.0) || !(lengthscale > 0.0)) {
        throw ArgumentError("GP kernel variance and lengthscale must be positive");
    }
    const auto n = static_cast<Eigen::Index>(T);
    Matrix omega(n, n);
    const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
    for (Eigen::Index t = 0; t < n; ++t) {
        for (Eigen::Index u = 0; u < n; ++u) {
            const double d = static_cast<double>(t - u);
            omega(t, u) = variance * std::exp(-d * d * inv);
        }
        omega(t, t) += kCovJitter;
    }
    return omega;
}

VecchiaFactor vecchia_coefficients(const Matrix& omega, std::size_t p) {
    const auto T = static_cast<std::size_t>(omega.rows());
    if (T >= 2 && (p < 1 || p > T - 1)) {
        throw ArgumentError("Vecchia depth p must satisfy 1 <= p <= T-1");
    }
    VecchiaFactor f;
    f.T = T;
    f.p = p;
    f.weights.resize(T);
    f.cond_var.resize(static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t h = std::min(t, p);
        const auto ti = static_cast<Eigen::Index>(t);
        if (h == 0) {
            f.cond_var[ti] = omega(ti, ti);
            continue;
        }
        // Factor the block over (t-h, ..., t-1, t). With L11 the leading h x h
        // factor and l21 its last row, w = L11^{-T} l21 and the conditional
        // variance is the squared last diagonal entry, which stays positive.
        const auto start = static_cast<Eigen::Index>(t - h);
        const auto hh = static_cast<Eigen::Index>(h);
        const Eigen::MatrixXd block = omega.block(start, start, hh + 1, hh + 1);
        Eigen::LLT<Eigen::MatrixXd> llt(block);
        if (llt.info() != Eigen::Success) {
            throw NumericError("singular GP conditioning block in the Vecchia factor", "step7c");
        }
        const Eigen::MatrixXd L = llt.matrixL();
        const Eigen::VectorXd l21 = L.block(hh, 0, 1, hh).transpose();
        const Eigen::VectorXd w =
            L.topLeftCorner(hh, hh).transpose().triangularView<Eigen::Upper>().solve(l21);
        f.weights[t].assign(w.data(), w.data() + h);
        const double v = L(hh, hh) * L(hh, hh);
        if (!(v > 0.0)) {
            throw NumericError("non-positive Vecchia conditional variance", "step7c");
        }
        f.cond_var[ti] = v;
    }
    return f;
}

BandedCholesky banded_cholesky(const Matrix& a, std::size_t p) {
    const Eigen::Index T = a.rows();
    const auto P = static_cast<Eigen::Index>(p);
    BandedCholesky L;
    L.p = p;
    L.band = Matrix::Zero(T, P + 1);
    for (Eigen::Index j = 0; j < T; ++j) {
        for (Eigen::Index i = j; i < std::min(T, j + P + 1); ++i) {
            double sum = a(i, i - j);
            for (Eigen::Index k = std::max<Eigen::Index>(0, i - P); k < j; ++k) {
                sum -= L.band(i, i - k) * L.band(j, j - k);
            }
            if (i == j) {
                if (!(sum > 0.0)) {
                    throw NumericError("banded Cholesky factorization failed", "step7c");
                }
                L.band(j, 0) = std::sqrt(sum);
            } else {
                L.band(i, i - j) = sum / L.band(j, 0);
            }
        }
    }
    return L;
}

void BandedCholesky::solve_lower(Vector& x) const {
    const Eigen::Index T = band.rows();
    const auto P = static_cast<Eigen::Index>(p);
    for (Eigen::Index i = 0; i < T; ++i) {
        double v = x[i];
        for (Eigen::Index k = std::max<Eigen::Index>(0, i - P); k < i; ++k) {
            v -= band(i, i - k) * x[k];
        }
        x[i] = v / band(i, 0);
    }
}

void BandedCholesky::solve_upper(Vector& x) const {
    const Eigen::Index T = band.rows();
    const auto P = static_cast<Eigen::Index>(p);
    for (Eigen::Index i = T - 1; i >= 0; --i) {
        double v = x[i];
        for (Eigen::Index k = i + 1; k < std::min(T, i + P + 1); ++k) {
            v -= band(k, k - i) * x[k];
        }
        x[i] = v / band(i, 0);
    }
}

GpAtomSampler::GpAtomSampler(VecchiaFactor factor, double mu, int max_members)
    : factor_(std::move(factor)), mu_(mu) {
    const auto T = static_cast<Eigen::Index>(factor_.T);
    const auto P = static_cast<Eigen::Index>(factor_.p);
    q_band_ = Matrix::Zero(T, P + 1);
    // Q = sum_t r_t r_t^T / d_t with r_t the t-th row of (I - B).
    std::vector<std::pair<Eigen::Index, double>> row;
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& w = factor_.weights[static_cast<std::size_t>(t)];
        const auto h = static_cast<Eigen::Index>(w.size());
        row.clear();
        for (Eigen::Index j = 0; j < h; ++j) {
            row.emplace_back(t - h + j, -w[static_cast<std::size_t>(j)]);
        }
        row.emplace_back(t, 1.0);
        const double inv_d = 1.0 / factor_.cond_var[t];
        for (const auto& [u, ru] : row) {
            for (const auto& [v, rv] : row) {
                if (v <= u) {
                    q_band_(u, u - v) += ru * rv * inv_d;
                }
            }
        }
    }
    factors_.reserve(static_cast<std::size_t>(std::max(0, max_members) + 1));
    for (int m = 0; m <= std::max(0, max_members); ++m) {
        Matrix a = q_band_;
        a.col(0).array() += static_cast<double>(m);
        factors_.push_back(banded_cholesky(a, factor_.p));
    }
}

const BandedCholesky& GpAtomSampler::factor_for(int members) const {
    if (members < 0 || static_cast<std::size_t>(members) >= factors_.size()) {
        throw ArgumentError("member count outside the precomputed GP factor range");
    }
    return factors_[static_cast<std::size_t>(members)];
}

Matrix GpAtomSampler::precision() const {
    const Eigen::Index T = q_band_.rows();
    Matrix Q = Matrix::Zero(T, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index d = 0; d < q_band_.cols() && d <= t; ++d) {
            Q(t, t - d) = Q(t - d, t) = q_band_(t, d);
        }
    }
    return Q;
}

Vector GpAtomSampler::posterior_mean(int members, const Vector& S) const {
    // m = mu 1 + P^{-1} (S - members mu 1), since Q 1 mu cancels against P mu 1.
    const BandedCholesky& L = factor_for(members);
    Vector x = S.array() - static_cast<double>(members) * mu_;
    L.solve_lower(x);
    L.solve_upper(x);
    return x.array() + mu_;
}

Matrix GpAtomSampler::posterior_covariance(int members) const {
    const BandedCholesky& L = factor_for(members);
    const auto T = static_cast<Eigen::Index>(factor_.T);
    Matrix cov(T, T);
    for (Eigen::Index j = 0; j < T; ++j) {
        Vector e = Vector::Unit(T, j);
        L.solve_lower(e);
        L.solve_upper(e);
        cov.col(j) = e;
    }
    return cov;
}

Vector GpAtomSampler::sample(int members, const Vector& S, Rng& rng) const {
    const BandedCholesky& L = factor_for(members);
    Vector m = posterior_mean(members, S);
    Vector eps(m.size());
    for (Eigen::Index t = 0; t < eps.size(); ++t) {
        eps[t] = rng.normal();
    }
    L.solve_upper(eps);
    return m + eps;
}

Vector GpAtomSampler::sample_prior(Rng& rng) const {
    const auto T = static_cast<Eigen::Index>(factor_.T);
    Vector s(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& w = factor_.weights[static_cast<std::size_t>(t)];
        const auto h = static_cast<Eigen::Index>(w.size());
        double mean = mu_;
        for (Eigen::Index j = 0; j < h; ++j) {
            mean += w[static_cast<std::size_t>(j)] * (s[t - h + j] - mu_);
        }
        s[t] = mean + std::sqrt(factor_.cond_var[t]) * rng.normal();
    }
    return s;
}

Vector sample_gp_latent_sums(std::span<const int> members, const IntMatrix& s, std::span<const double> atom,
                             Rng& rng) {
    const auto T = static_cast<Eigen::Index>(atom.size());
    Vector S = Vector::Zero(T);
    for (int i : members) {
        for (Eigen::Index t = 0; t < T; ++t) {
            const double m = atom[static_cast<std::size_t>(t)];
            S[t] += s(i, t) != 0 ? rng.truncated_normal_positive(m) : rng.truncated_normal_negative(m);
        }
    }
    return S;
}

} // namespace calens
