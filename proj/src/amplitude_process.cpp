#include "calens/amplitude_process.hpp"

#include "calens/errors.hpp"
#include "calens/numerics.hpp"

#include <cmath>

namespace calens {

Vector stick_weights(const Vector& sticks) {
    Vector w(sticks.size());
    double rest = 1.0;
    for (Eigen::Index j = 0; j < sticks.size(); ++j) {
        w[j] = sticks[j] * rest;
        rest *= 1.0 - sticks[j];
    }
    return w;
}

namespace {

// log weights of xi = 0..J into `out` (length J+1).
void allocation_log_weights(double r, double log_on, double log_off, double tau2, const Vector& amp_atoms,
                            const Vector& log_omega, double* out) {
    const double inv = 0.5 / tau2;
    out[0] = log_off - r * r * inv;
    for (Eigen::Index j = 0; j < amp_atoms.size(); ++j) {
        const double d = r - amp_atoms[j];
        out[j + 1] = log_on + log_omega[j] - d * d * inv;
    }
}

} // namespace

std::vector<double> spike_allocation_probs(double r, double stilde, double tau2, const Vector& amp_atoms,
                                           const Vector& log_omega) {
    std::vector<double> lw(static_cast<std::size_t>(amp_atoms.size()) + 1);
    allocation_log_weights(r, norm_log_cdf(stilde), norm_log_cdf(-stilde), tau2, amp_atoms, log_omega, lw.data());
    const double z = log_sum_exp(lw);
    if (!std::isfinite(z)) {
        throw NumericError("spike allocation weights vanish", "step6a");
    }
    for (double& v : lw) {
        v = std::exp(v - z);
    }
    return lw;
}

void sample_spike_allocations_row(std::span<const double> c, double gamma, double tau2,
                                  std::span<const double> log_on, std::span<const double> log_off,
                                  const Vector& amp_atoms, const Vector& log_omega, std::span<int> xi, std::span<int> s, std::span<double> a, Rng& rng) {
    const std::size_t T = xi.size();
    thread_local std::vector<double> lw;
    lw.resize(static_cast<std::size_t>(amp_atoms.size()) + 1);
    for (std::size_t t = 0; t < T; ++t) {
        const double r = c[t + 1] - gamma * c[t];
        allocation_log_weights(r, log_on[t], log_off[t], tau2, amp_atoms, log_omega, lw.data());
        std::size_t j;
        try {
            j = rng.categorical_log(lw);
        } catch (const NumericError&) {
            throw NumericError("spike allocation weights vanish", "step6a");
        }
        xi[t] = static_cast<int>(j);
        s[t] = j > 0 ? 1 : 0;
        a[t] = j > 0 ? amp_atoms[static_cast<Eigen::Index>(j) - 1] : 0.0;
    }
}

void sample_spike_allocations(const Matrix& c, double gamma, double tau2, const Matrix& stilde, SpikeState& spikes,
                              Rng& rng) {
    const Vector log_omega = stick_weights(spikes.dp_sticks).array().log();
    const Eigen::Index T = spikes.xi.cols();
    const Matrix log_on = stilde.unaryExpr([](double v) { return norm_log_cdf(v); });
    const Matrix log_off = stilde.unaryExpr([](double v) { return norm_log_cdf(-v); });
    for (Eigen::Index i = 0; i < spikes.xi.rows(); ++i) {
        sample_spike_allocations_row({c.row(i).data(), static_cast<std::size_t>(T + 1)}, gamma, tau2,
                                     {log_on.row(i).data(), static_cast<std::size_t>(T)},
                                     {log_off.row(i).data(), static_cast<std::size_t>(T)}, spikes.amp_atoms, log_omega,
                                     {spikes.xi.row(i).data(), static_cast<std::size_t>(T)},
                                     {spikes.s.row(i).data(), static_cast<std::size_t>(T)},
                                     {spikes.a.row(i).data(), static_cast<std::size_t>(T)}, rng);
    }
}

AtomStats atom_stats(const IntMatrix& xi, const Matrix& c, double gamma, int J) {
    AtomStats st;
    st.count.assign(static_cast<std::size_t>(J), 0);
    st.sum_r.assign(static_cast<std::size_t>(J), 0.0);
    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
        for (Eigen::Index t = 0; t < xi.cols(); ++t) {
            const int j = xi(i, t);
            if (j > 0) {
                st.count[static_cast<std::size_t>(j - 1)] += 1;
                st.sum_r[static_cast<std::size_t>(j - 1)] += c(i, t + 1) - gamma * c(i, t);
            }
        }
    }
    return st;
}

double amplitude_log_target(double value, long count, double sum_r, double tau2, double alpha_a, double beta_a,
                            double a_bar) {
    const double x = value - a_bar;
    if (!(x > 0.0)) {
        return -INFINITY;
    }
    // sum (r - v)^2 = sum r^2 - 2 v sum r + count v^2; the first term is constant in v.
    const double lik = -(static_cast<double>(count) * value * value - 2.0 * value * sum_r) / (2.0 * tau2);
    return lik + (alpha_a - 1.0) * std::log(x) - beta_a * x;
}

int sample_amplitude_atoms(Vector& amp_atoms, const AtomStats& stats, double tau2, double alpha_a, double beta_a,
                           double a_bar, double step, Rng& rng, int* attempted) {
    int accepted = 0;
    int tried = 0;
    for (Eigen::Index j = 0; j < amp_atoms.size(); ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (stats.count[js] == 0) {
            amp_atoms[j] = a_bar + rng.gamma(alpha_a, beta_a);
            continue;
        }
        ++tried;
        const double cur = amp_atoms[j];
        const double u = std::log(cur - a_bar);
        const double u_new = u + step * rng.normal();
        const double prop = a_bar + std::exp(u_new);
        // Jacobian of value = a_bar + exp(u) contributes u.
        const double log_ratio =
            amplitude_log_target(prop, stats.count[js], stats.sum_r[js], tau2, alpha_a, beta_a, a_bar) + u_new -
            amplitude_log_target(cur, stats.count[js], stats.sum_r[js], tau2, alpha_a, beta_a, a_bar) - u;
        if (prop > a_bar && std::log(rng.uniform()) < log_ratio) {
            amp_atoms[j] = prop;
            ++accepted;
        }
    }
    if (attempted) {
        *attempted = tried;
    }
    return accepted;
}

void refresh_amplitudes(SpikeState& spikes) {
    for (Eigen::Index i = 0; i < spikes.xi.rows(); ++i) {
        for (Eigen::Index t = 0; t < spikes.xi.cols(); ++t) {
            const int j = spikes.xi(i, t);
            spikes.a(i, t) = j > 0 ? spikes.amp_atoms[j - 1] : 0.0;
        }
    }
}

Vector sample_dp_sticks(std::span<const long> counts, double alpha_dp, Rng& rng) {
    const auto J = static_cast<Eigen::Index>(counts.size());
    Vector v(J);
    double tail = 0.0;
    std::vector<double> tails(counts.size(), 0.0);
    for (std::size_t j = counts.size(); j-- > 0;) {
        tails[j] = tail;
        tail += static_cast<double>(counts[j]);
    }
    for (Eigen::Index j = 0; j + 1 < J; ++j) {
        const auto js = static_cast<std::size_t>(j);
        v[j] = rng.beta(1.0 + static_cast<double>(counts[js]), alpha_dp + tails[js]);
        // Keep log(1 - v) finite for the remaining sticks.
        v[j] = std::min(v[j], 1.0 - 1e-15);
    }
    if (J > 0) {
        v[J - 1] = 1.0;
    }
    return v;
}

} // namespace calens
