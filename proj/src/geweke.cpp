#include "calens/geweke.hpp"

#include "calens/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace calens {

namespace {

constexpr std::size_t kQuantities = 10;
const std::array<const char*, kQuantities> kNames = {"gamma",     "precision_sigma", "precision_tau", "spike_rate",
                                                     "mean_a",    "mean_b",          "occupied",      "mean_stilde",
                                                     "mean_alpha", "mean_c"};

std::array<double, kQuantities> functionals(const ModelState& st) {
    const auto& cal = st.calcium;
    return {cal.gamma,
            1.0 / cal.sigma2,
            1.0 / cal.tau2,
            st.spikes.s.cast<double>().mean(),
            st.spikes.a.mean(),
            cal.b.mean(),
            static_cast<double>(st.occupied_clusters()),
            st.clusters.gp_atoms.mean(),
            st.clusters.psbp_alpha.mean(),
            cal.c.mean()};
}

} // namespace

bool GewekeReport::passed(double level) const {
    return std::all_of(stats.begin(), stats.end(), [&](const GewekeStat& s) { return s.p_adjusted > level; });
}

double GewekeReport::min_p() const {
    double m = 1.0;
    for (const auto& s : stats) {
        m = std::min(m, s.p);
    }
    return m;
}

GewekeReport geweke_check(const Hyperparams& hyper, const GewekeOptions& opt) {
    if (opt.cycles < 1) {
        throw ArgumentError("Geweke check needs at least one cycle");
    }
    if (opt.neurons < 1 || opt.neurons > 5 || opt.frames < 2 || opt.frames > 10) {
        throw ArgumentError("Geweke check is meant for n <= 5 and 2 <= T <= 10");
    }
    if (opt.chain_length < 1 || opt.cycles < 2L * opt.chain_length) {
        throw ArgumentError("Geweke check needs chain_length >= 1 and at least two chains");
    }
    Rng loc_rng(opt.seed, StreamKind::Data, 0);
    std::vector<Point2> locations(static_cast<std::size_t>(opt.neurons));
    for (auto& p : locations) {
        p = {loc_rng.normal(), loc_rng.normal()};
    }
    GibbsSampler sampler(Matrix::Zero(opt.neurons, opt.frames), locations, hyper, opt.seed, 1, opt.hooks);

    constexpr std::size_t kStats = 2 * kQuantities;
    auto expand = [](const std::array<double, kQuantities>& f) {
        std::array<double, kStats> g{};
        for (std::size_t q = 0; q < kQuantities; ++q) {
            g[q] = f[q];
            g[kQuantities + q] = f[q] * f[q];
        }
        return g;
    };

    // Marginal-conditional simulator: independent prior draws.
    Rng prior_rng(opt.seed, StreamKind::Replicate, 1);
    std::array<double, kStats> mc_sum{}, mc_sq{};
    for (long c = 0; c < opt.cycles; ++c) {
        const auto g = expand(functionals(sampler.sample_prior(prior_rng)));
        for (std::size_t s = 0; s < kStats; ++s) {
            mc_sum[s] += g[s];
            mc_sq[s] += g[s] * g[s];
        }
    }

    // Successive-conditional simulator, run as independent short chains that
    // each start from an exact prior draw. Every visited state is then
    // marginally a prior draw, and the chain means are independent, so the
    // standard error needs no autocorrelation estimate. A single long chain
    // mixes too slowly here: the data pin c and c pins s.
    Rng data_rng(opt.seed, StreamKind::Replicate, 2);
    const long length = opt.chain_length;
    const long chains = opt.cycles / length;
    std::vector<std::array<double, kStats>> chain_sum(static_cast<std::size_t>(chains));
    for (long m = 0; m < chains; ++m) {
        sampler.state() = sampler.sample_prior(data_rng);
        auto& acc = chain_sum[static_cast<std::size_t>(m)];
        for (long c = 0; c < length; ++c) {
            sampler.set_data(sampler.sample_data(sampler.state(), data_rng));
            sampler.sweep();
            const auto g = expand(functionals(sampler.state()));
            for (std::size_t s = 0; s < kStats; ++s) {
                acc[s] += g[s];
            }
        }
    }
    const long used = chains * length;

    GewekeReport report;
    const double M = static_cast<double>(opt.cycles);
    const double B = static_cast<double>(chains);
    for (std::size_t s = 0; s < kStats; ++s) {
        GewekeStat st;
        st.name = std::string(kNames[s % kQuantities]) + (s < kQuantities ? "" : "^2");
        st.prior_mean = mc_sum[s] / M;
        const double mc_var = std::max(0.0, mc_sq[s] / M - st.prior_mean * st.prior_mean) * M / (M - 1.0);
        double total = 0.0;
        for (const auto& b : chain_sum) {
            total += b[s];
        }
        st.chain_mean = total / static_cast<double>(used);
        double bvar = 0.0;
        for (const auto& b : chain_sum) {
            const double d = b[s] / static_cast<double>(length) - st.chain_mean;
            bvar += d * d;
        }
        bvar /= (B - 1.0);
        const double se = std::sqrt(mc_var / M + bvar / B);
        st.z = se > 0.0 ? (st.prior_mean - st.chain_mean) / se : 0.0;
        st.p = std::erfc(std::abs(st.z) / std::numbers::sqrt2);
        st.p_adjusted = std::min(1.0, st.p * static_cast<double>(kStats));
        report.stats.push_back(st);
    }
    return report;
}

} // namespace calens
