#pragma once

#include "calens/hyperparams.hpp"
#include "calens/sampler.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace calens {

struct GewekeOptions {
    int neurons = 3;
    int frames = 8;
    long cycles = 20000;
    long chain_length = 10;  // sweeps per successive-conditional chain
    std::uint64_t seed = 1;
    SamplerHooks hooks;
};

struct GewekeStat {
    std::string name;
    double prior_mean = 0.0;  // marginal-conditional simulator
    double chain_mean = 0.0;  // successive-conditional simulator
    double z = 0.0;
    double p = 1.0;           // two-sided, unadjusted
    double p_adjusted = 1.0;  // Bonferroni over all statistics
};

struct GewekeReport {
    std::vector<GewekeStat> stats;

    /// Every Bonferroni-adjusted p-value exceeds `level`.
    bool passed(double level = 0.01) const;
    double min_p() const;
};

/// Joint-distribution test: compares first and second moments of ten
/// functionals (gamma, both precisions, spike rate, mean amplitude, mean
/// baseline, occupied clusters, mean GP atom, mean PSBP latent, mean calcium)
/// between independent prior draws and chains alternating y ~ p(y | state)
/// with one Gibbs sweep. There are cycles / chain_length such chains, each
/// started from a prior draw, and their means give the standard error.
/// Throws ArgumentError for cycles < 1 or dimensions beyond n <= 5, T <= 10.
GewekeReport geweke_check(const Hyperparams& hyper, const GewekeOptions& options);

} // namespace calens
