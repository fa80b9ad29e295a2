#include "calens/random.hpp"

#include "calens/errors.hpp"
#include "calens/numerics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace calens {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr double kTailSwitch = 5.0;

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, StreamKind kind, std::uint64_t index) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
    h = splitmix64(h ^ index);
    return h;
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng::Rng(std::uint64_t seed, StreamKind kind, std::uint64_t index)
    : engine_(derive_seed(seed, kind, index)) {}

double Rng::uniform() {
    // 53 random bits mapped to the centre of 2^53 bins: never 0, never 1.
    const std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    return normal_(engine_);
}

double Rng::gamma(double shape, double rate) {
    std::gamma_distribution<double> dist(shape, 1.0 / rate);
    return dist(engine_);
}

double Rng::beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    if (x + y == 0.0) {
        // Both shapes tiny enough to underflow; fall back on the mean.
        return a / (a + b);
    }
    return x / (x + y);
}

std::size_t Rng::uniform_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

double sample_standard_normal_above(double lower, Rng& rng) {
    if (lower <= kTailSwitch) {
        const double upper_mass = 0.5 * std::erfc(lower / std::numbers::sqrt2);
        return norm_upper_quantile(rng.uniform() * upper_mass);
    }
    const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
    for (;;) {
        const double z = lower - std::log(rng.uniform()) / rate;
        const double d = z - rate;
        if (rng.uniform() <= std::exp(-0.5 * d * d)) {
            return z;
        }
    }
}

double Rng::truncated_normal_positive(double mean) {
    return mean + sample_standard_normal_above(-mean, *this);
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
    const double m = *std::max_element(log_weights.begin(), log_weights.end());
    if (!std::isfinite(m)) {
        throw NumericError("categorical draw with no finite log-weight");
    }
    thread_local Eigen::ArrayXd weights;
    const Eigen::Map<const Eigen::ArrayXd> lw(log_weights.data(), static_cast<Eigen::Index>(log_weights.size()));
    weights = (lw - m).exp();
    return categorical({weights.data(), log_weights.size()});
}

std::size_t Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw NumericError("categorical draw with zero total weight");
    }
    double u = uniform() * total;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        u -= weights[k];
        if (u <= 0.0) {
            return k;
        }
    }
    for (std::size_t k = weights.size(); k-- > 0;) {
        if (weights[k] > 0.0) {
            return k;
        }
    }
    return weights.size() - 1;
}

} // namespace calens
