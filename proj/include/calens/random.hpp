#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace calens {

/// Kinds of entity that own an independent random stream. A stream is fully
/// determined by (run seed, kind, index), so the draws an entity receives do
/// not depend on how work is scheduled across threads.
enum class StreamKind : std::uint64_t {
    Global = 1,
    Neuron = 2,
    Cluster = 3,
    Init = 4,
    Data = 5,
    Summary = 6,
    Replicate = 7,
};

/// Mixes (seed, kind, index) into a 64-bit engine seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, StreamKind kind, std::uint64_t index = 0);

/// A random stream: one Mersenne Twister engine plus the distributions the
/// samplers need. Not thread-safe; give each concurrent task its own stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);
    Rng(std::uint64_t seed, StreamKind kind, std::uint64_t index = 0);

    std::mt19937_64& engine() { return engine_; }

    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Gamma with shape-rate parameterization (mean shape/rate).
    double gamma(double shape, double rate);
    double beta(double a, double b);
    bool bernoulli(double p) { return uniform() < p; }
    std::size_t uniform_index(std::size_t n);

    /// N(mean, 1) restricted to (0, inf).
    double truncated_normal_positive(double mean);
    /// N(mean, 1) restricted to (-inf, 0].
    double truncated_normal_negative(double mean) { return -truncated_normal_positive(-mean); }

    /// Index drawn with probability proportional to exp(log_weights[k]).
    /// Throws NumericError when no entry carries finite mass.
    std::size_t categorical_log(std::span<const double> log_weights);
    /// Index drawn proportionally to nonnegative weights.
    std::size_t categorical(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

/// Standard normal restricted to (lower, inf); inverse CDF in the bulk and
/// Robert's exponential rejection sampler beyond lower > 5.
double sample_standard_normal_above(double lower, Rng& rng);

} // namespace calens
