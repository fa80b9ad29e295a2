#pragma once

#include "calens/random.hpp"
#include "calens/types.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace calens {

/// MAD of first differences scaled to a Gaussian standard deviation
/// (x 1.4826 / sqrt(2)).
double estimate_noise_sd(std::span<const double> trace);

/// Result of the exact l0-penalized AR(1) deconvolution of one trace.
struct L0Fit {
    std::vector<std::size_t> spikes;  // frames t >= 1 with c_t = gamma c_{t-1} + a_t, a_t > 0
    std::vector<double> amplitudes;   // a_t at each spike frame
    Vector calcium;                   // fitted c_0..c_{T-1}
    double objective = 0.0;           // sum (y - c)^2 + lambda * #spikes
};

/// Exact minimizer of sum_t (y_t - c_t)^2 + lambda * #spikes subject to
/// c_t = gamma c_{t-1} + a_t with a_t >= 0 only at spike frames; c_0 is free.
/// Dynamic programming over the calcium value with piecewise-quadratic cost
/// functions. Ties between "spike" and "no spike" resolve to no spike.
L0Fit l0_deconvolve(std::span<const double> y, double gamma, double lambda);

/// sum_t (y_t - c_t)^2 + lambda * #spikes for a given fit.
double l0_objective(std::span<const double> y, const L0Fit& fit, double lambda);

/// 30 log-spaced values spanning [0.01, 100] x noise variance.
std::vector<double> lambda_grid(double noise_sd);

struct LambdaChoice {
    double lambda = 0.0;
    L0Fit fit;
    bool qualified = true;  // false: no grid value qualified, grid maximum returned
};

/// Smallest grid lambda whose detected amplitudes are all at least one noise sd.
LambdaChoice select_lambda(std::span<const double> y, double gamma);

/// Decay maximizing the AR(1) fit of the inter-spike segments (segment starts
/// at frame 0 and at each spike), by grid search over [lo, hi].
double estimate_decay(std::span<const double> y, std::span<const std::size_t> spikes,
                      double lo = 0.5, double hi = 0.995);

struct TraceDeconvolution {
    double gamma = 0.9;
    double lambda = 0.0;
    bool lambda_qualified = true;
    L0Fit fit;
};

/// Full per-trace baseline: lambda selection at gamma0, decay re-estimation on
/// the resulting segments, then lambda selection again at the estimated decay.
TraceDeconvolution deconvolve_trace(std::span<const double> y, double initial_gamma = 0.9);

/// Binary n x T spike matrix from deconvolving every row.
IntMatrix deconvolve_spikes(const Matrix& y, std::vector<TraceDeconvolution>* details = nullptr);

struct KMeansResult {
    std::vector<int> labels;  // 0-based
    Matrix centers;
    double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded with
/// the point farthest from its center.
KMeansResult kmeans(const Matrix& points, int k, Rng& rng, int max_iter = 100);

/// Mean silhouette with Euclidean distance; singleton members score 0.
double mean_silhouette(const Matrix& points, std::span<const int> labels);

struct ConsensusOptions {
    int k_min = 2;
    int k_max = 10;
    double subsample_frac = 0.5;
    int replications = 200;
    int max_iter = 100;
    int final_restarts = 10;
};

struct ConsensusResult {
    std::vector<int> labels;  // canonical 1..K
    int k = 0;
    std::map<int, double> silhouette_by_k;
    Matrix consensus;  // consensus matrix for the chosen k
    std::vector<std::string> warnings;
};

/// Consensus k-means over neuron subsamples; K maximizes the mean silhouette
/// of the final clustering of consensus-matrix rows.
ConsensusResult consensus_kmeans(const Matrix& spikes, const ConsensusOptions& options, Rng& rng);

} // namespace calens
