#pragma once

#include "calens/random.hpp"
#include "calens/trace_ingest.hpp"
#include "calens/types.hpp"

#include <map>
#include <span>
#include <vector>

namespace calens {

/// Relabels to 1..K in order of first occurrence.
std::vector<int> canonical_partition(std::span<const int> labels);

/// probs(i, j) = fraction of draws (rows) in which i and j share a label.
Matrix similarity_matrix(const IntMatrix& partitions);

/// Variation of information (natural log) between two labelings of the same items.
double variation_of_information(std::span<const int> a, std::span<const int> b);

/// Mean VI between `candidate` and every row of `partitions`.
double expected_vi(std::span<const int> candidate, const IntMatrix& partitions);

struct ViOptions {
    int max_clusters = 0;  // 0: no cap beyond n
    int restarts = 16;
    int max_sweeps = 100;
    int candidate_draws = 100;  // draws scored to pick the initial partition
};

struct ViResult {
    std::vector<int> labels;  // canonical 1..K
    double expected_vi = 0.0;
};

/// Greedy minimization of the expected VI against the draws. Restart 0 starts
/// from the best of up to `candidate_draws` evenly spaced draws; the others
/// start from randomized sequential allocation. Each start is refined by
/// one-item-at-a-time reassignment until no move lowers the loss.
/// Throws ArgumentError when restarts < 1 or there are no draws.
ViResult vi_point_estimate(const IntMatrix& partitions, const ViOptions& options, Rng& rng);

struct ClusterCountSummary {
    std::vector<int> counts;  // occupied clusters per draw
    int mode = 0;             // smallest among ties
    double variance = 0.0;    // population variance
    std::map<int, long> histogram;
};
ClusterCountSummary num_clusters_summary(const IntMatrix& partitions);

struct CrossWindowSummary {
    Matrix frequency;                  // n x n share of windows with a common label
    double fraction_pairs_above_half;  // over pairs i < j, strictly above 0.5
};
/// Throws ArgumentError if windows disagree on n or the list is empty.
CrossWindowSummary cross_window_coclustering(const std::vector<std::vector<int>>& partitions);

/// Regular grid of nx x ny cells. Cell (ix, iy) covers
/// [x0 + ix w, x0 + (ix+1) w) x [y0 + iy h, y0 + (iy+1) h).
struct Grid {
    double x0 = 0.0;
    double y0 = 0.0;
    double cell_w = 1.0;
    double cell_h = 1.0;
    int nx = 50;
    int ny = 50;

    /// Cell containing p, or -1 when p lies outside the grid. Points on the
    /// upper edge belong to the last cell.
    int cell_of(Point2 p) const;
    Point2 center(int ix, int iy) const;
};

/// resolution x resolution grid over the arena's bounding box.
Grid arena_grid(Point2 center, double radius, int resolution = 50);

/// Posterior spike probabilities of one fitted window; column t is frame start + t.
struct WindowSpikes {
    std::size_t start = 0;
    Matrix spike_probs;  // n x length
};

/// Per-neuron ny x nx grids of mean spike probability over the frames spent in
/// each cell; NaN marks unvisited cells.
std::vector<Matrix> spatial_firing_map(const std::vector<WindowSpikes>& windows, std::span<const Point2> track,
                                       const Grid& grid);

/// Gaussian-kernel weighted mean of `values` at `query`. Weights are formed
/// relative to the nearest point, so tiny bandwidths tend to the nearest value.
double kernel_smooth(Point2 query, std::span<const Point2> points, std::span<const double> values,
                     double bandwidth);

struct WindowComplexity {
    int mode = 0;
    double variance = 0.0;
};

struct ComplexityPoint {
    std::size_t frame = 0;
    Point2 position;
    int mode = 0;
    double variance = 0.0;
};

struct ComplexityMaps {
    Matrix mode;      // ny x nx, NaN off support
    Matrix variance;  // ny x nx, NaN off support
    std::vector<ComplexityPoint> points;
};

/// Every frame of window w carries that window's (mode, variance). Grid cells
/// are smoothed with kernel_smooth; cells with no trajectory point within
/// 3 bandwidths, and not containing one, are NaN.
ComplexityMaps spatial_complexity_map(std::span<const WindowComplexity> per_window, std::span<const Point2> track,
                                      std::span<const WindowSpec> windows, double bandwidth, const Grid& grid);

} // namespace calens
