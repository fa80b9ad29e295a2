#pragma once

#include "calens/types.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace calens {

/// Observed fluorescence, neurons as rows and frames as columns.
struct FluorescenceTraces {
    Matrix values;
    double frame_rate = 1.0;
    std::vector<std::string> neuron_ids;

    std::size_t neurons() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t frames() const { return static_cast<std::size_t>(values.cols()); }

    /// Throws ArgumentError unless n, T >= 1, values finite and ids unique with length n.
    void validate() const;
};

/// Builds traces with ids "0".."n-1".
FluorescenceTraces make_traces(Matrix values, double frame_rate = 1.0);

struct NeuronLocations {
    std::vector<Point2> coords;
    std::vector<std::string> ids;
};

enum class Region { Center, OuterRing };

std::string to_string(Region r);
Region region_from_string(const std::string& s);

struct ArenaTrack {
    std::vector<Point2> positions;
    Point2 arena_center;
    double arena_radius = 1.0;
};

/// Half-open frame range [start, end) spent in one arena region.
struct WindowSpec {
    std::size_t start = 0;
    std::size_t end = 0;
    Region region = Region::Center;

    std::size_t length() const { return end - start; }
    bool operator==(const WindowSpec&) const = default;
};

struct WindowSegmentation {
    std::vector<WindowSpec> all;       // partitions [0, T)
    std::vector<WindowSpec> filtered;  // windows with length >= min_len, in order
};

enum class TraceLayout { NeuronsAsRows, NeuronsAsColumns };

/// Reads a numeric CSV. With a header row, the header supplies neuron ids in
/// column layout. The frame rate comes from `frame_rate` when given, otherwise
/// from a "<path>.json" sidecar with a "frame_rate" key, otherwise 1.
FluorescenceTraces load_traces(const std::filesystem::path& path, TraceLayout layout,
                               std::optional<double> frame_rate = std::nullopt);

/// Rows "id,x,y" or "x,y".
NeuronLocations load_locations(const std::filesystem::path& path);

/// Rows "x,y"; one row per frame.
std::vector<Point2> load_track_positions(const std::filesystem::path& path);

/// Nearest-frame resampling of a track recorded at a different rate onto `frames` frames.
std::vector<Point2> resample_track(std::span<const Point2> raw, std::size_t frames);

/// Keeps frames 0, factor, 2*factor, ...; divides the frame rate by `factor`.
FluorescenceTraces downsample(const FluorescenceTraces& traces, int factor);

/// Counts the spikes an l0 deconvolution finds on a full trace.
using SpikeCounter = std::function<std::size_t(std::span<const double>)>;

/// Default counter: the two-stage baseline deconvolution with its own lambda selection.
std::size_t l0_spike_count(std::span<const double> trace);

/// Indices of neurons with at least one detected spike, in original order.
std::vector<std::size_t> screen_noise_only(const FluorescenceTraces& traces,
                                           const SpikeCounter& counter = l0_spike_count);

/// Row subset of traces (ids follow).
FluorescenceTraces select_neurons(const FluorescenceTraces& traces,
                                  std::span<const std::size_t> keep);

/// Center iff the distance to the arena center is at most radius / sqrt(2),
/// which makes the inner disc exactly half the arena's area.
Region classify_region(Point2 p, Point2 center, double radius);

/// Run-length segmentation of a region sequence.
WindowSegmentation segment_regions(std::span<const Region> regions, std::size_t min_len);

WindowSegmentation segment_windows(const ArenaTrack& track, std::size_t min_len);

std::vector<WindowSpec> load_windows(const std::filesystem::path& path);
void write_windows(const std::filesystem::path& path, std::span<const WindowSpec> windows);

} // namespace calens
