#include "calens/trace_ingest.hpp"

#include "calens/baseline_two_stage.hpp"
#include "calens/csv.hpp"
#include "calens/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>

namespace calens {

void FluorescenceTraces::validate() const {
    if (values.rows() < 1 || values.cols() < 1) {
        throw ArgumentError("traces need at least one neuron and one frame");
    }
    if (!values.allFinite()) {
        throw ArgumentError("traces contain non-finite values");
    }
    if (neuron_ids.size() != neurons()) {
        throw ArgumentError("neuron id count does not match the number of traces");
    }
    std::set<std::string> seen(neuron_ids.begin(), neuron_ids.end());
    if (seen.size() != neuron_ids.size()) {
        throw ArgumentError("neuron ids must be unique");
    }
    if (!(frame_rate > 0.0)) {
        throw ArgumentError("frame rate must be positive");
    }
}

FluorescenceTraces make_traces(Matrix values, double frame_rate) {
    FluorescenceTraces t;
    t.values = std::move(values);
    t.frame_rate = frame_rate;
    t.neuron_ids.reserve(t.neurons());
    for (std::size_t i = 0; i < t.neurons(); ++i) {
        t.neuron_ids.push_back(std::to_string(i));
    }
    return t;
}

std::string to_string(Region r) {
    return r == Region::Center ? "center" : "outer";
}

Region region_from_string(const std::string& s) {
    if (s == "center" || s == "Center" || s == "C") {
        return Region::Center;
    }
    if (s == "outer" || s == "OuterRing" || s == "O") {
        return Region::OuterRing;
    }
    throw ParseError("unknown region '" + s + "'");
}

FluorescenceTraces load_traces(const std::filesystem::path& path, TraceLayout layout,
                               std::optional<double> frame_rate) {
    if (!std::filesystem::exists(path)) {
        throw ArgumentError("traces file not found: " + path.string());
    }
    const csv::Table table = csv::read_table(path);
    Matrix m = csv::read_matrix(path);
    FluorescenceTraces t;
    if (layout == TraceLayout::NeuronsAsColumns) {
        t.values = m.transpose();
        if (!table.header.empty() && table.header.size() == static_cast<std::size_t>(m.cols())) {
            t.neuron_ids = table.header;
        }
    } else {
        t.values = std::move(m);
    }
    if (t.neuron_ids.empty()) {
        for (std::size_t i = 0; i < t.neurons(); ++i) {
            t.neuron_ids.push_back(std::to_string(i));
        }
    }
    t.frame_rate = 1.0;
    if (frame_rate) {
        t.frame_rate = *frame_rate;
    } else {
        auto sidecar = path;
        sidecar += ".json";
        if (std::filesystem::exists(sidecar)) {
            std::ifstream in(sidecar);
            const auto meta = nlohmann::json::parse(in);
            if (meta.contains("frame_rate")) {
                t.frame_rate = meta.at("frame_rate").get<double>();
            }
        }
    }
    t.validate();
    return t;
}

NeuronLocations load_locations(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ArgumentError("locations file not found: " + path.string());
    }
    const csv::Table table = csv::read_table(path);
    const std::size_t offset = table.header.empty() ? 1 : 2;
    NeuronLocations loc;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() == 3) {
            loc.ids.push_back(row[0]);
            loc.coords.push_back({csv::parse_cell(row[1], r + offset, 2), csv::parse_cell(row[2], r + offset, 3)});
        } else if (row.size() == 2) {
            loc.ids.push_back(std::to_string(r));
            loc.coords.push_back({csv::parse_cell(row[0], r + offset, 1), csv::parse_cell(row[1], r + offset, 2)});
        } else {
            throw ParseError("locations rows must be 'id,x,y' or 'x,y'", r + offset, 0);
        }
    }
    return loc;
}

std::vector<Point2> load_track_positions(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ArgumentError("track file not found: " + path.string());
    }
    const Matrix m = csv::read_matrix(path);
    if (m.cols() != 2) {
        throw ParseError("track rows must be 'x,y'");
    }
    std::vector<Point2> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out[static_cast<std::size_t>(r)] = {m(r, 0), m(r, 1)};
    }
    return out;
}

std::vector<Point2> resample_track(std::span<const Point2> raw, std::size_t frames) {
    if (raw.empty()) {
        throw ArgumentError("cannot resample an empty track");
    }
    std::vector<Point2> out(frames);
    if (frames == 0) {
        return out;
    }
    if (frames == 1 || raw.size() == 1) {
        std::fill(out.begin(), out.end(), raw.front());
        return out;
    }
    const double scale = static_cast<double>(raw.size() - 1) / static_cast<double>(frames - 1);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(t) * scale));
        out[t] = raw[std::min(idx, raw.size() - 1)];
    }
    return out;
}

FluorescenceTraces downsample(const FluorescenceTraces& traces, int factor) {
    if (factor < 1) {
        throw ArgumentError("downsampling factor must be a positive integer");
    }
    const auto T = static_cast<Eigen::Index>(traces.frames());
    const Eigen::Index kept = (T + factor - 1) / factor;
    FluorescenceTraces out;
    out.values.resize(traces.values.rows(), kept);
    for (Eigen::Index k = 0; k < kept; ++k) {
        out.values.col(k) = traces.values.col(k * factor);
    }
    out.frame_rate = traces.frame_rate / factor;
    out.neuron_ids = traces.neuron_ids;
    return out;
}

std::size_t l0_spike_count(std::span<const double> trace) {
    if (trace.size() < 2) {
        return 0;
    }
    return deconvolve_trace(trace).fit.spikes.size();
}

std::vector<std::size_t> screen_noise_only(const FluorescenceTraces& traces, const SpikeCounter& counter) {
    std::vector<std::size_t> keep;
    for (Eigen::Index i = 0; i < traces.values.rows(); ++i) {
        const Vector row = traces.values.row(i).transpose();
        if (counter(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))) >= 1) {
            keep.push_back(static_cast<std::size_t>(i));
        }
    }
    return keep;
}

FluorescenceTraces select_neurons(const FluorescenceTraces& traces, std::span<const std::size_t> keep) {
    FluorescenceTraces out;
    out.values.resize(static_cast<Eigen::Index>(keep.size()), traces.values.cols());
    out.frame_rate = traces.frame_rate;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.values.row(static_cast<Eigen::Index>(r)) = traces.values.row(static_cast<Eigen::Index>(keep[r]));
        out.neuron_ids.push_back(traces.neuron_ids.at(keep[r]));
    }
    return out;
}

Region classify_region(Point2 p, Point2 center, double radius) {
    const double dx = p.x - center.x;
    const double dy = p.y - center.y;
    // Compare squared distances: |p - c|^2 <= r^2 / 2 avoids rounding in the sqrt.
    return dx * dx + dy * dy <= 0.5 * radius * radius ? Region::Center : Region::OuterRing;
}

WindowSegmentation segment_regions(std::span<const Region> regions, std::size_t min_len) {
    if (min_len < 1) {
        throw ArgumentError("minimum window length must be >= 1");
    }
    WindowSegmentation seg;
    std::size_t start = 0;
    for (std::size_t t = 1; t <= regions.size(); ++t) {
        if (t == regions.size() || regions[t] != regions[start]) {
            WindowSpec w{start, t, regions[start]};
            seg.all.push_back(w);
            if (w.length() >= min_len) {
                seg.filtered.push_back(w);
            }
            start = t;
        }
    }
    return seg;
}

WindowSegmentation segment_windows(const ArenaTrack& track, std::size_t min_len) {
    if (!(track.arena_radius > 0.0)) {
        throw ArgumentError("arena radius must be positive");
    }
    std::vector<Region> regions;
    regions.reserve(track.positions.size());
    for (const Point2& p : track.positions) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw ArgumentError("track positions must be finite");
        }
        regions.push_back(classify_region(p, track.arena_center, track.arena_radius));
    }
    return segment_regions(regions, min_len);
}

std::vector<WindowSpec> load_windows(const std::filesystem::path& path) {
    const csv::Table table = csv::read_table(path);
    std::vector<WindowSpec> out;
    const std::size_t offset = table.header.empty() ? 1 : 2;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != 3) {
            throw ParseError("window rows must be 'start,end,region'", r + offset, 0);
        }
        const double s = csv::parse_cell(row[0], r + offset, 1);
        const double e = csv::parse_cell(row[1], r + offset, 2);
        if (s < 0 || e <= s) {
            throw ParseError("window must satisfy 0 <= start < end", r + offset, 0);
        }
        out.push_back({static_cast<std::size_t>(s), static_cast<std::size_t>(e), region_from_string(row[2])});
    }
    return out;
}

void write_windows(const std::filesystem::path& path, std::span<const WindowSpec> windows) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& w : windows) {
        rows.push_back({std::to_string(w.start), std::to_string(w.end), to_string(w.region)});
    }
    csv::write_table(path, {"start", "end", "region"}, rows);
}

} // namespace calens
