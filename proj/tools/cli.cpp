#include "cli.hpp"

#include "calens/baseline_two_stage.hpp"
#include "calens/chain_io.hpp"
#include "calens/config.hpp"
#include "calens/csv.hpp"
#include "calens/errors.hpp"
#include "calens/posterior_summaries.hpp"
#include "calens/sampler.hpp"
#include "calens/synthetic_bench.hpp"
#include "calens/trace_ingest.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace calens::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

/// An input path that does not exist; maps to kMissingInput.
class MissingInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_input(const fs::path& p) {
    if (!fs::exists(p)) {
        throw MissingInput("input not found: " + p.string());
    }
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Content fingerprint of a file, or of every regular file below a directory
/// (sorted by relative path, manifests excluded).
std::string hash_input(const fs::path& p) {
    if (fs::is_regular_file(p)) {
        return fnv1a_hex(read_bytes(p));
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") {
            files.push_back(fs::relative(e.path(), p));
        }
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) {
        acc += f.generic_string() + ':' + fnv1a_hex(read_bytes(p / f)) + '\n';
    }
    return fnv1a_hex(acc);
}

/// Everything needed to re-run a command: its arguments, the seed, the
/// resolved configuration and fingerprints of the inputs. No timestamps, so
/// identical invocations produce identical manifests.
struct Manifest {
    std::string command;
    std::vector<std::string> args;
    std::optional<std::uint64_t> seed;
    json config = json::object();
    std::vector<fs::path> inputs;

    void write(const fs::path& path) const {
        json j;
        j["command"] = command;
        j["args"] = args;
        j["version"] = kVersion;
        j["seed"] = seed ? json(*seed) : json(nullptr);
        j["config"] = config;
        json in = json::array();
        for (const auto& p : inputs) {
            in.push_back({{"path", p.string()}, {"hash", hash_input(p)}});
        }
        j["inputs"] = in;
        if (path.has_parent_path()) {
            fs::create_directories(path.parent_path());
        }
        std::ofstream(path) << j.dump(2) << '\n';
    }
};

/// Manifest location for a command writing a single file.
fs::path manifest_beside(const fs::path& file) {
    fs::path m = file;
    m += ".manifest.json";
    return m;
}

TraceLayout parse_layout(const std::string& s) {
    if (s == "rows") {
        return TraceLayout::NeuronsAsRows;
    }
    if (s == "cols" || s == "columns") {
        return TraceLayout::NeuronsAsColumns;
    }
    throw ArgumentError("layout must be 'rows' or 'cols'");
}

std::vector<double> parse_numbers(const std::string& s, std::size_t expected, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        out.push_back(csv::parse_cell(cell, 0, out.size() + 1));
    }
    if (out.size() != expected) {
        throw ArgumentError(what + " needs " + std::to_string(expected) + " comma-separated numbers");
    }
    return out;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) {
        throw ArgumentError("window must be start:end");
    }
    const long a = std::stol(s.substr(0, colon));
    const long b = std::stol(s.substr(colon + 1));
    if (a < 0 || b <= a) {
        throw ArgumentError("window needs 0 <= start < end");
    }
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
}

/// Reorders locations to the trace ids when the file carries ids.
std::vector<Point2> align_locations(const NeuronLocations& loc, const FluorescenceTraces& tr) {
    if (loc.coords.size() != tr.neurons()) {
        throw ArgumentError("locations have " + std::to_string(loc.coords.size()) + " rows but traces have " +
                            std::to_string(tr.neurons()) + " neurons");
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < loc.ids.size(); ++i) {
        index[loc.ids[i]] = i;
    }
    std::vector<Point2> out;
    for (const auto& id : tr.neuron_ids) {
        const auto it = index.find(id);
        if (it == index.end()) {
            // Ids do not line up; fall back to row order.
            return loc.coords;
        }
        out.push_back(loc.coords[it->second]);
    }
    return out;
}

void write_labels(const fs::path& path, const std::vector<std::string>& ids, std::span<const int> labels) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        rows.push_back({ids[i], std::to_string(labels[i])});
    }
    csv::write_table(path, {"neuron", "label"}, rows);
}

std::vector<int> read_labels(const fs::path& path) {
    require_input(path);
    const csv::Table t = csv::read_table(path, csv::HeaderMode::Present);
    std::vector<int> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != 2) {
            throw ParseError("label rows must be 'neuron,label'", r + 2, 0);
        }
        out.push_back(static_cast<int>(csv::parse_cell(t.rows[r][1], r + 2, 2)));
    }
    return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string config;
    std::uint64_t seed = 0;
    int replicates = 1;
    std::string out;
};

SyntheticConfig synthetic_config_from(const json& j) {
    SyntheticConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "n") {
            c.n = v.get<int>();
        } else if (key == "T") {
            c.T = v.get<int>();
        } else if (key == "gamma") {
            c.gamma = v.get<double>();
        } else if (key == "tau2") {
            c.tau2 = v.get<double>();
        } else if (key == "sigma2") {
            c.sigma2 = v.get<double>();
        } else if (key == "baseline") {
            c.baseline = v.get<double>();
        } else if (key == "frame_rate") {
            c.frame_rate = v.get<double>();
        } else if (key == "amp_values") {
            c.amp_values = v.get<std::vector<double>>();
        } else if (key == "amp_probs") {
            c.amp_probs = v.get<std::vector<double>>();
        } else if (key == "mixture_weights") {
            c.mixture.weights = v.get<std::vector<double>>();
        } else if (key == "mixture_variances") {
            c.mixture.variances = v.get<std::vector<double>>();
        } else if (key == "mixture_means") {
            c.mixture.means.clear();
            for (const auto& m : v) {
                c.mixture.means.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
            }
        } else {
            throw ArgumentError("unknown simulate config key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

json to_json(const SyntheticConfig& c) {
    json means = json::array();
    for (const auto& m : c.mixture.means) {
        means.push_back({m.x, m.y});
    }
    return {{"n", c.n},
            {"T", c.T},
            {"gamma", c.gamma},
            {"tau2", c.tau2},
            {"sigma2", c.sigma2},
            {"baseline", c.baseline},
            {"frame_rate", c.frame_rate},
            {"amp_values", c.amp_values},
            {"amp_probs", c.amp_probs},
            {"mixture_weights", c.mixture.weights},
            {"mixture_variances", c.mixture.variances},
            {"mixture_means", means}};
}

void write_dataset(const fs::path& dir, const SyntheticDataset& ds) {
    fs::create_directories(dir / "truth");
    csv::write_matrix(dir / "traces.csv", ds.traces.values);
    std::vector<std::vector<std::string>> loc;
    for (std::size_t i = 0; i < ds.locations.coords.size(); ++i) {
        loc.push_back({ds.locations.ids[i], csv::format_double(ds.locations.coords[i].x),
                       csv::format_double(ds.locations.coords[i].y)});
    }
    csv::write_table(dir / "locations.csv", {"id", "x", "y"}, loc);
    const SyntheticTruth& t = ds.truth;
    csv::write_int_matrix(dir / "truth" / "spikes.csv", t.s_true);
    csv::write_matrix(dir / "truth" / "amplitudes.csv", t.a_true);
    csv::write_matrix(dir / "truth" / "calcium.csv", t.c_true);
    csv::write_matrix(dir / "truth" / "prob_curves.csv", t.prob_curves);
    write_labels(dir / "truth" / "labels.csv", ds.traces.neuron_ids, t.zeta_true);
    std::ofstream(dir / "truth" / "params.json")
        << json{{"gamma", t.gamma}, {"sigma2", t.sigma2}, {"tau2", t.tau2}}.dump(2) << '\n';
}

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    json j = json::object();
    Manifest m{"simulate", argv, a.seed};
    if (!a.config.empty()) {
        require_input(a.config);
        j = json::parse(read_bytes(a.config));
        m.inputs.push_back(a.config);
    }
    const SyntheticConfig cfg = synthetic_config_from(j);
    if (a.replicates < 1) {
        throw ArgumentError("--replicates must be >= 1");
    }
    for (int r = 0; r < a.replicates; ++r) {
        Rng rng(a.seed, StreamKind::Replicate, static_cast<std::uint64_t>(r));
        char name[32];
        std::snprintf(name, sizeof(name), "rep_%03d", r);
        write_dataset(fs::path(a.out) / name, generate_dataset(cfg, rng));
    }
    m.config = to_json(cfg);
    m.config["replicates"] = a.replicates;
    m.write(fs::path(a.out) / "manifest.json");
    out << "wrote " << a.replicates << " replicate(s) to " << a.out << '\n';
    return kOk;
}

// ----------------------------------------------------------------- segment

struct SegmentArgs {
    std::string traces;
    std::string track;
    std::string arena;
    std::size_t min_len = 45;
    std::string out;
    std::string layout = "rows";
};

int cmd_segment(const SegmentArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    require_input(a.traces);
    require_input(a.track);
    const FluorescenceTraces tr = load_traces(a.traces, parse_layout(a.layout));
    const auto arena = parse_numbers(a.arena, 3, "--arena");
    ArenaTrack track;
    track.positions = load_track_positions(a.track);
    if (track.positions.size() != tr.frames()) {
        track.positions = resample_track(track.positions, tr.frames());
    }
    track.arena_center = {arena[0], arena[1]};
    track.arena_radius = arena[2];
    const WindowSegmentation seg = segment_windows(track, a.min_len);
    if (fs::path(a.out).has_parent_path()) {
        fs::create_directories(fs::path(a.out).parent_path());
    }
    write_windows(a.out, seg.filtered);
    Manifest m{"segment", argv, std::nullopt};
    m.config = {{"arena", arena}, {"min_len", a.min_len}, {"layout", a.layout}};
    m.inputs = {a.traces, a.track};
    m.write(manifest_beside(a.out));
    out << seg.filtered.size() << " of " << seg.all.size() << " windows have >= " << a.min_len << " frames\n";
    return kOk;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
    std::string traces;
    std::string locations;
    std::string window;
    std::string windows;
    std::string config;
    std::optional<int> iters, burnin, thin, threads;
    bool store_draws = false;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string layout = "rows";
    std::string out;
};

FluorescenceTraces slice_frames(const FluorescenceTraces& tr, std::size_t start, std::size_t end) {
    if (end > tr.frames()) {
        throw ArgumentError("window end " + std::to_string(end) + " exceeds " + std::to_string(tr.frames()) +
                            " frames");
    }
    FluorescenceTraces s = tr;
    s.values = tr.values.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start));
    return s;
}

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    require_input(a.traces);
    require_input(a.locations);
    RunConfig cfg;
    Manifest m{"fit", argv, a.seed};
    m.inputs = {a.traces, a.locations};
    if (!a.config.empty()) {
        require_input(a.config);
        cfg = load_config(a.config);
        m.inputs.push_back(a.config);
    }
    json flags = json::object();
    if (a.iters) {
        flags["iters"] = *a.iters;
    }
    if (a.burnin) {
        flags["burnin"] = *a.burnin;
    }
    if (a.thin) {
        flags["thin"] = *a.thin;
    }
    if (a.threads) {
        flags["threads"] = *a.threads;
    }
    if (a.store_draws) {
        flags["store_draws"] = true;
    }
    // Flags override the file; validation runs on the merged result.
    json merged = to_json(cfg.run);
    merged.update(flags);
    cfg.run = RunOptions{};
    apply_overrides(cfg.run, merged);

    const FluorescenceTraces tr = load_traces(a.traces, parse_layout(a.layout));
    const std::vector<Point2> loc = align_locations(load_locations(a.locations), tr);

    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    if (!a.windows.empty()) {
        require_input(a.windows);
        m.inputs.push_back(a.windows);
        for (const WindowSpec& w : load_windows(a.windows)) {
            ranges.emplace_back(w.start, w.end);
        }
    } else if (!a.window.empty()) {
        ranges.push_back(parse_range(a.window));
    } else {
        ranges.emplace_back(0, tr.frames());
    }
    const bool nested = !a.windows.empty();
    std::vector<std::string> errors(ranges.size());
    std::vector<std::string> steps(ranges.size());
    auto fit_one = [&](std::size_t w) {
        const auto [start, end] = ranges[w];
        const FluorescenceTraces part = slice_frames(tr, start, end);
        char name[32];
        std::snprintf(name, sizeof(name), "window_%03zu", w);
        const fs::path dir = nested ? fs::path(a.out) / name : fs::path(a.out);
        try {
            ChainOutput chain = run_chain(part.values, loc, cfg.hyper, cfg.run, a.seed);
            chain.neuron_ids = part.neuron_ids;
            write_chain(dir, chain);
            std::ofstream(dir / "window.json") << json{{"start", start}, {"end", end}}.dump() << '\n';
        } catch (const NumericError& e) {
            errors[w] = e.what();
            steps[w] = e.step();
        }
    };
    const int jobs = std::max(1, a.jobs);
    if (jobs == 1 || ranges.size() == 1) {
        for (std::size_t w = 0; w < ranges.size(); ++w) {
            fit_one(w);
        }
    } else {
        tbb::task_arena arena(jobs);
        arena.execute([&] { tbb::parallel_for(std::size_t{0}, ranges.size(), fit_one); });
    }
    for (std::size_t w = 0; w < ranges.size(); ++w) {
        if (!errors[w].empty()) {
            throw NumericError("window " + std::to_string(w) + ": " + errors[w], steps[w]);
        }
    }
    m.config = to_json(cfg);
    m.config.erase("sweep");
    m.config["windows"] = ranges;
    m.write(fs::path(a.out) / "manifest.json");
    out << "fitted " << ranges.size() << " window(s) into " << a.out << '\n';
    return kOk;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
    std::string traces;
    std::string out;
    int k_min = 2;
    int k_max = 10;
    int replications = 200;
    std::uint64_t seed = 0;
    std::string layout = "rows";
};

int cmd_baseline(const BaselineArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    require_input(a.traces);
    const FluorescenceTraces tr = load_traces(a.traces, parse_layout(a.layout));
    std::vector<TraceDeconvolution> details;
    const IntMatrix spikes = deconvolve_spikes(tr.values, &details);
    ConsensusOptions opt;
    opt.k_min = a.k_min;
    opt.k_max = a.k_max;
    opt.replications = a.replications;
    Rng rng(a.seed, StreamKind::Summary);
    const ConsensusResult res = consensus_kmeans(spikes.cast<double>(), opt, rng);

    const fs::path dir(a.out);
    fs::create_directories(dir);
    csv::write_int_matrix(dir / "spikes.csv", spikes);
    write_labels(dir / "partition.csv", tr.neuron_ids, res.labels);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < details.size(); ++i) {
        rows.push_back({tr.neuron_ids[i], csv::format_double(details[i].gamma),
                        csv::format_double(details[i].lambda), details[i].lambda_qualified ? "1" : "0",
                        std::to_string(details[i].fit.spikes.size())});
    }
    csv::write_table(dir / "deconvolution.csv", {"neuron", "gamma", "lambda", "qualified", "spikes"}, rows);
    rows.clear();
    for (const auto& [k, s] : res.silhouette_by_k) {
        rows.push_back({std::to_string(k), csv::format_double(s)});
    }
    csv::write_table(dir / "silhouette.csv", {"k", "silhouette"}, rows);
    for (const auto& w : res.warnings) {
        out << "warning: " << w << '\n';
    }
    Manifest m{"baseline", argv, a.seed};
    m.config = {{"k_min", a.k_min}, {"k_max", a.k_max}, {"replications", a.replications}, {"layout", a.layout}};
    m.inputs = {a.traces};
    m.write(dir / "manifest.json");
    out << "baseline chose K = " << res.k << '\n';
    return kOk;
}

// --------------------------------------------------------------- summarize

struct SummarizeArgs {
    std::vector<std::string> chains;
    std::string out;
    int restarts = 16;
    std::uint64_t seed = 0;
    std::string track;
    std::string arena;
    int grid = 50;
    std::optional<double> bandwidth;
};

struct ChainSummary {
    std::vector<int> partition;
    ClusterCountSummary counts;
};

ChainSummary summarize_chain(const ChainOutput& chain, const fs::path& dir, int restarts, Rng& rng) {
    if (chain.draws() == 0) {
        throw ArgumentError("chain has no stored draws");
    }
    fs::create_directories(dir);
    const std::vector<std::string> ids =
        chain.neuron_ids.empty() ? csv::numbered_header("neuron", static_cast<std::size_t>(chain.partitions.cols()))
                                 : chain.neuron_ids;
    csv::write_matrix(dir / "similarity.csv", similarity_matrix(chain.partitions), ids);
    ViOptions vo;
    vo.restarts = restarts;
    const ViResult vi = vi_point_estimate(chain.partitions, vo, rng);
    write_labels(dir / "partition.csv", ids, vi.labels);
    ChainSummary s{vi.labels, num_clusters_summary(chain.partitions)};
    std::vector<std::vector<std::string>> rows;
    for (const auto& [k, c] : s.counts.histogram) {
        rows.push_back({std::to_string(k), std::to_string(c)});
    }
    csv::write_table(dir / "cluster_counts.csv", {"clusters", "draws"}, rows);
    std::ofstream(dir / "summary.json") << json{{"mode", s.counts.mode},
                                                {"variance", s.counts.variance},
                                                {"variance_convention", "population"},
                                                {"expected_vi", vi.expected_vi},
                                                {"draws", chain.draws()}}
                                               .dump(2)
                                        << '\n';
    return s;
}

void write_grid_long(const fs::path& path, const std::vector<std::pair<std::string, const Matrix*>>& grids) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [label, g] : grids) {
        for (Eigen::Index iy = 0; iy < g->rows(); ++iy) {
            for (Eigen::Index ix = 0; ix < g->cols(); ++ix) {
                const double v = (*g)(iy, ix);
                if (!std::isnan(v)) {
                    rows.push_back({label, std::to_string(ix), std::to_string(iy), csv::format_double(v)});
                }
            }
        }
    }
    csv::write_table(path, {"neuron", "cell_x", "cell_y", "value"}, rows);
}

int cmd_summarize(const SummarizeArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    for (const auto& c : a.chains) {
        require_input(c);
    }
    if (!a.track.empty()) {
        require_input(a.track);
    }
    // A directory holding window_* chains expands to those chains.
    std::vector<fs::path> chains;
    for (const auto& c : a.chains) {
        if (fs::exists(fs::path(c) / "meta.json")) {
            chains.emplace_back(c);
            continue;
        }
        std::vector<fs::path> sub;
        for (const auto& e : fs::directory_iterator(c)) {
            if (e.is_directory() && fs::exists(e.path() / "meta.json")) {
                sub.push_back(e.path());
            }
        }
        std::sort(sub.begin(), sub.end());
        if (sub.empty()) {
            throw MissingInput("no chain found in " + c);
        }
        chains.insert(chains.end(), sub.begin(), sub.end());
    }
    const fs::path dir(a.out);
    Rng rng(a.seed, StreamKind::Summary);
    std::vector<ChainSummary> sums;
    std::vector<ChainOutput> outputs;
    std::vector<WindowSpec> windows;
    for (std::size_t w = 0; w < chains.size(); ++w) {
        outputs.push_back(read_chain(chains[w]));
        char name[32];
        std::snprintf(name, sizeof(name), "window_%03zu", w);
        const fs::path sub = chains.size() == 1 ? dir : dir / name;
        sums.push_back(summarize_chain(outputs.back(), sub, a.restarts, rng));
        WindowSpec spec;
        spec.start = 0;
        spec.end = static_cast<std::size_t>(outputs.back().spike_probs.cols());
        if (fs::exists(chains[w] / "window.json")) {
            const json j = json::parse(read_bytes(chains[w] / "window.json"));
            spec.start = j.at("start").get<std::size_t>();
            spec.end = j.at("end").get<std::size_t>();
        }
        windows.push_back(spec);
    }
    if (chains.size() > 1) {
        std::vector<std::vector<int>> parts;
        for (const auto& s : sums) {
            parts.push_back(s.partition);
        }
        const CrossWindowSummary cw = cross_window_coclustering(parts);
        csv::write_matrix(dir / "cross_window.csv", cw.frequency);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t w = 0; w < sums.size(); ++w) {
            rows.push_back({std::to_string(w), std::to_string(windows[w].start), std::to_string(windows[w].end),
                            std::to_string(sums[w].counts.mode), csv::format_double(sums[w].counts.variance)});
        }
        csv::write_table(dir / "window_complexity.csv", {"window", "start", "end", "mode", "variance"}, rows);
        std::ofstream(dir / "cross_window.json")
            << json{{"fraction_pairs_above_half", cw.fraction_pairs_above_half}, {"windows", sums.size()}}.dump(2)
            << '\n';
    }
    if (!a.track.empty()) {
        if (a.arena.empty()) {
            throw ArgumentError("--track needs --arena cx,cy,r");
        }
        const auto arena = parse_numbers(a.arena, 3, "--arena");
        const std::vector<Point2> track = load_track_positions(a.track);
        const Grid grid = arena_grid({arena[0], arena[1]}, arena[2], a.grid);
        std::vector<WindowSpikes> ws;
        std::vector<WindowComplexity> wc;
        for (std::size_t w = 0; w < outputs.size(); ++w) {
            ws.push_back({windows[w].start, outputs[w].spike_probs});
            wc.push_back({sums[w].counts.mode, sums[w].counts.variance});
        }
        const auto maps = spatial_firing_map(ws, track, grid);
        const auto& ids = outputs.front().neuron_ids;
        std::vector<std::pair<std::string, const Matrix*>> grids;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            grids.emplace_back(i < ids.size() ? ids[i] : std::to_string(i), &maps[i]);
        }
        write_grid_long(dir / "firing_map.csv", grids);
        const double bw = a.bandwidth.value_or(arena[2] / 10.0);
        const ComplexityMaps cm = spatial_complexity_map(wc, track, windows, bw, grid);
        write_grid_long(dir / "complexity_mode.csv", {{"all", &cm.mode}});
        write_grid_long(dir / "complexity_variance.csv", {{"all", &cm.variance}});
        std::vector<std::vector<std::string>> rows;
        for (const auto& p : cm.points) {
            rows.push_back({std::to_string(p.frame), csv::format_double(p.position.x),
                            csv::format_double(p.position.y), std::to_string(p.mode), csv::format_double(p.variance)});
        }
        csv::write_table(dir / "complexity_points.csv", {"frame", "x", "y", "mode", "variance"}, rows);
    }
    Manifest m{"summarize", argv, a.seed};
    m.config = {{"salso_restarts", a.restarts}, {"grid", a.grid}};
    if (a.bandwidth) {
        m.config["bandwidth"] = *a.bandwidth;
    }
    for (const auto& c : chains) {
        m.inputs.push_back(c);
    }
    if (!a.track.empty()) {
        m.inputs.emplace_back(a.track);
    }
    m.write(dir / "manifest.json");
    out << "summarized " << chains.size() << " chain(s) into " << a.out << '\n';
    return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string truth;
    std::string chain;
    std::string baseline;
    std::string out;
    std::uint64_t seed = 0;
    int restarts = 16;
};

IntMatrix read_int_matrix(const fs::path& p) {
    require_input(p);
    return csv::read_matrix(p).array().round().cast<int>();
}

int cmd_evaluate(const EvaluateArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    require_input(a.truth);
    require_input(a.chain);
    if (!a.baseline.empty()) {
        require_input(a.baseline);
    }
    // Replicate directories rep_* under each root, or a single replicate.
    std::vector<std::string> reps;
    for (const auto& e : fs::directory_iterator(a.truth)) {
        const std::string name = e.path().filename().string();
        if (e.is_directory() && name.rfind("rep_", 0) == 0) {
            reps.push_back(name);
        }
    }
    std::sort(reps.begin(), reps.end());
    const bool single = reps.empty();
    if (single) {
        reps.emplace_back();
    }
    std::vector<std::vector<std::string>> rows;
    Rng rng(a.seed, StreamKind::Summary);
    for (const auto& rep : reps) {
        const fs::path truth = fs::path(a.truth) / rep / "truth";
        const IntMatrix s_true = read_int_matrix(truth / "spikes.csv");
        const std::vector<int> z_true = read_labels(truth / "labels.csv");
        auto add = [&](const std::string& method, const IntMatrix& s_est, const std::vector<int>& z) {
            const SpikeErrors e = spike_error_rates(s_true, s_est);
            rows.push_back({single ? "0" : rep, method, csv::format_double(e.false_negative),
                            csv::format_double(e.false_positive), csv::format_double(e.misclassification),
                            csv::format_double(adjusted_rand_index(z, z_true))});
        };
        const fs::path cdir = fs::path(a.chain) / rep;
        require_input(cdir);
        const ChainOutput chain = read_chain(cdir);
        const IntMatrix s_joint = (chain.spike_probs.array() > 0.5).cast<int>();
        ViOptions vo;
        vo.restarts = a.restarts;
        add("joint", s_joint, vi_point_estimate(chain.partitions, vo, rng).labels);
        if (!a.baseline.empty()) {
            const fs::path bdir = fs::path(a.baseline) / rep;
            add("baseline", read_int_matrix(bdir / "spikes.csv"), read_labels(bdir / "partition.csv"));
        }
    }
    if (fs::path(a.out).has_parent_path()) {
        fs::create_directories(fs::path(a.out).parent_path());
    }
    csv::write_table(a.out, {"replicate", "method", "fn", "fp", "misclassification", "ari"}, rows);
    Manifest m{"evaluate", argv, a.seed};
    m.config = {{"salso_restarts", a.restarts}, {"spike_threshold", 0.5}};
    m.inputs = {a.truth, a.chain};
    if (!a.baseline.empty()) {
        m.inputs.emplace_back(a.baseline);
    }
    m.write(manifest_beside(a.out));
    out << "wrote " << rows.size() << " metric rows to " << a.out << '\n';
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Joint calcium deconvolution and spatial ensemble clustering", "calens"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Generate synthetic replicates with known truth");
    s->add_option("--config", sim.config, "JSON generator overrides");
    s->add_option("--seed", sim.seed)->required();
    s->add_option("--replicates", sim.replicates)->capture_default_str();
    s->add_option("--out", sim.out)->required();

    SegmentArgs seg;
    auto* g = app.add_subcommand("segment", "Split the experiment into position-defined windows");
    g->add_option("--traces", seg.traces)->required();
    g->add_option("--track", seg.track)->required();
    g->add_option("--arena", seg.arena, "cx,cy,r")->required();
    g->add_option("--min-len", seg.min_len)->capture_default_str();
    g->add_option("--layout", seg.layout, "rows | cols")->capture_default_str();
    g->add_option("--out", seg.out)->required();

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Run the joint Gibbs sampler");
    f->add_option("--traces", fit.traces)->required();
    f->add_option("--locations", fit.locations)->required();
    f->add_option("--window", fit.window, "start:end frame range");
    f->add_option("--windows", fit.windows, "windows CSV; one chain per window");
    f->add_option("--config", fit.config);
    f->add_option("--iters", fit.iters);
    f->add_option("--burnin", fit.burnin);
    f->add_option("--thin", fit.thin);
    f->add_option("--threads", fit.threads);
    f->add_flag("--store-draws", fit.store_draws);
    f->add_option("--jobs", fit.jobs, "windows fitted in parallel")->capture_default_str();
    f->add_option("--layout", fit.layout, "rows | cols")->capture_default_str();
    f->add_option("--seed", fit.seed)->required();
    f->add_option("--out", fit.out)->required();

    BaselineArgs base;
    auto* b = app.add_subcommand("baseline", "Two-stage l0 deconvolution plus consensus k-means");
    b->add_option("--traces", base.traces)->required();
    b->add_option("--k-min", base.k_min)->capture_default_str();
    b->add_option("--k-max", base.k_max)->capture_default_str();
    b->add_option("--replications", base.replications)->capture_default_str();
    b->add_option("--layout", base.layout, "rows | cols")->capture_default_str();
    b->add_option("--seed", base.seed)->required();
    b->add_option("--out", base.out)->required();

    SummarizeArgs sum;
    auto* u = app.add_subcommand("summarize", "Posterior summaries of one or more chains");
    u->add_option("--chain", sum.chains, "chain directory (repeatable)")->required();
    u->add_option("--salso-restarts", sum.restarts)->capture_default_str();
    u->add_option("--track", sum.track);
    u->add_option("--arena", sum.arena, "cx,cy,r");
    u->add_option("--grid", sum.grid)->capture_default_str();
    u->add_option("--bandwidth", sum.bandwidth);
    u->add_option("--seed", sum.seed)->required();
    u->add_option("--out", sum.out)->required();

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Spike and clustering errors against synthetic truth");
    e->add_option("--truth", ev.truth)->required();
    e->add_option("--chain", ev.chain)->required();
    e->add_option("--baseline", ev.baseline);
    e->add_option("--salso-restarts", ev.restarts)->capture_default_str();
    e->add_option("--seed", ev.seed)->required();
    e->add_option("--out", ev.out)->required();

    bool print_defaults = false;
    auto* c = app.add_subcommand("config", "Configuration helpers");
    c->add_flag("--print-defaults", print_defaults);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n\n" << app.help();
        return kUsage;
    }

    std::vector<std::string> argv = args;
    try {
        if (s->parsed()) {
            return cmd_simulate(sim, argv, out);
        }
        if (g->parsed()) {
            return cmd_segment(seg, argv, out);
        }
        if (f->parsed()) {
            return cmd_fit(fit, argv, out);
        }
        if (b->parsed()) {
            return cmd_baseline(base, argv, out);
        }
        if (u->parsed()) {
            return cmd_summarize(sum, argv, out);
        }
        if (e->parsed()) {
            return cmd_evaluate(ev, argv, out);
        }
        if (c->parsed()) {
            if (!print_defaults) {
                err << c->help();
                return kUsage;
            }
            out << to_json(RunConfig{}).dump(2) << '\n';
            return kOk;
        }
    } catch (const MissingInput& ex) {
        err << "error: " << ex.what() << '\n';
        return kMissingInput;
    } catch (const NumericError& ex) {
        err << "numeric failure in step " << (ex.step().empty() ? "unknown" : ex.step()) << ": " << ex.what()
            << '\n';
        return kNumericFailure;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

} // namespace calens::cli
