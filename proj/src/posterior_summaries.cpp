#include "calens/posterior_summaries.hpp"

#include "calens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace calens {

std::vector<int> canonical_partition(std::span<const int> labels) {
    std::unordered_map<int, int> remap;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()) + 1);
        out[i] = it->second;
    }
    return out;
}

Matrix similarity_matrix(const IntMatrix& partitions) {
    const Eigen::Index D = partitions.rows();
    const Eigen::Index n = partitions.cols();
    if (D < 1) {
        throw ArgumentError("similarity matrix needs at least one draw");
    }
    Matrix counts = Matrix::Zero(n, n);
    for (Eigen::Index d = 0; d < D; ++d) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < i; ++j) {
                if (partitions(d, i) == partitions(d, j)) {
                    counts(i, j) += 1.0;
                }
            }
        }
    }
    Matrix probs(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        probs(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            probs(i, j) = probs(j, i) = counts(i, j) / static_cast<double>(D);
        }
    }
    return probs;
}

namespace {

double xlogx(double x) {
    return x > 0.0 ? x * std::log(x) : 0.0;
}

// Compact 0-based relabeling; returns the number of labels.
int compact(std::span<const int> labels, std::vector<int>& out) {
    std::unordered_map<int, int> remap;
    out.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
        out[i] = it->second;
    }
    return static_cast<int>(remap.size());
}

} // namespace

double variation_of_information(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) {
        throw ArgumentError("partitions must label the same number of items");
    }
    if (a.empty()) {
        return 0.0;
    }
    std::vector<int> ca, cb;
    const int ka = compact(a, ca);
    const int kb = compact(b, cb);
    std::vector<double> na(static_cast<std::size_t>(ka), 0.0), nb(static_cast<std::size_t>(kb), 0.0);
    std::vector<double> nab(static_cast<std::size_t>(ka) * static_cast<std::size_t>(kb), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        na[static_cast<std::size_t>(ca[i])] += 1.0;
        nb[static_cast<std::size_t>(cb[i])] += 1.0;
        nab[static_cast<std::size_t>(ca[i]) * static_cast<std::size_t>(kb) + static_cast<std::size_t>(cb[i])] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    // VI = sum p log p + sum q log q - 2 sum r log r over proportions.
    double s = 0.0;
    for (double x : na) {
        s += xlogx(x / n);
    }
    for (double x : nb) {
        s += xlogx(x / n);
    }
    for (double x : nab) {
        s -= 2.0 * xlogx(x / n);
    }
    return std::max(0.0, s);
}

double expected_vi(std::span<const int> candidate, const IntMatrix& partitions) {
    const Eigen::Index D = partitions.rows();
    if (D < 1) {
        throw ArgumentError("expected VI needs at least one draw");
    }
    double total = 0.0;
    for (Eigen::Index d = 0; d < D; ++d) {
        total += variation_of_information(candidate,
                                          {partitions.row(d).data(), static_cast<std::size_t>(partitions.cols())});
    }
    return total / static_cast<double>(D);
}

namespace {

// Incremental expected-VI bookkeeping over cluster slots. Up to terms constant
// in the candidate, n * E[VI] = sum_k f(a_k) - (2/D) sum_d sum_{k,l} f(n^d_{kl})
// with f(x) = x log x, a_k the slot sizes and n^d the contingency counts.
class ViSearch {
public:
    ViSearch(const IntMatrix& partitions, int cap)
        : n_(static_cast<int>(partitions.cols())), D_(static_cast<int>(partitions.rows())), cap_(cap) {
        draw_labels_.resize(static_cast<std::size_t>(D_) * static_cast<std::size_t>(n_));
        L_ = 1;
        std::vector<int> tmp;
        for (int d = 0; d < D_; ++d) {
            const int k = compact({partitions.row(d).data(), static_cast<std::size_t>(n_)}, tmp);
            L_ = std::max(L_, k);
            std::copy(tmp.begin(), tmp.end(), draw_labels_.begin() + static_cast<std::ptrdiff_t>(d) * n_);
        }
        g_.resize(static_cast<std::size_t>(n_) + 1);
        for (int x = 0; x <= n_; ++x) {
            g_[static_cast<std::size_t>(x)] = xlogx(x + 1.0) - xlogx(x);
        }
        reset();
    }

    void reset() {
        size_.assign(static_cast<std::size_t>(cap_), 0);
        counts_.assign(static_cast<std::size_t>(D_) * static_cast<std::size_t>(cap_) * static_cast<std::size_t>(L_),
                       0);
        slot_.assign(static_cast<std::size_t>(n_), -1);
    }

    int n() const { return n_; }
    int slot(int i) const { return slot_[static_cast<std::size_t>(i)]; }

    double insert_delta(int i, int k) const {
        double s = 0.0;
        for (int d = 0; d < D_; ++d) {
            s += g_[static_cast<std::size_t>(count(d, k, label(d, i)))];
        }
        return g_[static_cast<std::size_t>(size_[static_cast<std::size_t>(k)])] - 2.0 * s / D_;
    }

    void insert(int i, int k) {
        slot_[static_cast<std::size_t>(i)] = k;
        ++size_[static_cast<std::size_t>(k)];
        for (int d = 0; d < D_; ++d) {
            ++count(d, k, label(d, i));
        }
    }

    void remove(int i) {
        const int k = slot_[static_cast<std::size_t>(i)];
        slot_[static_cast<std::size_t>(i)] = -1;
        --size_[static_cast<std::size_t>(k)];
        for (int d = 0; d < D_; ++d) {
            --count(d, k, label(d, i));
        }
    }

    // Best slot for unassigned item i: every occupied slot plus the first empty one.
    // Ties go to `preferred` when it is a candidate, else the lowest slot.
    int best_slot(int i, int preferred) const {
        int best = -1;
        double best_delta = std::numeric_limits<double>::infinity();
        bool empty_seen = false;
        double preferred_delta = std::numeric_limits<double>::infinity();
        for (int k = 0; k < cap_; ++k) {
            const bool empty = size_[static_cast<std::size_t>(k)] == 0;
            if (empty && empty_seen && k != preferred) {
                continue;
            }
            if (empty && k != preferred) {
                empty_seen = true;
            }
            const double delta = insert_delta(i, k);
            if (k == preferred) {
                preferred_delta = delta;
            }
            if (delta < best_delta) {
                best_delta = delta;
                best = k;
            }
        }
        if (preferred >= 0 && preferred_delta <= best_delta + 1e-12) {
            return preferred;
        }
        return best;
    }

    std::vector<int> labels() const { return slot_; }

private:
    int label(int d, int i) const {
        return draw_labels_[static_cast<std::size_t>(d) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i)];
    }
    int& count(int d, int k, int l) {
        return counts_[(static_cast<std::size_t>(d) * static_cast<std::size_t>(cap_) + static_cast<std::size_t>(k)) *
                           static_cast<std::size_t>(L_) +
                       static_cast<std::size_t>(l)];
    }
    int count(int d, int k, int l) const {
        return counts_[(static_cast<std::size_t>(d) * static_cast<std::size_t>(cap_) + static_cast<std::size_t>(k)) *
                           static_cast<std::size_t>(L_) +
                       static_cast<std::size_t>(l)];
    }

    int n_;
    int D_;
    int cap_;
    int L_;
    std::vector<int> draw_labels_;
    std::vector<double> g_;
    std::vector<int> size_;
    std::vector<int> counts_;
    std::vector<int> slot_;
};

void refine(ViSearch& search, int max_sweeps) {
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool moved = false;
        for (int i = 0; i < search.n(); ++i) {
            const int from = search.slot(i);
            search.remove(i);
            const int to = search.best_slot(i, from);
            search.insert(i, to);
            moved = moved || to != from;
        }
        if (!moved) {
            return;
        }
    }
}

} // namespace

ViResult vi_point_estimate(const IntMatrix& partitions, const ViOptions& options, Rng& rng) {
    if (options.restarts < 1) {
        throw ArgumentError("vi_point_estimate needs restarts >= 1");
    }
    const Eigen::Index D = partitions.rows();
    const int n = static_cast<int>(partitions.cols());
    if (D < 1) {
        throw ArgumentError("vi_point_estimate needs at least one draw");
    }
    if (n == 0) {
        return {};
    }
    const int cap = options.max_clusters > 0 ? std::min(options.max_clusters, n) : n;
    ViSearch search(partitions, cap);

    ViResult best;
    best.expected_vi = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<int>& labels) {
        std::vector<int> canon = canonical_partition(labels);
        const double loss = expected_vi(canon, partitions);
        if (loss < best.expected_vi - 1e-12 || best.labels.empty()) {
            best.labels = std::move(canon);
            best.expected_vi = loss;
        }
    };

    // Restart 0: the best-scoring draw among an evenly spaced subset.
    const int candidates = static_cast<int>(std::min<Eigen::Index>(D, std::max(1, options.candidate_draws)));
    std::vector<int> start;
    double start_loss = std::numeric_limits<double>::infinity();
    std::vector<int> compacted;
    for (int c = 0; c < candidates; ++c) {
        const Eigen::Index d = static_cast<Eigen::Index>(c) * D / candidates;
        const int k = compact({partitions.row(d).data(), static_cast<std::size_t>(n)}, compacted);
        if (k > cap) {
            continue;
        }
        const double loss = expected_vi(compacted, partitions);
        if (loss < start_loss) {
            start_loss = loss;
            start = compacted;
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int r = 0; r < options.restarts; ++r) {
        search.reset();
        if (r == 0 && !start.empty()) {
            for (int i = 0; i < n; ++i) {
                search.insert(i, start[static_cast<std::size_t>(i)]);
            }
        } else {
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng.engine());
            for (int i : order) {
                search.insert(i, search.best_slot(i, -1));
            }
        }
        refine(search, options.max_sweeps);
        consider(search.labels());
    }
    return best;
}

ClusterCountSummary num_clusters_summary(const IntMatrix& partitions) {
    if (partitions.rows() < 1) {
        throw ArgumentError("cluster count summary needs at least one draw");
    }
    ClusterCountSummary s;
    std::vector<int> tmp;
    for (Eigen::Index d = 0; d < partitions.rows(); ++d) {
        const int k = compact({partitions.row(d).data(), static_cast<std::size_t>(partitions.cols())}, tmp);
        s.counts.push_back(k);
        s.histogram[k] += 1;
    }
    long best = -1;
    for (const auto& [k, c] : s.histogram) {
        if (c > best) {  // map iterates in increasing k, so ties keep the smaller count
            best = c;
            s.mode = k;
        }
    }
    const double m = std::accumulate(s.counts.begin(), s.counts.end(), 0.0) / static_cast<double>(s.counts.size());
    double v = 0.0;
    for (int k : s.counts) {
        v += (k - m) * (k - m);
    }
    s.variance = v / static_cast<double>(s.counts.size());
    return s;
}

CrossWindowSummary cross_window_coclustering(const std::vector<std::vector<int>>& partitions) {
    if (partitions.empty()) {
        throw ArgumentError("cross-window co-clustering needs at least one window");
    }
    const std::size_t n = partitions.front().size();
    IntMatrix stacked(static_cast<Eigen::Index>(partitions.size()), static_cast<Eigen::Index>(n));
    for (std::size_t w = 0; w < partitions.size(); ++w) {
        if (partitions[w].size() != n) {
            throw ArgumentError("windows disagree on the number of neurons");
        }
        for (std::size_t i = 0; i < n; ++i) {
            stacked(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(i)) = partitions[w][i];
        }
    }
    CrossWindowSummary s;
    s.frequency = similarity_matrix(stacked);
    long above = 0;
    long pairs = 0;
    for (Eigen::Index i = 0; i < s.frequency.rows(); ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            ++pairs;
            above += s.frequency(i, j) > 0.5 ? 1 : 0;
        }
    }
    s.fraction_pairs_above_half = pairs > 0 ? static_cast<double>(above) / static_cast<double>(pairs) : 0.0;
    return s;
}

int Grid::cell_of(Point2 p) const {
    const double fx = (p.x - x0) / cell_w;
    const double fy = (p.y - y0) / cell_h;
    if (!(fx >= 0.0 && fy >= 0.0 && fx <= nx && fy <= ny)) {
        return -1;
    }
    const int ix = std::min(nx - 1, static_cast<int>(fx));
    const int iy = std::min(ny - 1, static_cast<int>(fy));
    return iy * nx + ix;
}

Point2 Grid::center(int ix, int iy) const {
    return {x0 + (ix + 0.5) * cell_w, y0 + (iy + 0.5) * cell_h};
}

Grid arena_grid(Point2 center, double radius, int resolution) {
    if (!(radius > 0.0) || resolution < 1) {
        throw ArgumentError("arena grid needs a positive radius and resolution");
    }
    Grid g;
    g.x0 = center.x - radius;
    g.y0 = center.y - radius;
    g.cell_w = g.cell_h = 2.0 * radius / resolution;
    g.nx = g.ny = resolution;
    return g;
}

std::vector<Matrix> spatial_firing_map(const std::vector<WindowSpikes>& windows, std::span<const Point2> track,
                                       const Grid& grid) {
    if (windows.empty()) {
        return {};
    }
    const Eigen::Index n = windows.front().spike_probs.rows();
    std::vector<Matrix> sums(static_cast<std::size_t>(n), Matrix::Zero(grid.ny, grid.nx));
    Matrix visits = Matrix::Zero(grid.ny, grid.nx);
    for (const WindowSpikes& w : windows) {
        if (w.spike_probs.rows() != n) {
            throw ArgumentError("windows disagree on the number of neurons");
        }
        for (Eigen::Index t = 0; t < w.spike_probs.cols(); ++t) {
            const std::size_t frame = w.start + static_cast<std::size_t>(t);
            if (frame >= track.size()) {
                throw ArgumentError("window frames extend past the track");
            }
            const int cell = grid.cell_of(track[frame]);
            if (cell < 0) {
                continue;
            }
            const int iy = cell / grid.nx;
            const int ix = cell % grid.nx;
            visits(iy, ix) += 1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                sums[static_cast<std::size_t>(i)](iy, ix) += w.spike_probs(i, t);
            }
        }
    }
    for (Matrix& m : sums) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                m(r, c) = visits(r, c) > 0.0 ? m(r, c) / visits(r, c) : NAN;
            }
        }
    }
    return sums;
}

double kernel_smooth(Point2 query, std::span<const Point2> points, std::span<const double> values,
                     double bandwidth) {
    if (!(bandwidth > 0.0)) {
        throw ArgumentError("bandwidth must be positive");
    }
    if (points.empty() || points.size() != values.size()) {
        throw ArgumentError("kernel smoothing needs matching, nonempty points and values");
    }
    double min_d2 = std::numeric_limits<double>::infinity();
    std::vector<double> d2(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        const double dx = points[k].x - query.x;
        const double dy = points[k].y - query.y;
        d2[k] = dx * dx + dy * dy;
        min_d2 = std::min(min_d2, d2[k]);
    }
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
        const double w = std::exp(-(d2[k] - min_d2) * inv);
        num += w * values[k];
        den += w;
    }
    return num / den;
}

ComplexityMaps spatial_complexity_map(std::span<const WindowComplexity> per_window, std::span<const Point2> track,
                                      std::span<const WindowSpec> windows, double bandwidth, const Grid& grid) {
    if (!(bandwidth > 0.0)) {
        throw ArgumentError("bandwidth must be positive");
    }
    if (per_window.size() != windows.size()) {
        throw ArgumentError("need one (mode, variance) pair per window");
    }
    ComplexityMaps out;
    std::vector<Point2> pts;
    std::vector<double> modes, vars;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        for (std::size_t f = windows[w].start; f < windows[w].end; ++f) {
            if (f >= track.size()) {
                throw ArgumentError("window frames extend past the track");
            }
            out.points.push_back({f, track[f], per_window[w].mode, per_window[w].variance});
            pts.push_back(track[f]);
            modes.push_back(per_window[w].mode);
            vars.push_back(per_window[w].variance);
        }
    }
    out.mode = Matrix::Constant(grid.ny, grid.nx, NAN);
    out.variance = Matrix::Constant(grid.ny, grid.nx, NAN);
    if (pts.empty()) {
        return out;
    }
    std::vector<char> occupied(static_cast<std::size_t>(grid.nx * grid.ny), 0);
    for (const Point2& p : pts) {
        const int cell = grid.cell_of(p);
        if (cell >= 0) {
            occupied[static_cast<std::size_t>(cell)] = 1;
        }
    }
    const double reach2 = 9.0 * bandwidth * bandwidth;
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const Point2 q = grid.center(ix, iy);
            bool near = occupied[static_cast<std::size_t>(iy * grid.nx + ix)] != 0;
            for (std::size_t k = 0; k < pts.size() && !near; ++k) {
                const double dx = pts[k].x - q.x;
                const double dy = pts[k].y - q.y;
                near = dx * dx + dy * dy <= reach2;
            }
            if (!near) {
                continue;
            }
            out.mode(iy, ix) = kernel_smooth(q, pts, modes, bandwidth);
            out.variance(iy, ix) = kernel_smooth(q, pts, vars, bandwidth);
        }
    }
    return out;
}

} // namespace calens
