#include "calens/baseline_two_stage.hpp"

#include "calens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace calens {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// f(x) = curvature * (x - vertex)^2 + floor on [lo, hi]. curvature == 0 is a constant.
struct Piece {
    double lo;
    double hi;
    double curvature;
    double vertex;
    double floor;

    double at(double x) const {
        if (curvature == 0.0) {
            return floor;
        }
        const double d = x - vertex;
        return curvature * d * d + floor;
    }

    bool same_shape(const Piece& o) const {
        return curvature == o.curvature && vertex == o.vertex && floor == o.floor;
    }
};

using PiecewiseQuadratic = std::vector<Piece>;

void push_merged(PiecewiseQuadratic& out, const Piece& p) {
    if (!(p.hi > p.lo)) {
        return;
    }
    if (!out.empty() && out.back().same_shape(p) && out.back().hi == p.lo) {
        out.back().hi = p.hi;
        return;
    }
    out.push_back(p);
}

double eval(const PiecewiseQuadratic& f, double x) {
    auto it = std::lower_bound(f.begin(), f.end(), x,
                               [](const Piece& p, double v) { return p.hi < v; });
    if (it == f.end()) {
        --it;
    }
    return it->at(x);
}

// x -> f(x / gamma)
PiecewiseQuadratic rescale(const PiecewiseQuadratic& f, double gamma) {
    PiecewiseQuadratic out;
    out.reserve(f.size());
    for (const Piece& p : f) {
        Piece q = p;
        q.lo = std::isinf(p.lo) ? p.lo : p.lo * gamma;
        q.hi = std::isinf(p.hi) ? p.hi : p.hi * gamma;
        q.curvature = p.curvature / (gamma * gamma);
        q.vertex = p.vertex * gamma;
        out.push_back(q);
    }
    return out;
}

// x -> min_{u <= x} f(u). Every input piece must be strictly convex.
PiecewiseQuadratic prefix_min(const PiecewiseQuadratic& f) {
    PiecewiseQuadratic out;
    double running = kInf;
    for (const Piece& p : f) {
        const double turn = std::clamp(p.vertex, p.lo, p.hi);
        // Decreasing branch [lo, turn]: constant `running` until f drops below it.
        if (turn > p.lo) {
            double cross = p.lo;
            if (std::isfinite(running)) {
                if (p.at(turn) >= running) {
                    cross = turn;
                } else if (std::isfinite(p.lo) && p.at(p.lo) <= running) {
                    cross = p.lo;
                } else {
                    cross = p.vertex - std::sqrt((running - p.floor) / p.curvature);
                    cross = std::clamp(cross, p.lo, turn);
                }
                push_merged(out, Piece{p.lo, cross, 0.0, 0.0, running});
            }
            push_merged(out, Piece{cross, turn, p.curvature, p.vertex, p.floor});
        }
        running = std::min(running, p.at(turn));
        if (p.hi > turn) {
            push_merged(out, Piece{turn, p.hi, 0.0, 0.0, running});
        }
    }
    return out;
}

// Real roots of q2 u^2 + q1 u + q0 = 0 in ascending order.
std::vector<double> quadratic_roots(double q2, double q1, double q0) {
    std::vector<double> roots;
    const double scale = std::max({std::abs(q2), std::abs(q1), std::abs(q0)});
    if (scale == 0.0) {
        return roots;
    }
    if (std::abs(q2) <= 1e-14 * scale) {
        if (std::abs(q1) > 1e-14 * scale) {
            roots.push_back(-q0 / q1);
        }
        return roots;
    }
    const double disc = q1 * q1 - 4.0 * q2 * q0;
    if (disc < 0.0) {
        return roots;
    }
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (q1 + std::copysign(sq, q1));
    double r1 = q / q2;
    double r2 = q != 0.0 ? q0 / q : r1;
    if (r1 > r2) {
        std::swap(r1, r2);
    }
    roots.push_back(r1);
    if (r2 != r1) {
        roots.push_back(r2);
    }
    return roots;
}

// Points in (lo, hi) where pieces a and b (restricted there) cross.
std::vector<double> crossings(const Piece& a, const Piece& b, double lo, double hi) {
    // Work in u = x - a.vertex to keep coefficients well scaled.
    const double shift = a.curvature > 0.0 ? a.vertex : (b.curvature > 0.0 ? b.vertex : 0.0);
    auto coeffs = [shift](const Piece& p, double& c2, double& c1, double& c0) {
        const double d = p.vertex - shift;
        c2 = p.curvature;
        c1 = -2.0 * p.curvature * d;
        c0 = p.curvature * d * d + p.floor;
    };
    double a2, a1, a0, b2, b1, b0;
    coeffs(a, a2, a1, a0);
    coeffs(b, b2, b1, b0);
    std::vector<double> out;
    for (double r : quadratic_roots(a2 - b2, a1 - b1, a0 - b0)) {
        const double x = r + shift;
        if (x > lo && x < hi) {
            out.push_back(x);
        }
    }
    return out;
}

double probe_point(double lo, double hi) {
    if (std::isinf(lo) && std::isinf(hi)) {
        return 0.0;
    }
    if (std::isinf(lo)) {
        return hi - 1.0 - std::abs(hi);
    }
    if (std::isinf(hi)) {
        return lo + 1.0 + std::abs(lo);
    }
    return 0.5 * (lo + hi);
}

// Pointwise minimum; on ties the piece from `first` wins.
PiecewiseQuadratic pointwise_min(const PiecewiseQuadratic& first, const PiecewiseQuadratic& second) {
    PiecewiseQuadratic out;
    std::size_t i = 0;
    std::size_t j = 0;
    double lo = -kInf;
    while (i < first.size() && j < second.size()) {
        const Piece& a = first[i];
        const Piece& b = second[j];
        const double hi = std::min(a.hi, b.hi);
        std::vector<double> cuts{lo};
        for (double x : crossings(a, b, lo, hi)) {
            cuts.push_back(x);
        }
        cuts.push_back(hi);
        for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
            const double x = probe_point(cuts[c], cuts[c + 1]);
            const Piece& winner = a.at(x) <= b.at(x) ? a : b;
            push_merged(out, Piece{cuts[c], cuts[c + 1], winner.curvature, winner.vertex, winner.floor});
        }
        lo = hi;
        if (a.hi == hi) {
            ++i;
        }
        if (b.hi == hi) {
            ++j;
        }
    }
    return out;
}

void add_constant(PiecewiseQuadratic& f, double c) {
    for (Piece& p : f) {
        p.floor += c;
    }
}

// f(x) + (x - y)^2
void add_square(PiecewiseQuadratic& f, double y) {
    for (Piece& p : f) {
        if (p.curvature == 0.0) {
            p.curvature = 1.0;
            p.vertex = y;
            continue;
        }
        const double a = p.curvature;
        const double total = a + 1.0;
        const double d = p.vertex - y;
        p.vertex = (a * p.vertex + y) / total;
        p.floor += a * d * d / total;
        p.curvature = total;
    }
}

// argmin of f over (-inf, upper]; returns (x, value).
std::pair<double, double> argmin_upto(const PiecewiseQuadratic& f, double upper) {
    double best_x = 0.0;
    double best = kInf;
    for (const Piece& p : f) {
        if (p.lo > upper) {
            break;
        }
        const double hi = std::min(p.hi, upper);
        double x;
        if (p.curvature == 0.0) {
            x = std::isfinite(hi) ? hi : probe_point(p.lo, hi);
        } else {
            x = std::clamp(p.vertex, p.lo, hi);
        }
        const double v = p.at(x);
        if (v < best) {
            best = v;
            best_x = x;
        }
    }
    return {best_x, best};
}

void check_decay(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ArgumentError("decay must lie in (0, 1)");
    }
}

std::vector<double> first_differences(std::span<const double> trace) {
    std::vector<double> d(trace.size() - 1);
    for (std::size_t t = 1; t < trace.size(); ++t) {
        d[t - 1] = trace[t] - trace[t - 1];
    }
    return d;
}

double median(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

std::vector<int> canonical_labels(std::span<const int> labels) {
    std::map<int, int> remap;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()) + 1);
        out[i] = it->second;
    }
    return out;
}

} // namespace

double estimate_noise_sd(std::span<const double> trace) {
    if (trace.size() < 2) {
        throw ArgumentError("noise estimate needs at least two frames");
    }
    auto d = first_differences(trace);
    const double med = median(d);
    for (double& x : d) {
        x = std::abs(x - med);
    }
    return median(std::move(d)) * 1.4826 / std::numbers::sqrt2;
}

L0Fit l0_deconvolve(std::span<const double> y, double gamma, double lambda) {
    check_decay(gamma);
    if (!(lambda >= 0.0)) {
        throw ArgumentError("lambda must be >= 0");
    }
    const std::size_t T = y.size();
    L0Fit fit;
    if (T == 0) {
        return fit;
    }
    // cost[t](x): best objective over frames 0..t with c_t = x.
    std::vector<PiecewiseQuadratic> cost(T);
    cost[0] = {Piece{-kInf, kInf, 1.0, y[0], 0.0}};
    for (std::size_t t = 1; t < T; ++t) {
        PiecewiseQuadratic carry = rescale(cost[t - 1], gamma);
        PiecewiseQuadratic jump = rescale(prefix_min(cost[t - 1]), gamma);
        add_constant(jump, lambda);
        cost[t] = pointwise_min(carry, jump);
        add_square(cost[t], y[t]);
    }

    fit.calcium.resize(static_cast<Eigen::Index>(T));
    auto [x, best] = argmin_upto(cost[T - 1], kInf);
    fit.objective = best;
    fit.calcium[static_cast<Eigen::Index>(T - 1)] = x;
    for (std::size_t t = T - 1; t >= 1; --t) {
        const double u = x / gamma;
        const double stay = eval(cost[t - 1], u);
        auto [prev, jump_value] = argmin_upto(cost[t - 1], u);
        const double tol = 1e-12 * (1.0 + std::abs(stay));
        if (stay <= jump_value + lambda + tol) {
            x = u;
        } else {
            fit.spikes.push_back(t);
            fit.amplitudes.push_back(x - gamma * prev);
            x = prev;
        }
        fit.calcium[static_cast<Eigen::Index>(t - 1)] = x;
    }
    std::reverse(fit.spikes.begin(), fit.spikes.end());
    std::reverse(fit.amplitudes.begin(), fit.amplitudes.end());
    return fit;
}

double l0_objective(std::span<const double> y, const L0Fit& fit, double lambda) {
    double sse = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const double r = y[t] - fit.calcium[static_cast<Eigen::Index>(t)];
        sse += r * r;
    }
    return sse + lambda * static_cast<double>(fit.spikes.size());
}

std::vector<double> lambda_grid(double noise_sd) {
    constexpr int kPoints = 30;
    const double var = noise_sd * noise_sd;
    std::vector<double> grid(kPoints);
    for (int g = 0; g < kPoints; ++g) {
        const double expo = -2.0 + 4.0 * g / (kPoints - 1);
        grid[static_cast<std::size_t>(g)] = std::pow(10.0, expo) * var;
    }
    return grid;
}

LambdaChoice select_lambda(std::span<const double> y, double gamma) {
    if (y.empty()) {
        throw ArgumentError("cannot select lambda for an empty trace");
    }
    const double sd = y.size() >= 2 ? estimate_noise_sd(y) : 0.0;
    LambdaChoice choice;
    for (double lambda : lambda_grid(sd)) {
        L0Fit fit = l0_deconvolve(y, gamma, lambda);
        const bool ok = std::all_of(fit.amplitudes.begin(), fit.amplitudes.end(),
                                    [sd](double a) { return a >= sd; });
        choice.lambda = lambda;
        choice.fit = std::move(fit);
        if (ok) {
            choice.qualified = true;
            return choice;
        }
    }
    choice.qualified = false;
    return choice;
}

double estimate_decay(std::span<const double> y, std::span<const std::size_t> spikes, double lo,
                      double hi) {
    if (y.size() < 2) {
        return 0.5 * (lo + hi);
    }
    std::vector<std::size_t> starts{0};
    for (std::size_t s : spikes) {
        if (s > 0 && s < y.size()) {
            starts.push_back(s);
        }
    }
    starts.push_back(y.size());
    auto segment_cost = [&](double gamma) {
        double total = 0.0;
        for (std::size_t k = 0; k + 1 < starts.size(); ++k) {
            double syy = 0.0, syg = 0.0, sgg = 0.0, g = 1.0;
            for (std::size_t t = starts[k]; t < starts[k + 1]; ++t) {
                syy += y[t] * y[t];
                syg += y[t] * g;
                sgg += g * g;
                g *= gamma;
            }
            total += syy - syg * syg / sgg;
        }
        return total;
    };
    constexpr int kSteps = 100;
    double best_gamma = lo;
    double best = kInf;
    for (int i = 0; i < kSteps; ++i) {
        const double gamma = lo + (hi - lo) * i / (kSteps - 1);
        const double c = segment_cost(gamma);
        if (c < best) {
            best = c;
            best_gamma = gamma;
        }
    }
    return best_gamma;
}

TraceDeconvolution deconvolve_trace(std::span<const double> y, double initial_gamma) {
    TraceDeconvolution out;
    LambdaChoice first = select_lambda(y, initial_gamma);
    out.gamma = estimate_decay(y, first.fit.spikes);
    LambdaChoice second = select_lambda(y, out.gamma);
    out.lambda = second.lambda;
    out.lambda_qualified = second.qualified;
    out.fit = std::move(second.fit);
    return out;
}

IntMatrix deconvolve_spikes(const Matrix& y, std::vector<TraceDeconvolution>* details) {
    IntMatrix s = IntMatrix::Zero(y.rows(), y.cols());
    if (details) {
        details->clear();
    }
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const Vector row = y.row(i).transpose();
        TraceDeconvolution d = deconvolve_trace(std::span<const double>(row.data(), row.size()));
        for (std::size_t t : d.fit.spikes) {
            s(i, static_cast<Eigen::Index>(t)) = 1;
        }
        if (details) {
            details->push_back(std::move(d));
        }
    }
    return s;
}

KMeansResult kmeans(const Matrix& points, int k, Rng& rng, int max_iter) {
    const Eigen::Index n = points.rows();
    if (k < 1 || k > n) {
        throw ArgumentError("k-means needs 1 <= k <= number of points");
    }
    KMeansResult res;
    res.centers.resize(k, points.cols());
    // k-means++ seeding.
    std::vector<double> d2(static_cast<std::size_t>(n), kInf);
    Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
    res.centers.row(0) = points.row(first);
    for (int c = 1; c < k; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            d2[static_cast<std::size_t>(i)] = std::min(
                d2[static_cast<std::size_t>(i)], (points.row(i) - res.centers.row(c - 1)).squaredNorm());
        }
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index pick;
        if (total > 0.0) {
            pick = static_cast<Eigen::Index>(rng.categorical(d2));
        } else {
            pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
        }
        res.centers.row(c) = points.row(pick);
    }

    res.labels.assign(static_cast<std::size_t>(n), 0);
    std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = iter == 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = kInf;
            for (int c = 0; c < k; ++c) {
                const double d = (points.row(i) - res.centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            dist[static_cast<std::size_t>(i)] = bd;
            if (res.labels[static_cast<std::size_t>(i)] != best) {
                res.labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        Matrix sums = Matrix::Zero(k, points.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = res.labels[static_cast<std::size_t>(i)];
            sums.row(c) += points.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                res.centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
            } else {
                const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
                res.centers.row(c) = points.row(far);
                dist[static_cast<std::size_t>(far)] = 0.0;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }
    res.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        res.inertia += (points.row(i) - res.centers.row(res.labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return res;
}

double mean_silhouette(const Matrix& points, std::span<const int> labels) {
    const Eigen::Index n = points.rows();
    if (n < 2) {
        return 0.0;
    }
    std::map<int, int> sizes;
    for (int l : labels) {
        ++sizes[l];
    }
    if (sizes.size() < 2) {
        return 0.0;
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = labels[static_cast<std::size_t>(i)];
        if (sizes[own] == 1) {
            continue;
        }
        std::map<int, double> sum;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) {
                sum[labels[static_cast<std::size_t>(j)]] += (points.row(i) - points.row(j)).norm();
            }
        }
        const double a = sum[own] / (sizes[own] - 1);
        double b = kInf;
        for (const auto& [label, s] : sum) {
            if (label != own) {
                b = std::min(b, s / sizes[label]);
            }
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

ConsensusResult consensus_kmeans(const Matrix& spikes, const ConsensusOptions& options, Rng& rng) {
    if (options.k_min < 1 || options.k_max < options.k_min) {
        throw ArgumentError("consensus k-means needs 1 <= k_min <= k_max");
    }
    if (!(options.subsample_frac > 0.0 && options.subsample_frac <= 1.0)) {
        throw ArgumentError("subsample fraction must lie in (0, 1]");
    }
    if (options.replications < 1) {
        throw ArgumentError("consensus k-means needs at least one replication");
    }
    const Eigen::Index n = spikes.rows();
    if (n < options.k_min) {
        throw ArgumentError("fewer neurons than the smallest candidate k");
    }
    const auto m = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::round(options.subsample_frac * static_cast<double>(n))));

    ConsensusResult result;
    std::vector<int> ks;
    for (int k = options.k_min; k <= options.k_max; ++k) {
        if (k > m) {
            result.warnings.push_back("skipping k=" + std::to_string(k) + ": exceeds subsample size " +
                                      std::to_string(m));
            continue;
        }
        ks.push_back(k);
    }
    if (ks.empty()) {
        throw ArgumentError("no candidate k fits the subsample size");
    }

    Matrix together_sampled = Matrix::Zero(n, n);
    std::map<int, Matrix> together_assigned;
    for (int k : ks) {
        together_assigned[k] = Matrix::Zero(n, n);
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (int rep = 0; rep < options.replications; ++rep) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::shuffle(order.begin(), order.end(), rng.engine());
        std::vector<Eigen::Index> subset(order.begin(), order.begin() + m);
        std::sort(subset.begin(), subset.end());
        Matrix sub(m, spikes.cols());
        for (Eigen::Index r = 0; r < m; ++r) {
            sub.row(r) = spikes.row(subset[static_cast<std::size_t>(r)]);
        }
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) {
                together_sampled(subset[static_cast<std::size_t>(a)], subset[static_cast<std::size_t>(b)]) += 1.0;
            }
        }
        for (int k : ks) {
            const KMeansResult km = kmeans(sub, k, rng, options.max_iter);
            Matrix& acc = together_assigned[k];
            for (Eigen::Index a = 0; a < m; ++a) {
                for (Eigen::Index b = 0; b < m; ++b) {
                    if (km.labels[static_cast<std::size_t>(a)] == km.labels[static_cast<std::size_t>(b)]) {
                        acc(subset[static_cast<std::size_t>(a)], subset[static_cast<std::size_t>(b)]) += 1.0;
                    }
                }
            }
        }
    }

    double best_score = -kInf;
    for (int k : ks) {
        Matrix consensus = Matrix::Zero(n, n);
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = 0; b < n; ++b) {
                const double s = together_sampled(a, b);
                consensus(a, b) = s > 0.0 ? together_assigned[k](a, b) / s : 0.0;
            }
            consensus(a, a) = 1.0;
        }
        if (k > n) {
            continue;
        }
        KMeansResult best;
        best.inertia = kInf;
        for (int r = 0; r < std::max(1, options.final_restarts); ++r) {
            KMeansResult km = kmeans(consensus, k, rng, options.max_iter);
            if (km.inertia < best.inertia) {
                best = std::move(km);
            }
        }
        const double score = mean_silhouette(consensus, best.labels);
        result.silhouette_by_k[k] = score;
        if (score > best_score) {
            best_score = score;
            result.k = k;
            result.labels = canonical_labels(best.labels);
            result.consensus = std::move(consensus);
        }
    }
    return result;
}

} // namespace calens
