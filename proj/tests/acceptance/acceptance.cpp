// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
// Usage: acceptance [criterion ...]   (default: all)
// CALENS_ACCEPT_REPLICATES and CALENS_ACCEPT_ITERS shrink criteria 4-5 for
// local experiments; the defaults are the gating sizes.

#include "calens/baseline_two_stage.hpp"
#include "calens/calcium_dynamics.hpp"
#include "calens/chain_io.hpp"
#include "calens/ensemble_clustering.hpp"
#include "calens/geweke.hpp"
#include "calens/posterior_summaries.hpp"
#include "calens/sampler.hpp"
#include "calens/synthetic_bench.hpp"
#include "calens/trace_ingest.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <tbb/global_control.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace calens;
namespace fs = std::filesystem;

namespace {

int failures = 0;
std::FILE* report_file = nullptr;

// printf to stdout and to the report file in the working directory.
template <typename... Args>
void emit(const char* f, Args... args) {
    std::printf(f, args...);
    std::fflush(stdout);
    if (report_file) {
        std::fprintf(report_file, f, args...);
        std::fflush(report_file);
    }
}

void report(bool ok, const std::string& label, const std::string& detail) {
    emit("%s %s: %s\n", ok ? "PASS" : "FAIL", label.c_str(), detail.c_str());
    failures += ok ? 0 : 1;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int env_int(const char* name, int fallback) {
    const char* v = std::getenv(name);
    return v ? std::atoi(v) : fallback;
}

// ------------------------------------------------------------- criterion 1

// Joint Gaussian of (c_0..c_T, y_1..y_T) built densely, then conditioned on y.
void dense_conditional(const std::vector<double>& y, double b, double gamma, double sigma2, double tau2,
                       const std::vector<double>& a, double C0, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    const int T = static_cast<int>(y.size());
    const int N = T + 1;
    // c = L e + m with e ~ N(0, diag(C0, tau2, ...)).
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(N);
    for (int t = 0; t < N; ++t) {
        for (int s = 0; s <= t; ++s) {
            L(t, s) = std::pow(gamma, t - s);
        }
        if (t > 0) {
            m[t] = gamma * m[t - 1] + a[static_cast<std::size_t>(t - 1)];
        }
    }
    Eigen::VectorXd d = Eigen::VectorXd::Constant(N, tau2);
    d[0] = C0;
    const Eigen::MatrixXd Scc = L * d.asDiagonal() * L.transpose();
    const Eigen::MatrixXd Scy = Scc.rightCols(T);
    Eigen::MatrixXd Syy = Scc.bottomRightCorner(T, T);
    Syy.diagonal().array() += sigma2;
    Eigen::VectorXd yv(T);
    for (int t = 0; t < T; ++t) {
        yv[t] = y[static_cast<std::size_t>(t)] - b - m[t + 1];
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(Syy);
    mean = m + Scy * ldlt.solve(yv);
    cov = Scc - Scy * ldlt.solve(Scy.transpose());
}

void criterion1() {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const int T = 1 + static_cast<int>(rng.uniform_index(5));
        std::vector<double> y(static_cast<std::size_t>(T)), a(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            y[static_cast<std::size_t>(t)] = 3.0 * rng.normal();
            a[static_cast<std::size_t>(t)] = rng.uniform() < 0.3 ? 5.0 * rng.uniform() : 0.0;
        }
        const double b = rng.normal();
        const double gamma = 0.05 + 0.9 * rng.uniform();
        const double sigma2 = 0.1 + 2.0 * rng.uniform();
        const double tau2 = 0.1 + 2.0 * rng.uniform();
        const double C0 = 0.5 + 10.0 * rng.uniform();
        Eigen::VectorXd mean;
        Eigen::MatrixXd cov;
        dense_conditional(y, b, gamma, sigma2, tau2, a, C0, mean, cov);
        const GaussianMoments g =
            backward_path_moments(backward_kernel(kalman_filter(y, b, gamma, sigma2, tau2, a, C0), gamma, tau2));
        worst = std::max(worst, (g.mean - mean).cwiseAbs().maxCoeff());
        worst = std::max(worst, (g.cov - cov).cwiseAbs().maxCoeff());
    }
    report(worst < 1e-8, "criterion 1a (FFBS vs dense conditioning, 500 instances, T<=5)",
           fmt("max abs deviation %.3g", worst));

    // Closed forms written out independently of the library.
    const int n = 4;
    const int T = 7;
    Matrix y(n, T), c(n, T + 1), am = Matrix::Zero(n, T);
    Vector bv(n);
    for (int i = 0; i < n; ++i) {
        bv[i] = rng.normal();
        for (int t = 0; t <= T; ++t) {
            c(i, t) = 2.0 * rng.normal();
        }
        for (int t = 0; t < T; ++t) {
            y(i, t) = 1.0 + c(i, t + 1) + rng.normal();
            am(i, t) = rng.uniform() < 0.2 ? 4.0 : 0.0;
        }
    }
    const double sigma2 = 1.3, gamma = 0.8, b0 = 0.2, B0 = 5.0, as = 2.0, bs = 1.5, at = 3.0, bt = 0.7;
    bool exact = true;
    double sum_r = 0.0;
    for (int t = 0; t < T; ++t) {
        sum_r += y(0, t) - c(0, t + 1);
    }
    const double post_var = 1.0 / (T / sigma2 + 1.0 / B0);
    const double post_mean = post_var * (sum_r / sigma2 + b0 / B0);
    const NormalParams bp = baseline_posterior({y.row(0).data(), static_cast<std::size_t>(T)},
                                               {c.row(0).data() + 1, static_cast<std::size_t>(T)}, sigma2, b0, B0);
    exact = exact && std::abs(bp.mean - post_mean) < 1e-12 && std::abs(bp.var - post_var) < 1e-12;
    double ss_y = 0.0, ss_c = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < T; ++t) {
            ss_y += std::pow(y(i, t) - bv[i] - c(i, t + 1), 2);
            ss_c += std::pow(c(i, t + 1) - gamma * c(i, t) - am(i, t), 2);
        }
    }
    const GammaParams sp = sigma2_posterior(y, bv, c, as, bs);
    const GammaParams tp = tau2_posterior(c, gamma, am, at, bt);
    exact = exact && std::abs(sp.shape - (as + n * T / 2.0)) < 1e-12 && std::abs(sp.rate - (bs + ss_y / 2.0)) < 1e-9;
    exact = exact && std::abs(tp.shape - (at + n * T / 2.0)) < 1e-12 && std::abs(tp.rate - (bt + ss_c / 2.0)) < 1e-9;
    report(exact, "criterion 1b (baseline, sigma2, tau2 closed forms)", exact ? "exact to 1e-9" : "mismatch");

    const int draws = 100000;
    double mb = 0.0, mb2 = 0.0, ps = 0.0, ps2 = 0.0, pt = 0.0, pt2 = 0.0;
    Rng mc(102);
    for (int d = 0; d < draws; ++d) {
        const double b = sample_baseline({y.row(0).data(), static_cast<std::size_t>(T)},
                                         {c.row(0).data() + 1, static_cast<std::size_t>(T)}, sigma2, b0, B0, mc);
        const double s = 1.0 / sample_sigma2(y, bv, c, as, bs, mc);
        const double u = 1.0 / sample_tau2(c, gamma, am, at, bt, mc);
        mb += b / draws;
        mb2 += b * b / draws;
        ps += s / draws;
        ps2 += s * s / draws;
        pt += u / draws;
        pt2 += u * u / draws;
    }
    auto within = [&](double m, double m2, double target_mean, double target_var, std::string& detail) {
        const double v = m2 - m * m;
        const double se_mean = std::sqrt(target_var / draws);
        // Var of the sample variance is about (mu4 - sigma^4) / N; 2 sigma^4 for a Gaussian,
        // (6/shape + 2) sigma^4 for a Gamma.
        const bool ok_mean = std::abs(m - target_mean) < 3.0 * se_mean;
        detail += fmt(" mean z=%.2f", (m - target_mean) / se_mean);
        return std::pair{ok_mean, v};
    };
    std::string detail;
    auto [okb, vb] = within(mb, mb2, post_mean, post_var, detail);
    const double se_vb = std::sqrt(2.0 / draws) * post_var;
    const bool okvb = std::abs(vb - post_var) < 3.0 * se_vb;
    detail += fmt(" var z=%.2f;", (vb - post_var) / se_vb);
    auto [oks, vs] = within(ps, ps2, sp.shape / sp.rate, sp.shape / (sp.rate * sp.rate), detail);
    const double tvs = sp.shape / (sp.rate * sp.rate);
    const double se_vs = std::sqrt((6.0 / sp.shape + 2.0) / draws) * tvs;
    const bool okvs = std::abs(vs - tvs) < 3.0 * se_vs;
    detail += fmt(" var z=%.2f;", (vs - tvs) / se_vs);
    auto [okt, vt] = within(pt, pt2, tp.shape / tp.rate, tp.shape / (tp.rate * tp.rate), detail);
    const double tvt = tp.shape / (tp.rate * tp.rate);
    const double se_vt = std::sqrt((6.0 / tp.shape + 2.0) / draws) * tvt;
    const bool okvt = std::abs(vt - tvt) < 3.0 * se_vt;
    detail += fmt(" var z=%.2f", (vt - tvt) / se_vt);
    report(okb && okvb && oks && okvs && okt && okvt, "criterion 1c (MC moments at 1e5 draws within 3 SE)", detail);
}

// ------------------------------------------------------------- criterion 2

void criterion2() {
    Hyperparams h;
    h.K_max = 5;
    h.J_max = 5;
    GewekeOptions opt;
    opt.neurons = 3;
    opt.frames = 8;
    opt.cycles = 50000;
    opt.seed = 7;
    const GewekeReport ok = geweke_check(h, opt);
    double min_adj = 1.0;
    std::string worst;
    for (const auto& s : ok.stats) {
        if (s.p_adjusted <= min_adj) {
            min_adj = s.p_adjusted;
            worst = s.name;
        }
    }
    report(ok.passed(0.01), "criterion 2a (Geweke, n=3 T=8 K=5 J=5, 5e4 cycles, 20 statistics)",
           "min Bonferroni p " + fmt("%.3g", min_adj) + " (" + worst + ")");
    opt.hooks.sigma2_rate_multiplier = 2.0;
    const GewekeReport bad = geweke_check(h, opt);
    report(!bad.passed(0.01) && bad.min_p() < 1e-4, "criterion 2b (mutated sigma2 update is detected)",
           "min p " + fmt("%.3g", bad.min_p()));
}

// ------------------------------------------------------------- criterion 3

double exhaustive_l0(const std::vector<double>& y, double gamma, double lambda) {
    const int T = static_cast<int>(y.size());
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), T);
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1u << (T - 1)); ++mask) {
        std::vector<int> S;
        for (int t = 1; t < T; ++t) {
            if (mask & (1u << (t - 1))) {
                S.push_back(t);
            }
        }
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(T, static_cast<Eigen::Index>(S.size()) + 1);
        for (int t = 0; t < T; ++t) {
            X(t, 0) = std::pow(gamma, t);
            for (std::size_t j = 0; j < S.size(); ++j) {
                if (t >= S[j]) {
                    X(t, static_cast<Eigen::Index>(j) + 1) = std::pow(gamma, t - S[j]);
                }
            }
        }
        const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(yv);
        if ((beta.tail(beta.size() - 1).array() < 0.0).any()) {
            continue;
        }
        best = std::min(best, (yv - X * beta).squaredNorm() + lambda * static_cast<double>(S.size()));
    }
    return best;
}

std::vector<std::vector<int>> set_partitions(int n) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(n), 1);
    std::function<void(int, int)> rec = [&](int i, int k) {
        if (i == n) {
            out.push_back(cur);
            return;
        }
        for (int l = 1; l <= k + 1; ++l) {
            cur[static_cast<std::size_t>(i)] = l;
            rec(i + 1, std::max(k, l));
        }
    };
    rec(1, 1);
    return out;
}

void criterion3() {
    Rng rng(301);
    double worst_gap = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int T = 2 + static_cast<int>(rng.uniform_index(11));
        const double gamma = 0.3 + 0.65 * rng.uniform();
        std::vector<double> y(static_cast<std::size_t>(T));
        double c = 2.0 * rng.uniform();
        for (int t = 0; t < T; ++t) {
            if (t > 0) {
                c = gamma * c + (rng.uniform() < 0.25 ? 1.0 + 4.0 * rng.uniform() : 0.0);
            }
            y[static_cast<std::size_t>(t)] = c + (0.3 + rng.uniform()) * rng.normal();
        }
        const double lambda = 0.05 + 3.0 * rng.uniform();
        const double dp = l0_deconvolve(y, gamma, lambda).objective;
        const double oracle = exhaustive_l0(y, gamma, lambda);
        worst_gap = std::max(worst_gap, std::abs(dp - oracle) / std::max(1.0, oracle));
    }
    report(worst_gap < 1e-9, "criterion 3a (l0 DP vs exhaustive search, 100 instances, T<=12)",
           fmt("max relative objective gap %.3g", worst_gap));

    const auto parts = set_partitions(6);
    int misses = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto& center = parts[rng.uniform_index(parts.size())];
        const double keep = 0.4 + 0.5 * rng.uniform();
        IntMatrix z(20, 6);
        for (int d = 0; d < 20; ++d) {
            for (int i = 0; i < 6; ++i) {
                z(d, i) = rng.uniform() < keep ? center[static_cast<std::size_t>(i)]
                                               : 1 + static_cast<int>(rng.uniform_index(4));
            }
        }
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : parts) {
            best = std::min(best, expected_vi(p, z));
        }
        Rng search(400 + static_cast<std::uint64_t>(trial));
        const double got = vi_point_estimate(z, {}, search).expected_vi;
        worst = std::max(worst, got - best);
        misses += got > best + 1e-12 ? 1 : 0;
    }
    report(misses == 0, "criterion 3b (VI estimate vs all 203 partitions, n=6, 20 draws, 50 instances)",
           std::to_string(misses) + " instances above the optimum; worst excess " + fmt("%.3g", worst));

    double worst_v = 0.0;
    for (std::size_t T = 2; T <= 6; ++T) {
        const Matrix omega = gp_covariance(T, 1.0 + rng.uniform(), 1.0 + 3.0 * rng.uniform());
        const VecchiaFactor f = vecchia_coefficients(omega, T - 1);
        for (std::size_t t = 1; t < T; ++t) {
            const auto ti = static_cast<Eigen::Index>(t);
            const Eigen::MatrixXd past = omega.topLeftCorner(ti, ti);
            const Eigen::VectorXd cross = omega.block(0, ti, ti, 1);
            const Eigen::VectorXd w = past.ldlt().solve(cross);
            const double var = omega(ti, ti) - cross.dot(w);
            for (Eigen::Index s = 0; s < ti; ++s) {
                worst_v = std::max(worst_v, std::abs(f.weights[t][static_cast<std::size_t>(s)] - w[s]));
            }
            worst_v = std::max(worst_v, std::abs(f.cond_var[ti] - var));
        }
        worst_v = std::max(worst_v, std::abs(f.cond_var[0] - omega(0, 0)));
    }
    report(worst_v < 1e-10, "criterion 3c (Vecchia p=T-1 vs dense GP conditionals, T<=6)",
           fmt("max abs deviation %.3g", worst_v));
}

// ------------------------------------------------------- criteria 4 and 5

struct RunMetrics {
    double gamma = 0.0;
    SpikeErrors spikes;
    double ari = 0.0;
    int top_label = 0;
};

struct Bench {
    int replicates;
    RunOptions run;
    std::vector<SyntheticDataset> data;
    std::map<std::string, std::vector<RunMetrics>> cache;

    explicit Bench(int reps, int iters) : replicates(reps) {
        run.iters = iters;
        run.burnin = iters * 2 / 3;
        run.thin = 5;
        SyntheticConfig cfg;
        for (int r = 0; r < reps; ++r) {
            Rng rng(2024, StreamKind::Replicate, static_cast<std::uint64_t>(r));
            data.push_back(generate_dataset(cfg, rng));
        }
    }

    const std::vector<RunMetrics>& joint(double alpha_a, double beta_a, double a_bar) {
        char key[96];
        std::snprintf(key, sizeof(key), "alpha_a=%g beta_a=%g a_bar=%g", alpha_a, beta_a, a_bar);
        auto it = cache.find(key);
        if (it != cache.end()) {
            return it->second;
        }
        std::vector<RunMetrics> out;
        for (int r = 0; r < replicates; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const SyntheticDataset& ds = data[static_cast<std::size_t>(r)];
            Hyperparams h;
            h.alpha_a = alpha_a;
            h.beta_a = beta_a;
            h.a_bar = a_bar;
            const ChainOutput ch = run_chain(ds.traces.values, ds.locations.coords, h, run, 500 + r);
            RunMetrics m;
            m.gamma = ch.mean_gamma();
            m.spikes = spike_error_rates(ds.truth.s_true, (ch.spike_probs.array() > 0.5).cast<int>());
            Rng vr(600 + r, StreamKind::Summary);
            m.ari = adjusted_rand_index(vi_point_estimate(ch.partitions, {}, vr).labels, ds.truth.zeta_true);
            m.top_label = ch.partitions.maxCoeff();
            out.push_back(m);
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            emit("  [%s] replicate %d: gamma %.4f fn %.4f fp %.4f mis %.4f ari %.3f top label %d (%.0f s)\n",
                 key, r, m.gamma, m.spikes.false_negative, m.spikes.false_positive,
                 m.spikes.misclassification, m.ari, m.top_label, sec);
        }
        return cache.emplace(key, std::move(out)).first->second;
    }

    std::vector<RunMetrics> baseline() {
        std::vector<RunMetrics> out;
        for (int r = 0; r < replicates; ++r) {
            const SyntheticDataset& ds = data[static_cast<std::size_t>(r)];
            const IntMatrix s = deconvolve_spikes(ds.traces.values);
            Rng rng(700 + r, StreamKind::Summary);
            const ConsensusResult cr = consensus_kmeans(s.cast<double>(), {}, rng);
            RunMetrics m;
            m.spikes = spike_error_rates(ds.truth.s_true, s);
            m.ari = adjusted_rand_index(cr.labels, ds.truth.zeta_true);
            out.push_back(m);
            emit("  [baseline] replicate %d: fn %.4f fp %.4f mis %.4f ari %.3f K %d\n", r,
                 m.spikes.false_negative, m.spikes.false_positive, m.spikes.misclassification, m.ari, cr.k);
        }
        return out;
    }
};

template <typename F>
double median_of(const std::vector<RunMetrics>& v, F f) {
    std::vector<double> x;
    for (const auto& m : v) {
        x.push_back(f(m));
    }
    return median(x);
}

double med_ari(const std::vector<RunMetrics>& v) {
    return median_of(v, [](const RunMetrics& m) { return m.ari; });
}
double med_mis(const std::vector<RunMetrics>& v) {
    return median_of(v, [](const RunMetrics& m) { return m.spikes.misclassification; });
}
double med_fn(const std::vector<RunMetrics>& v) {
    return median_of(v, [](const RunMetrics& m) { return m.spikes.false_negative; });
}
double med_fp(const std::vector<RunMetrics>& v) {
    return median_of(v, [](const RunMetrics& m) { return m.spikes.false_positive; });
}

void check_truncation(const std::string& label, const std::vector<RunMetrics>& runs) {
    const int K_max = Hyperparams{}.K_max;
    int top = 0;
    for (const auto& m : runs) {
        top = std::max(top, m.top_label);
    }
    report(top < K_max - 5, label + " truncation sufficiency",
           "largest label used " + std::to_string(top) + " (K_max " + std::to_string(K_max) + ")");
}

void criterion4(Bench& bench) {
    const auto& joint = bench.joint(10.0, 1.0, 0.5);
    const auto base = bench.baseline();
    int in_range = 0;
    for (const auto& m : joint) {
        in_range += (m.gamma >= 0.85 && m.gamma <= 0.95) ? 1 : 0;
    }
    const int need = (8 * bench.replicates + 9) / 10;
    report(in_range >= need, "criterion 4a (posterior mean gamma in [0.85, 0.95])",
           std::to_string(in_range) + " of " + std::to_string(bench.replicates) + " replicates");
    const double aj = med_ari(joint), ab = med_ari(base);
    report(aj >= ab, "criterion 4b (median ARI joint >= baseline)",
           fmt("joint %.4f", aj) + fmt(" baseline %.4f", ab));
    const double mj = med_mis(joint), mb = med_mis(base);
    const double fj = med_fn(joint), fb = med_fn(base);
    report(mj <= mb && fb > fj, "criterion 4c (misclassification joint <= baseline, FN baseline > joint)",
           fmt("misclassification joint %.4f", mj) + fmt(" baseline %.4f;", mb) + fmt(" FN joint %.4f", fj) +
               fmt(" baseline %.4f", fb));
    check_truncation("criterion 4", joint);
}

void criterion5(Bench& bench) {
    const auto& a = bench.joint(3.0, 0.1, 0.0);
    const auto& b = bench.joint(4.0, 1.0, 0.0);
    const auto& c = bench.joint(10.0, 1.0, 0.0);
    const double ac = med_ari(c), aa = med_ari(a), ab = med_ari(b);
    const double mc = med_mis(c), ma = med_mis(a), mb = med_mis(b);
    report(ac >= aa && ac >= ab && mc <= ma && mc <= mb,
           "criterion 5a ((10,1) best median ARI and misclassification at a_bar=0)",
           fmt("ARI (3,0.1) %.4f", aa) + fmt(" (4,1) %.4f", ab) + fmt(" (10,1) %.4f;", ac) +
               fmt(" misclassification (3,0.1) %.4f", ma) + fmt(" (4,1) %.4f", mb) + fmt(" (10,1) %.4f", mc));

    const auto& half = bench.joint(10.0, 1.0, 0.5);
    const auto& one = bench.joint(10.0, 1.0, 1.0);
    double spread = 0.0;
    std::string detail;
    for (auto* med : {&med_fn, &med_fp, &med_mis}) {
        const double v0 = (*med)(c), v1 = (*med)(half), v2 = (*med)(one);
        spread = std::max(spread, std::max({v0, v1, v2}) - std::min({v0, v1, v2}));
        detail += fmt(" %.4f", v0) + fmt("/%.4f", v1) + fmt("/%.4f;", v2);
    }
    report(spread < 0.02, "criterion 5b (spike-error medians across a_bar in {0, 0.5, 1} within 0.02)",
           "FN, FP, misclassification medians (a_bar 0/0.5/1):" + detail + fmt(" max spread %.4f", spread));
    std::vector<RunMetrics> all;
    for (const auto* v : {&a, &b, &c, &one}) {
        all.insert(all.end(), v->begin(), v->end());
    }
    check_truncation("criterion 5", all);
}

// ------------------------------------------------------------- criterion 6

void criterion6() {
    Rng rng(601);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> alpha(30);
        for (double& v : alpha) {
            v = 3.0 * rng.normal();
        }
        worst = std::max(worst, std::abs(psbp_weights(alpha).sum() - 1.0));
    }
    report(worst <= 1e-12, "criterion 6a (PSBP weights sum to 1)", fmt("max deviation %.3g", worst));

    SyntheticConfig cfg;
    cfg.n = 30;
    Rng drng(602);
    const SyntheticDataset ds = generate_dataset(cfg, drng);
    Hyperparams h;
    GibbsSampler g(ds.traces.values, ds.locations.coords, h, 603);
    bool coupled = true;
    IntMatrix draws(200, cfg.n);
    for (int it = 0; it < 200; ++it) {
        g.sweep();
        const SpikeState& sp = g.state().spikes;
        for (Eigen::Index i = 0; i < sp.s.rows(); ++i) {
            for (Eigen::Index t = 0; t < sp.s.cols(); ++t) {
                const bool on = sp.s(i, t) == 1;
                coupled = coupled && on == (sp.a(i, t) > h.a_bar) && on == (sp.xi(i, t) > 0) &&
                          (on ? sp.a(i, t) == sp.amp_atoms[sp.xi(i, t) - 1] : sp.a(i, t) == 0.0);
            }
        }
        draws.row(it) = (g.state().clusters.zeta.array() + 1).transpose();
    }
    report(coupled, "criterion 6b (s = 1 iff a > a_bar after each of 200 sweeps)",
           coupled ? "held at every sweep" : "violated");
    const Matrix sim = similarity_matrix(draws);
    const bool sym = sim == sim.transpose() && (sim.diagonal().array() == 1.0).all();
    report(sym, "criterion 6c (similarity matrix symmetric with unit diagonal)", sym ? "exact" : "violated");

    // Boundary of the inner disc: exactly R / sqrt(2), which halves the area.
    bool radius_ok = true;
    for (double R : {1.0, 7.5, 250.0}) {
        const double r = R / std::sqrt(2.0);
        radius_ok = radius_ok && classify_region({r, 0.0}, {0.0, 0.0}, R) == Region::Center &&
                    classify_region({std::nextafter(r, 2 * r), 0.0}, {0.0, 0.0}, R) == Region::OuterRing;
        radius_ok = radius_ok && std::abs(M_PI * r * r - 0.5 * M_PI * R * R) < 1e-12 * R * R;
    }
    report(radius_ok, "criterion 6d (inner radius is R/sqrt(2))", radius_ok ? "boundary exact" : "boundary off");

    RunOptions run;
    run.iters = 300;
    run.burnin = 100;
    run.thin = 2;
    run.store_draws = true;
    const fs::path dir = fs::temp_directory_path() / ("calens_accept_" + std::to_string(rng.uniform_index(1u << 30)));
    bool same = true;
    std::string detail = "all chain files identical";
    {
        // Allow real worker threads even on a single-core host.
        const tbb::global_control workers(tbb::global_control::max_allowed_parallelism, 4);
        run.threads = 1;
        write_chain(dir / "t1", run_chain(ds.traces.values, ds.locations.coords, h, run, 604));
        run.threads = 4;
        write_chain(dir / "t4", run_chain(ds.traces.values, ds.locations.coords, h, run, 604));
        auto bytes = [](const fs::path& p) {
            std::ifstream in(p, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        for (const char* f : {"partitions.csv", "spike_probs.csv", "amp_means.csv", "scalars.csv", "spikes_long.csv"}) {
            if (bytes(dir / "t1" / f) != bytes(dir / "t4" / f)) {
                same = false;
                detail = std::string(f) + " differs";
            }
        }
        // meta.json records the thread count itself; everything else must agree.
        auto meta = [&](const fs::path& p) {
            auto j = nlohmann::json::parse(bytes(p / "meta.json"));
            j.erase("threads");
            return j.dump();
        };
        if (meta(dir / "t1") != meta(dir / "t4")) {
            same = false;
            detail = "meta.json differs beyond the thread count";
        }
    }
    fs::remove_all(dir);
    report(same, "criterion 6e (1 vs 4 threads give byte-identical chain output)", detail);
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> which;
    for (int i = 1; i < argc; ++i) {
        which.insert(std::atoi(argv[i]));
    }
    if (which.empty()) {
        which = {1, 2, 3, 4, 5, 6, 7};
    }
    report_file = std::fopen("acceptance_report.txt", "w");
    const auto t0 = std::chrono::steady_clock::now();
    if (which.count(1)) {
        criterion1();
    }
    if (which.count(2)) {
        criterion2();
    }
    if (which.count(3)) {
        criterion3();
    }
    if (which.count(6)) {
        criterion6();
    }
    if (which.count(4) || which.count(5)) {
        Bench bench(env_int("CALENS_ACCEPT_REPLICATES", 10), env_int("CALENS_ACCEPT_ITERS", 15000));
        emit("end-to-end bench: %d replicates, %d iterations (%d burn-in, thin %d)\n", bench.replicates,
                    bench.run.iters, bench.run.burnin, bench.run.thin);
        if (which.count(4)) {
            criterion4(bench);
        }
        if (which.count(5)) {
            criterion5(bench);
        }
    }
    if (which.count(7)) {
        // Not gating: needs a recorded session, which does not ship with the repository.
        emit("%s\n", "SKIP criterion 7 (real-data window fit): no recorded dataset available");
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit("%d failing criteria; %.0f s\n", failures, sec);
    return failures == 0 ? 0 : 1;
}
