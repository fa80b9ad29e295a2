#include "calens/sampler.hpp"

#include "calens/amplitude_process.hpp"
#include "calens/errors.hpp"
#include "calens/numerics.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace calens {

int ModelState::occupied_clusters() const {
    std::set<int> labels(clusters.zeta.data(), clusters.zeta.data() + clusters.zeta.size());
    return static_cast<int>(labels.size());
}

Hyperparams resolve_hyperparams(const Hyperparams& hyper, std::span<const Point2> locations, std::size_t T) {
    Hyperparams h = hyper;
    if (!h.theta) {
        h.theta = default_theta(locations);
    }
    const int max_p = std::max<int>(1, static_cast<int>(T) - 1);
    h.p_vecchia = std::min(h.p_vecchia, max_p);
    h.validate();
    return h;
}

namespace {

double median_of(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), mid));
    }
    return m;
}

} // namespace

ModelState init_state(const Matrix& y, const Hyperparams& hyper, std::uint64_t seed) {
    const Eigen::Index n = y.rows();
    const Eigen::Index T = y.cols();
    if (n < 1 || T < 1) {
        throw ArgumentError("sampler needs at least one neuron and one frame");
    }
    ModelState st;
    CalciumState& cal = st.calcium;
    cal.b.resize(n);
    cal.c.resize(n, T + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> row(y.row(i).data(), y.row(i).data() + T);
        cal.b[i] = median_of(row);
        for (Eigen::Index t = 0; t < T; ++t) {
            cal.c(i, t + 1) = y(i, t) - cal.b[i];
        }
        cal.c(i, 0) = cal.c(i, 1);
    }
    cal.gamma = hyper.alpha_gamma / (hyper.alpha_gamma + hyper.beta_gamma);
    double ss = 0.0;
    long count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 1; t < T; ++t) {
            const double d = y(i, t) - y(i, t - 1);
            ss += d * d;
            ++count;
        }
    }
    // Var(y_t - y_{t-1}) is about 2 sigma^2 + tau^2 for slow decay; split evenly.
    const double v = count > 0 ? ss / static_cast<double>(count) / 3.0 : 1.0;
    cal.sigma2 = cal.tau2 = std::max(v, 1e-6);

    const int J = hyper.J_max;
    const int K = hyper.K_max;
    SpikeState& sp = st.spikes;
    sp.s = IntMatrix::Zero(n, T);
    sp.xi = IntMatrix::Zero(n, T);
    sp.a = Matrix::Zero(n, T);
    Rng rng(seed, StreamKind::Init);
    sp.amp_atoms.resize(J);
    for (int j = 0; j < J; ++j) {
        sp.amp_atoms[j] = hyper.a_bar + rng.gamma(hyper.alpha_a, hyper.beta_a);
    }
    sp.dp_sticks = Vector::Constant(J, 1.0 / (1.0 + hyper.alpha_dp));
    sp.dp_sticks[J - 1] = 1.0;

    st.clusters.zeta = IntVector::Zero(n);
    st.clusters.gp_atoms = Matrix::Constant(K, T, hyper.mu_stilde);
    st.clusters.psbp_alpha = Matrix::Zero(K, n);
    return st;
}

struct GibbsSampler::Arena {
    explicit Arena(int threads) : arena(threads) {}
    tbb::task_arena arena;
};

GibbsSampler::GibbsSampler(Matrix y, std::vector<Point2> locations, const Hyperparams& hyper, std::uint64_t seed,
                           int threads, SamplerHooks hooks)
    : y_(std::move(y)),
      locations_(std::move(locations)),
      hooks_(hooks),
      threads_(std::max(1, threads)),
      global_rng_(seed, StreamKind::Global),
      arena_(std::make_unique<Arena>(std::max(1, threads))) {
    const auto n = static_cast<std::size_t>(y_.rows());
    const auto T = static_cast<std::size_t>(y_.cols());
    if (n == 0 || T == 0) {
        throw ArgumentError("sampler needs at least one neuron and one frame");
    }
    if (locations_.size() != n) {
        throw ArgumentError("need one location per neuron");
    }
    if (!y_.allFinite()) {
        throw ArgumentError("traces contain non-finite values");
    }
    hyper_ = resolve_hyperparams(hyper, locations_, T);
    step_gamma_ = hyper_.mh_step_gamma;
    step_a_ = hyper_.mh_step_a;
    state_ = init_state(y_, hyper_, seed);
    proximity_ = std::make_unique<ProximityPosterior>(proximity_matrix(locations_, *hyper_.theta), hyper_.mu_alpha,
                                                      hyper_.sigma2_alpha);
    const Matrix omega = gp_covariance(T, hyper_.gp_kernel_variance, hyper_.gp_kernel_lengthscale);
    const std::size_t p = T >= 2 ? static_cast<std::size_t>(hyper_.p_vecchia) : 0;
    gp_ = std::make_unique<GpAtomSampler>(vecchia_coefficients(omega, p), hyper_.mu_stilde, static_cast<int>(n));
    neuron_rng_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        neuron_rng_.emplace_back(seed, StreamKind::Neuron, i);
    }
    cluster_rng_.reserve(static_cast<std::size_t>(hyper_.K_max));
    for (int k = 0; k < hyper_.K_max; ++k) {
        cluster_rng_.emplace_back(seed, StreamKind::Cluster, static_cast<std::uint64_t>(k));
    }
}

GibbsSampler::~GibbsSampler() = default;

void GibbsSampler::set_data(Matrix y) {
    if (y.rows() != y_.rows() || y.cols() != y_.cols()) {
        throw ArgumentError("replacement data must keep the sampler's shape");
    }
    y_ = std::move(y);
}

template <typename F>
void GibbsSampler::parallel(std::size_t count, F&& body) {
    if (threads_ == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    arena_->arena.execute([&] {
        tbb::parallel_for(tbb::blocked_range<std::size_t>(0, count), [&](const tbb::blocked_range<std::size_t>& r) {
            for (std::size_t i = r.begin(); i != r.end(); ++i) {
                body(i);
            }
        });
    });
}

void GibbsSampler::sweep() {
    const Hyperparams& h = hyper_;
    CalciumState& cal = state_.calcium;
    SpikeState& sp = state_.spikes;
    ClusterState& cl = state_.clusters;
    const Eigen::Index n = y_.rows();
    const Eigen::Index T = y_.cols();
    const auto Ts = static_cast<std::size_t>(T);
    const int K = h.K_max;

    // Steps 1-2: calcium path then baseline, per neuron.
    parallel(static_cast<std::size_t>(n), [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        Rng& rng = neuron_rng_[i];
        const std::span<const double> yi(y_.row(ii).data(), Ts);
        const Vector c = ffbs_sample_calcium(yi, cal.b[ii], cal.gamma, cal.sigma2, cal.tau2,
                                             {sp.a.row(ii).data(), Ts}, h.C0, rng);
        cal.c.row(ii) = c.transpose();
        cal.b[ii] = sample_baseline(yi, {cal.c.row(ii).data() + 1, Ts}, cal.sigma2, h.b0, h.B0, rng);
    });

    // Steps 3-5.
    cal.sigma2 = sample_sigma2(y_, cal.b, cal.c, h.alpha_sigma, h.beta_sigma, global_rng_,
                               hooks_.sigma2_rate_multiplier);
    cal.tau2 = sample_tau2(cal.c, cal.gamma, sp.a, h.alpha_tau, h.beta_tau, global_rng_);
    bool accepted = false;
    cal.gamma = sample_gamma(cal.gamma, decay_stats(cal.c, sp.a), cal.tau2, h.alpha_gamma, h.beta_gamma, step_gamma_,
                             global_rng_, &accepted);
    ++window_.gamma_tried;
    window_.gamma_accepted += accepted ? 1 : 0;

    // Step 6a: spike allocations given the neuron's cluster atom.
    const Vector log_omega = stick_weights(sp.dp_sticks).array().log();
    Matrix log_on(K, T);
    Matrix log_off(K, T);
    std::vector<char> used(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        used[static_cast<std::size_t>(cl.zeta[i])] = 1;
    }
    for (int k = 0; k < K; ++k) {
        if (used[static_cast<std::size_t>(k)] != 0) {
            for (Eigen::Index t = 0; t < T; ++t) {
                log_on(k, t) = norm_log_cdf(cl.gp_atoms(k, t));
                log_off(k, t) = norm_log_cdf(-cl.gp_atoms(k, t));
            }
        }
    }
    parallel(static_cast<std::size_t>(n), [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const Eigen::Index k = cl.zeta[ii];
        sample_spike_allocations_row({cal.c.row(ii).data(), Ts + 1}, cal.gamma, cal.tau2,
                                     {log_on.row(k).data(), Ts}, {log_off.row(k).data(), Ts}, sp.amp_atoms, log_omega,
                                     {sp.xi.row(ii).data(), Ts}, {sp.s.row(ii).data(), Ts},
                                     {sp.a.row(ii).data(), Ts}, neuron_rng_[i]);
    });

    // Steps 6b-6c.
    const AtomStats stats = atom_stats(sp.xi, cal.c, cal.gamma, h.J_max);
    int tried = 0;
    window_.amp_accepted += sample_amplitude_atoms(sp.amp_atoms, stats, cal.tau2, h.alpha_a, h.beta_a, h.a_bar,
                                                   step_a_, global_rng_, &tried);
    window_.amp_tried += tried;
    refresh_amplitudes(sp);
    sp.dp_sticks = sample_dp_sticks(stats.count, h.alpha_dp, global_rng_);

    // Step 7a: cluster labels.
    const AtomLikelihood lik = atom_likelihood(cl.gp_atoms);
    parallel(static_cast<std::size_t>(n), [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const Vector alpha_col = cl.psbp_alpha.col(ii);
        const Vector log_pi = psbp_log_weights({alpha_col.data(), static_cast<std::size_t>(K)});
        cl.zeta[ii] = sample_cluster_allocation({sp.s.row(ii).data(), Ts}, log_pi, lik, neuron_rng_[i]);
    });

    // Step 7b: PSBP latents and rows.
    const std::span<const int> zeta(cl.zeta.data(), static_cast<std::size_t>(n));
    parallel(static_cast<std::size_t>(K), [&](std::size_t k) {
        const auto kk = static_cast<Eigen::Index>(k);
        Rng& rng = cluster_rng_[k];
        const Vector z = sample_psbp_latent_row(static_cast<int>(k), K, zeta,
                                                {cl.psbp_alpha.row(kk).data(), static_cast<std::size_t>(n)}, rng);
        cl.psbp_alpha.row(kk) = proximity_->sample(z, rng).transpose();
    });

    // Step 7c: GP atoms.
    std::vector<std::vector<int>> members(static_cast<std::size_t>(K));
    for (Eigen::Index i = 0; i < n; ++i) {
        members[static_cast<std::size_t>(cl.zeta[i])].push_back(static_cast<int>(i));
    }
    parallel(static_cast<std::size_t>(K), [&](std::size_t k) {
        const auto kk = static_cast<Eigen::Index>(k);
        Rng& rng = cluster_rng_[k];
        const Vector S = sample_gp_latent_sums(members[k], sp.s, {cl.gp_atoms.row(kk).data(), Ts}, rng);
        cl.gp_atoms.row(kk) = gp_->sample(static_cast<int>(members[k].size()), S, rng).transpose();
    });
    if (!cl.gp_atoms.allFinite() || !cal.c.allFinite()) {
        throw NumericError("non-finite state after sweep", "sweep");
    }
}

void GibbsSampler::adapt_steps() {
    auto tune = [](double step, long acc, long tried) {
        if (tried < 10) {
            return step;
        }
        const double rate = static_cast<double>(acc) / static_cast<double>(tried);
        if (rate < 0.2) {
            return step * 0.8;
        }
        if (rate > 0.5) {
            return step * 1.25;
        }
        return step;
    };
    step_gamma_ = tune(step_gamma_, window_.gamma_accepted, window_.gamma_tried);
    step_a_ = tune(step_a_, window_.amp_accepted, window_.amp_tried);
    flush_counters();
}

void GibbsSampler::flush_counters() {
    counters_.gamma_accepted += window_.gamma_accepted;
    counters_.gamma_tried += window_.gamma_tried;
    counters_.amp_accepted += window_.amp_accepted;
    counters_.amp_tried += window_.amp_tried;
    window_ = {};
}

ModelState GibbsSampler::sample_prior(Rng& rng) const {
    const Hyperparams& h = hyper_;
    const Eigen::Index n = y_.rows();
    const Eigen::Index T = y_.cols();
    const int K = h.K_max;
    const int J = h.J_max;
    ModelState st;
    CalciumState& cal = st.calcium;
    cal.gamma = rng.beta(h.alpha_gamma, h.beta_gamma);
    cal.gamma = std::clamp(cal.gamma, 1e-12, 1.0 - 1e-12);
    cal.sigma2 = 1.0 / rng.gamma(h.alpha_sigma, h.beta_sigma);
    cal.tau2 = 1.0 / rng.gamma(h.alpha_tau, h.beta_tau);
    cal.b.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cal.b[i] = h.b0 + std::sqrt(h.B0) * rng.normal();
    }

    ClusterState& cl = st.clusters;
    cl.psbp_alpha.resize(K, n);
    for (int k = 0; k < K; ++k) {
        cl.psbp_alpha.row(k) = proximity_->sample_prior(rng).transpose();
    }
    cl.zeta.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector col = cl.psbp_alpha.col(i);
        const Vector pi = psbp_weights({col.data(), static_cast<std::size_t>(K)});
        cl.zeta[i] = static_cast<int>(rng.categorical({pi.data(), static_cast<std::size_t>(K)}));
    }
    cl.gp_atoms.resize(K, T);
    for (int k = 0; k < K; ++k) {
        cl.gp_atoms.row(k) = gp_->sample_prior(rng).transpose();
    }

    SpikeState& sp = st.spikes;
    sp.dp_sticks.resize(J);
    for (int j = 0; j + 1 < J; ++j) {
        sp.dp_sticks[j] = std::min(rng.beta(1.0, h.alpha_dp), 1.0 - 1e-15);
    }
    sp.dp_sticks[J - 1] = 1.0;
    sp.amp_atoms.resize(J);
    for (int j = 0; j < J; ++j) {
        sp.amp_atoms[j] = h.a_bar + rng.gamma(h.alpha_a, h.beta_a);
    }
    const Vector omega = stick_weights(sp.dp_sticks);
    sp.s = IntMatrix::Zero(n, T);
    sp.xi = IntMatrix::Zero(n, T);
    sp.a = Matrix::Zero(n, T);
    cal.c.resize(n, T + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        cal.c(i, 0) = std::sqrt(h.C0) * rng.normal();
        for (Eigen::Index t = 0; t < T; ++t) {
            if (rng.bernoulli(norm_cdf(cl.gp_atoms(cl.zeta[i], t)))) {
                const auto j = static_cast<int>(rng.categorical({omega.data(), static_cast<std::size_t>(J)})) + 1;
                sp.s(i, t) = 1;
                sp.xi(i, t) = j;
                sp.a(i, t) = sp.amp_atoms[j - 1];
            }
            cal.c(i, t + 1) = cal.gamma * cal.c(i, t) + sp.a(i, t) + std::sqrt(cal.tau2) * rng.normal();
        }
    }
    return st;
}

Matrix GibbsSampler::sample_data(const ModelState& st, Rng& rng) const {
    const Eigen::Index n = y_.rows();
    const Eigen::Index T = y_.cols();
    Matrix y(n, T);
    const double sd = std::sqrt(st.calcium.sigma2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < T; ++t) {
            y(i, t) = st.calcium.b[i] + st.calcium.c(i, t + 1) + sd * rng.normal();
        }
    }
    return y;
}

double ChainOutput::mean_gamma() const {
    if (scalars.rows() == 0) {
        return NAN;
    }
    return scalars.col(0).mean();
}

namespace {

std::string step_of(const NumericError& e) {
    return e.step().empty() ? "unknown" : e.step();
}

} // namespace

ChainOutput run_chain(const Matrix& y, std::span<const Point2> locations, const Hyperparams& hyper,
                      const RunOptions& run, std::uint64_t seed, const SamplerHooks& hooks,
                      const ProgressCallback& progress) {
    if (run.iters < 1 || run.burnin < 0 || run.burnin >= run.iters) {
        throw ArgumentError("run needs 0 <= burnin < iters");
    }
    if (run.thin < 1) {
        throw ArgumentError("thin must be >= 1");
    }
    GibbsSampler sampler(y, {locations.begin(), locations.end()}, hyper, seed, run.threads, hooks);
    const Eigen::Index n = y.rows();
    const Eigen::Index T = y.cols();
    const int draws = (run.iters - run.burnin) / run.thin;

    ChainOutput out;
    out.partitions.resize(draws, n);
    out.scalars.resize(draws, 4);
    out.spike_probs = Matrix::Zero(n, T);
    out.amp_means = Matrix::Zero(n, T);
    int d = 0;
    constexpr int kAdaptEvery = 50;
    for (int it = 0; it < run.iters; ++it) {
        try {
            sampler.sweep();
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(it) + ", " + step_of(e) + ": " + e.what(), step_of(e));
        }
        if (it < run.burnin && run.adapt && (it + 1) % kAdaptEvery == 0) {
            sampler.adapt_steps();
        }
        if (it + 1 == run.burnin) {
            sampler.flush_counters();
        }
        if (it >= run.burnin && (it - run.burnin + 1) % run.thin == 0 && d < draws) {
            const ModelState& st = sampler.state();
            out.partitions.row(d) = (st.clusters.zeta.array() + 1).matrix().transpose();
            out.scalars(d, 0) = st.calcium.gamma;
            out.scalars(d, 1) = st.calcium.sigma2;
            out.scalars(d, 2) = st.calcium.tau2;
            out.scalars(d, 3) = st.occupied_clusters();
            out.spike_probs += st.spikes.s.cast<double>();
            out.amp_means += st.spikes.a;
            if (run.store_draws) {
                out.spike_draws.push_back(st.spikes.s);
                out.amp_draws.push_back(st.spikes.a);
            }
            ++d;
        }
        if (progress) {
            progress(it);
        }
    }
    if (draws > 0) {
        out.spike_probs /= static_cast<double>(draws);
        out.amp_means /= static_cast<double>(draws);
    }
    sampler.flush_counters();
    MhCounters c = sampler.counters();
    ChainMeta& m = out.meta;
    m.seed = seed;
    m.hyper = sampler.hyper();
    m.config_hash = config_hash(sampler.hyper());
    m.iters = run.iters;
    m.burnin = run.burnin;
    m.thin = run.thin;
    m.threads = run.threads;
    m.theta = *sampler.hyper().theta;
    m.p_vecchia = sampler.hyper().p_vecchia;
    m.gamma_acceptance = c.gamma_tried > 0 ? static_cast<double>(c.gamma_accepted) / c.gamma_tried : 0.0;
    m.amp_acceptance = c.amp_tried > 0 ? static_cast<double>(c.amp_accepted) / c.amp_tried : 0.0;
    m.step_gamma = sampler.step_gamma();
    m.step_a = sampler.step_a();
    for (Eigen::Index i = 0; i < n; ++i) {
        out.neuron_ids.push_back(std::to_string(i));
    }
    return out;
}

} // namespace calens
