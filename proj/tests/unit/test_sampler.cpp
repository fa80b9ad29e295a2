#include "calens/chain_io.hpp"
#include "calens/errors.hpp"
#include "calens/geweke.hpp"
#include "calens/sampler.hpp"
#include "calens/synthetic_bench.hpp"
#include "test_util.hpp"

#include "doctest.h"

#include <cmath>

using namespace calens;

namespace {

SyntheticDataset small_dataset(std::uint64_t seed, int n = 12, int T = 20) {
    SyntheticConfig cfg;
    cfg.n = n;
    cfg.T = T;
    Rng rng(seed);
    return generate_dataset(cfg, rng);
}

Hyperparams small_hyper() {
    Hyperparams h;
    h.K_max = 8;
    h.J_max = 6;
    return h;
}

void check_coupling(const ModelState& s, double a_bar) {
    const auto& sp = s.spikes;
    for (Eigen::Index i = 0; i < sp.s.rows(); ++i) {
        for (Eigen::Index t = 0; t < sp.s.cols(); ++t) {
            const bool on = sp.s(i, t) == 1;
            REQUIRE(on == (sp.a(i, t) > a_bar));
            REQUIRE(on == (sp.xi(i, t) > 0));
            if (on) {
                REQUIRE(sp.a(i, t) == sp.amp_atoms[sp.xi(i, t) - 1]);
            } else {
                REQUIRE(sp.a(i, t) == 0.0);
            }
        }
    }
}

} // namespace

TEST_CASE("init state") {
    Matrix y = Matrix::Constant(3, 6, 5.0);
    const Hyperparams h = small_hyper();
    const ModelState s = init_state(y, h, 1);
    CHECK(s.calcium.b == Vector::Constant(3, 5.0));
    CHECK(s.calcium.c.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.calcium.gamma == doctest::Approx(h.alpha_gamma / (h.alpha_gamma + h.beta_gamma)));
    CHECK(s.spikes.s.sum() == 0);
    CHECK(s.occupied_clusters() == 1);
    CHECK((s.clusters.gp_atoms.array() == h.mu_stilde).all());
    CHECK(s.clusters.psbp_alpha.cwiseAbs().maxCoeff() == 0.0);
    for (double atom : s.spikes.amp_atoms) {
        CHECK(atom > h.a_bar);
    }

    const auto ds = small_dataset(2);
    const ModelState a = init_state(ds.traces.values, h, 7);
    const ModelState b = init_state(ds.traces.values, h, 7);
    CHECK(a.spikes.amp_atoms == b.spikes.amp_atoms);
    CHECK(a.calcium.sigma2 == b.calcium.sigma2);
    CHECK_THROWS_AS((void)init_state(Matrix(0, 4), h, 1), ArgumentError);
    CHECK_THROWS_AS((void)init_state(Matrix(3, 0), h, 1), ArgumentError);
}

TEST_CASE("hyperparameter resolution") {
    Hyperparams h;
    const std::vector<Point2> pts{{0.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}};
    const Hyperparams r = resolve_hyperparams(h, pts, 4);
    REQUIRE(r.theta.has_value());
    CHECK(*r.theta > 0.0);
    CHECK(r.p_vecchia == 3);
    h.theta = 0.7;
    CHECK(*resolve_hyperparams(h, pts, 50).theta == 0.7);
}

TEST_CASE("draw count and stored summaries") {
    const auto ds = small_dataset(3);
    RunOptions run;
    run.iters = 10;
    run.burnin = 5;
    run.thin = 1;
    run.store_draws = true;
    const ChainOutput out = run_chain(ds.traces.values, ds.locations.coords, small_hyper(), run, 11);
    CHECK(out.draws() == 5);
    CHECK(out.scalars.rows() == 5);
    CHECK(out.spike_probs.minCoeff() >= 0.0);
    CHECK(out.spike_probs.maxCoeff() <= 1.0);
    REQUIRE(out.spike_draws.size() == 5);
    Matrix mean = Matrix::Zero(out.spike_probs.rows(), out.spike_probs.cols());
    Matrix amp = Matrix::Zero(out.spike_probs.rows(), out.spike_probs.cols());
    for (std::size_t d = 0; d < 5; ++d) {
        mean += out.spike_draws[d].cast<double>() / 5.0;
        amp += out.amp_draws[d] / 5.0;
    }
    CHECK((mean - out.spike_probs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((amp - out.amp_means).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.partitions.minCoeff() >= 1);

    run.thin = 2;
    run.iters = 12;
    CHECK(run_chain(ds.traces.values, ds.locations.coords, small_hyper(), run, 11).draws() == 3);

    RunOptions bad = run;
    bad.burnin = bad.iters;
    CHECK_THROWS_AS((void)run_chain(ds.traces.values, ds.locations.coords, small_hyper(), bad, 1), ArgumentError);
    bad = run;
    bad.thin = 0;
    CHECK_THROWS_AS((void)run_chain(ds.traces.values, ds.locations.coords, small_hyper(), bad, 1), ArgumentError);
}

TEST_CASE("coupling and label range hold after every sweep") {
    const auto ds = small_dataset(4);
    const Hyperparams h = small_hyper();
    GibbsSampler g(ds.traces.values, ds.locations.coords, h, 5);
    for (int it = 0; it < 200; ++it) {
        g.sweep();
        check_coupling(g.state(), h.a_bar);
        REQUIRE(g.state().clusters.zeta.minCoeff() >= 0);
        REQUIRE(g.state().clusters.zeta.maxCoeff() < h.K_max);
        REQUIRE(g.state().calcium.gamma > 0.0);
        REQUIRE(g.state().calcium.gamma < 1.0);
    }
    CHECK(g.counters().gamma_tried + g.counters().amp_tried >= 0);
}

TEST_CASE("chain output is identical across thread counts and reruns") {
    const auto ds = small_dataset(6, 16, 24);
    RunOptions run;
    run.iters = 40;
    run.burnin = 20;
    run.thin = 2;
    run.store_draws = true;
    run.threads = 1;
    const ChainOutput a = run_chain(ds.traces.values, ds.locations.coords, small_hyper(), run, 99);
    run.threads = 4;
    const ChainOutput b = run_chain(ds.traces.values, ds.locations.coords, small_hyper(), run, 99);
    CHECK(a.partitions == b.partitions);
    CHECK(a.spike_probs == b.spike_probs);
    CHECK(a.amp_means == b.amp_means);
    CHECK(a.scalars == b.scalars);

    testing::TempDir tmp;
    write_chain(tmp / "a", a);
    write_chain(tmp / "b", b);
    for (const char* f : {"partitions.csv", "spike_probs.csv", "amp_means.csv", "scalars.csv", "spikes_long.csv"}) {
        CHECK(testing::read_file(tmp / "a" / f) == testing::read_file(tmp / "b" / f));
    }
}

TEST_CASE("chain files round trip") {
    const auto ds = small_dataset(8);
    RunOptions run;
    run.iters = 12;
    run.burnin = 6;
    run.thin = 2;
    ChainOutput a = run_chain(ds.traces.values, ds.locations.coords, small_hyper(), run, 3);
    a.neuron_ids = ds.traces.neuron_ids;
    testing::TempDir tmp;
    write_chain(tmp.path(), a);
    const ChainOutput b = read_chain(tmp.path());
    CHECK(b.partitions == a.partitions);
    CHECK((b.spike_probs - a.spike_probs).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((b.scalars - a.scalars).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(b.meta.seed == 3);
    CHECK(b.meta.iters == 12);
    CHECK(b.meta.config_hash == a.meta.config_hash);
    CHECK(b.neuron_ids == a.neuron_ids);
    CHECK_THROWS((void)read_chain(tmp / "missing"));
}

TEST_CASE("prior draws respect the model's constraints") {
    const auto ds = small_dataset(9, 4, 8);
    const Hyperparams h = small_hyper();
    GibbsSampler g(ds.traces.values, ds.locations.coords, h, 1);
    Rng rng(10);
    double mean_gamma = 0.0;
    for (int d = 0; d < 2000; ++d) {
        const ModelState s = g.sample_prior(rng);
        check_coupling(s, h.a_bar);
        mean_gamma += s.calcium.gamma / 2000.0;
    }
    const double m = h.alpha_gamma / (h.alpha_gamma + h.beta_gamma);
    const double sd = std::sqrt(m * (1 - m) / (h.alpha_gamma + h.beta_gamma + 1) / 2000.0);
    CHECK(std::abs(mean_gamma - m) < 4.0 * sd);
}

TEST_CASE("Geweke test passes for the sampler and catches a corrupted update") {
    Hyperparams h;
    h.K_max = 5;
    h.J_max = 5;
    GewekeOptions opt;
    opt.cycles = 20000;
    opt.seed = 2;
    const GewekeReport ok = geweke_check(h, opt);
    CHECK(ok.stats.size() == 20);
    CHECK_MESSAGE(ok.passed(0.01), "min adjusted p " << ok.min_p());

    opt.hooks.sigma2_rate_multiplier = 2.0;
    const GewekeReport bad = geweke_check(h, opt);
    CHECK(bad.min_p() < 1e-4);

    opt.cycles = 0;
    CHECK_THROWS_AS((void)geweke_check(h, opt), ArgumentError);
    opt.cycles = 10;
    opt.neurons = 6;
    CHECK_THROWS_AS((void)geweke_check(h, opt), ArgumentError);
}
