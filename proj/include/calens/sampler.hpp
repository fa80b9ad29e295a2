#pragma once

#include "calens/calcium_dynamics.hpp"
#include "calens/config.hpp"
#include "calens/ensemble_clustering.hpp"
#include "calens/hyperparams.hpp"
#include "calens/random.hpp"
#include "calens/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace calens {

/// Spatial clustering layer. Labels are 0-based here and 1-based in files.
struct ClusterState {
    IntVector zeta;     // n
    Matrix gp_atoms;    // K_max x T
    Matrix psbp_alpha;  // K_max x n
};

/// One complete iterate of the joint model.
struct ModelState {
    CalciumState calcium;
    SpikeState spikes;
    ClusterState clusters;

    /// Number of distinct labels in zeta.
    int occupied_clusters() const;
};

/// Hyperparameters with data-dependent entries resolved: theta picked from the
/// locations when unset and p_vecchia clamped to T-1.
Hyperparams resolve_hyperparams(const Hyperparams& hyper, std::span<const Point2> locations, std::size_t T);

/// b_i = median(y_i), c = y - b (c_0 = c_1), gamma = prior mean, sigma^2 = tau^2
/// from the variance of first differences, no spikes, atoms from the base
/// measure, every neuron in cluster 0, gp atoms at mu_stilde, alpha = 0.
ModelState init_state(const Matrix& y, const Hyperparams& hyper, std::uint64_t seed);

/// Fault injection for validating the correctness harness.
struct SamplerHooks {
    double sigma2_rate_multiplier = 1.0;
};

struct MhCounters {
    long gamma_accepted = 0;
    long gamma_tried = 0;
    long amp_accepted = 0;
    long amp_tried = 0;
};

/// Gibbs sampler for the joint model. Every neuron and every cluster owns a
/// persistent random stream derived from the seed, and scalar updates use a
/// global stream, so the draws do not depend on the thread count.
class GibbsSampler {
public:
    GibbsSampler(Matrix y, std::vector<Point2> locations, const Hyperparams& hyper, std::uint64_t seed,
                 int threads = 1, SamplerHooks hooks = {});
    ~GibbsSampler();
    GibbsSampler(const GibbsSampler&) = delete;
    GibbsSampler& operator=(const GibbsSampler&) = delete;

    const Hyperparams& hyper() const { return hyper_; }
    ModelState& state() { return state_; }
    const ModelState& state() const { return state_; }
    const Matrix& data() const { return y_; }
    void set_data(Matrix y);

    /// One sweep through the seven update blocks in order. Numeric failures
    /// propagate as NumericError carrying the step label.
    void sweep();

    /// Robbins-Monro style nudging of both proposal scales toward 20-50%
    /// acceptance, using the counters since the previous call.
    void adapt_steps();
    /// Folds the current acceptance window into counters() without tuning.
    void flush_counters();
    double step_gamma() const { return step_gamma_; }
    double step_a() const { return step_a_; }
    const MhCounters& counters() const { return counters_; }

    /// Joint prior draw of every latent quantity.
    ModelState sample_prior(Rng& rng) const;
    /// y ~ N(b + c, sigma^2) given a state.
    Matrix sample_data(const ModelState& state, Rng& rng) const;

    const ProximityPosterior& proximity() const { return *proximity_; }
    const GpAtomSampler& gp() const { return *gp_; }

private:
    template <typename F>
    void parallel(std::size_t count, F&& body);

    Matrix y_;
    std::vector<Point2> locations_;
    Hyperparams hyper_;
    SamplerHooks hooks_;
    int threads_;
    ModelState state_;
    std::unique_ptr<ProximityPosterior> proximity_;
    std::unique_ptr<GpAtomSampler> gp_;
    std::vector<Rng> neuron_rng_;
    std::vector<Rng> cluster_rng_;
    Rng global_rng_;
    double step_gamma_;
    double step_a_;
    MhCounters counters_;
    MhCounters window_;
    struct Arena;
    std::unique_ptr<Arena> arena_;
};

struct ChainMeta {
    std::uint64_t seed = 0;
    std::string config_hash;
    int iters = 0;
    int burnin = 0;
    int thin = 1;
    int threads = 1;
    double theta = 0.0;
    int p_vecchia = 0;
    double gamma_acceptance = 0.0;
    double amp_acceptance = 0.0;
    double step_gamma = 0.0;
    double step_a = 0.0;
    Hyperparams hyper;  // resolved
};

/// Thinned post-burn-in output of one chain.
struct ChainOutput {
    IntMatrix partitions;  // draws x n, 1-based labels
    Matrix spike_probs;    // n x T
    Matrix amp_means;      // n x T
    Matrix scalars;        // draws x 4: gamma, sigma2, tau2, occupied clusters
    std::vector<IntMatrix> spike_draws;  // only with store_draws
    std::vector<Matrix> amp_draws;       // only with store_draws
    std::vector<std::string> neuron_ids;
    ChainMeta meta;

    std::size_t draws() const { return static_cast<std::size_t>(partitions.rows()); }
    double mean_gamma() const;
};

/// Called after every sweep with the 0-based iteration index.
using ProgressCallback = std::function<void(int)>;

/// Runs a chain. Draw d is taken after iteration burnin + (d+1) thin - 1, so
/// there are floor((iters - burnin) / thin) draws. Proposal scales adapt every
/// 50 iterations during burn-in when run.adapt is set. A NumericError is
/// rethrown with the iteration index and step label in its message.
ChainOutput run_chain(const Matrix& y, std::span<const Point2> locations, const Hyperparams& hyper,
                      const RunOptions& run, std::uint64_t seed, const SamplerHooks& hooks = {},
                      const ProgressCallback& progress = {});

} // namespace calens
