#pragma once

#include <optional>

namespace calens {

/// Every fixed prior constant and tuning knob of the joint model.
///
/// Gamma priors are shape-rate and sit on the precisions 1/sigma^2, 1/tau^2.
/// The amplitude base measure is a_bar + Gamma(alpha_a, beta_a). The GP over
/// the latent activation atoms uses a squared-exponential kernel in frame units.
struct Hyperparams {
    // Calcium layer.
    double C0 = 10.0;
    double b0 = 0.0;
    double B0 = 10.0;
    double alpha_sigma = 2.0;
    double beta_sigma = 2.0;
    double alpha_tau = 2.0;
    double beta_tau = 2.0;
    double alpha_gamma = 9.0;
    double beta_gamma = 1.0;

    // Spike-and-slab DP on amplitudes.
    double alpha_a = 10.0;
    double beta_a = 1.0;
    double a_bar = 0.5;
    double alpha_dp = 1.0;

    // Spatial probit stick-breaking mixture of GP atoms.
    double mu_stilde = -1.5;
    double gp_kernel_variance = 1.0;
    double gp_kernel_lengthscale = 3.0;
    /// Proximity decay; empty means "pick from the neuron locations".
    std::optional<double> theta;
    double mu_alpha = 0.0;
    double sigma2_alpha = 1.0;

    int K_max = 30;
    int J_max = 20;
    int p_vecchia = 10;

    // Metropolis proposal scales (logit gamma, log(a* - a_bar)).
    double mh_step_gamma = 0.3;
    double mh_step_a = 0.3;

    /// Throws ArgumentError naming the first violated constraint.
    void validate() const;
};

} // namespace calens
