#pragma once

#include "calens/calcium_dynamics.hpp"
#include "calens/random.hpp"
#include "calens/types.hpp"

#include <span>
#include <vector>

namespace calens {

/// omega_j = v_j prod_{r<j} (1 - v_r). With v_J = 1 the weights sum to 1.
Vector stick_weights(const Vector& sticks);

/// Normalized probabilities of xi_{i,t} = 0..J for one transition with
/// state increment r = c_t - gamma c_{t-1} and activation atom value stilde.
std::vector<double> spike_allocation_probs(double r, double stilde, double tau2, const Vector& amp_atoms,
                                           const Vector& log_omega);

/// Draws xi, s and a for one neuron. `log_on` and `log_off` hold log Phi(stilde_t)
/// and log Phi(-stilde_t) for the neuron's cluster atom (length T); `c` is its
/// calcium path (length T+1).
void sample_spike_allocations_row(std::span<const double> c, double gamma, double tau2,
                                  std::span<const double> log_on, std::span<const double> log_off,
                                  const Vector& amp_atoms,
                                  const Vector& log_omega, std::span<int> xi, std::span<int> s,
                                  std::span<double> a, Rng& rng);

/// Whole-matrix convenience wrapper; `stilde` is n x T (row i = atom of zeta_i).
void sample_spike_allocations(const Matrix& c, double gamma, double tau2, const Matrix& stilde,
                              SpikeState& spikes, Rng& rng);

/// Per-atom sufficient statistics: count and sum of increments r over
/// transitions allocated to atom j (index j-1).
struct AtomStats {
    std::vector<long> count;
    std::vector<double> sum_r;
};
AtomStats atom_stats(const IntMatrix& xi, const Matrix& c, double gamma, int J);

/// Unnormalized log density of atom value `value` given its allocated increments.
double amplitude_log_target(double value, long count, double sum_r, double tau2, double alpha_a, double beta_a,
                            double a_bar);

/// One MH step per occupied atom on log(a* - a_bar); empty atoms are redrawn
/// from a_bar + Gamma(alpha_a, beta_a). Returns the number of accepted moves.
int sample_amplitude_atoms(Vector& amp_atoms, const AtomStats& stats, double tau2, double alpha_a, double beta_a,
                           double a_bar, double step, Rng& rng, int* attempted = nullptr);

/// Rewrites a from xi and the current atoms.
void refresh_amplitudes(SpikeState& spikes);

/// v_j ~ Beta(1 + n_j, alpha + sum_{r>j} n_r), v_J = 1.
Vector sample_dp_sticks(std::span<const long> counts, double alpha_dp, Rng& rng);

} // namespace calens
