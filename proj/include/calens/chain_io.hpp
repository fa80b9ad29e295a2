#pragma once

#include "calens/sampler.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace calens {

/// Chain directory layout:
///   partitions.csv   draws x n labels (1-based), header = neuron ids
///   spike_probs.csv  n x T posterior spike frequencies
///   amp_means.csv    n x T posterior mean amplitudes
///   scalars.csv      draws x (gamma, sigma2, tau2, occupied)
///   spikes_long.csv  draw,neuron,frame,amplitude for every stored spike (store_draws only)
///   meta.json        seed, config hash, resolved hyperparameters, run counts
void write_chain(const std::filesystem::path& dir, const ChainOutput& chain);
ChainOutput read_chain(const std::filesystem::path& dir);

nlohmann::json chain_meta_json(const ChainMeta& meta);

} // namespace calens
