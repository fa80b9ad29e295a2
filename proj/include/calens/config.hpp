#pragma once

#include "calens/hyperparams.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace calens {

/// Chain-length and execution settings that can live in a config file.
struct RunOptions {
    int iters = 30000;
    int burnin = 25000;
    int thin = 5;
    int threads = 1;
    bool store_draws = false;
    bool adapt = true;
};

struct RunConfig {
    Hyperparams hyper;
    RunOptions run;
    /// Hyperparameter overrides listed under "sweep"; empty if absent.
    std::vector<nlohmann::json> sweep;
};

nlohmann::json to_json(const Hyperparams& h);
nlohmann::json to_json(const RunOptions& r);
nlohmann::json to_json(const RunConfig& c);

/// Applies the keys of `j` on top of `h`. Unknown keys and wrongly typed values
/// are rejected with an ArgumentError naming the key.
void apply_overrides(Hyperparams& h, const nlohmann::json& j);
void apply_overrides(RunOptions& r, const nlohmann::json& j);

/// Parses a JSON config. Hyperparameters sit at the top level, run options
/// under "run", and an optional "sweep" array lists per-run overrides.
/// An empty file yields all defaults. Invariants are validated at load.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// One fully-resolved config per sweep entry (or just `base` when no sweep).
std::vector<RunConfig> expand_sweep(const RunConfig& base);

/// Stable 64-bit FNV-1a fingerprint of the canonical JSON dump, as hex.
std::string config_hash(const Hyperparams& h);
std::string fnv1a_hex(const std::string& bytes);

} // namespace calens
