#include "calens/chain_io.hpp"

#include "calens/csv.hpp"
#include "calens/errors.hpp"

#include <fstream>

namespace calens {

namespace fs = std::filesystem;
using nlohmann::json;

json chain_meta_json(const ChainMeta& m) {
    return json{{"seed", m.seed},
                {"config_hash", m.config_hash},
                {"iters", m.iters},
                {"burnin", m.burnin},
                {"thin", m.thin},
                {"threads", m.threads},
                {"theta", m.theta},
                {"p_vecchia", m.p_vecchia},
                {"gamma_acceptance", m.gamma_acceptance},
                {"amp_acceptance", m.amp_acceptance},
                {"step_gamma", m.step_gamma},
                {"step_a", m.step_a},
                {"hyperparams", to_json(m.hyper)},
                {"version", "0.1.0"}};
}

void write_chain(const fs::path& dir, const ChainOutput& chain) {
    fs::create_directories(dir);
    // Always write a header so numeric neuron ids survive the round trip.
    const auto ids = chain.neuron_ids.empty()
                         ? csv::numbered_header("neuron", static_cast<std::size_t>(chain.partitions.cols()))
                         : chain.neuron_ids;
    csv::write_int_matrix(dir / "partitions.csv", chain.partitions, ids);
    csv::write_matrix(dir / "spike_probs.csv", chain.spike_probs);
    csv::write_matrix(dir / "amp_means.csv", chain.amp_means);
    csv::write_matrix(dir / "scalars.csv", chain.scalars, {"gamma", "sigma2", "tau2", "occupied"});
    if (!chain.spike_draws.empty()) {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t d = 0; d < chain.spike_draws.size(); ++d) {
            const IntMatrix& s = chain.spike_draws[d];
            for (Eigen::Index i = 0; i < s.rows(); ++i) {
                for (Eigen::Index t = 0; t < s.cols(); ++t) {
                    if (s(i, t) != 0) {
                        rows.push_back({std::to_string(d), std::to_string(i), std::to_string(t),
                                        csv::format_double(chain.amp_draws[d](i, t))});
                    }
                }
            }
        }
        csv::write_table(dir / "spikes_long.csv", {"draw", "neuron", "frame", "amplitude"}, rows);
    }
    std::ofstream meta(dir / "meta.json");
    json j = chain_meta_json(chain.meta);
    j["draws"] = chain.draws();
    j["store_draws"] = !chain.spike_draws.empty();
    meta << j.dump(2) << '\n';
}

ChainOutput read_chain(const fs::path& dir) {
    for (const char* name : {"partitions.csv", "spike_probs.csv", "amp_means.csv", "scalars.csv", "meta.json"}) {
        if (!fs::exists(dir / name)) {
            throw ArgumentError("chain directory is missing " + std::string(name) + ": " + dir.string());
        }
    }
    ChainOutput out;
    const Matrix parts = csv::read_matrix(dir / "partitions.csv", csv::HeaderMode::Present);
    out.partitions = parts.array().round().cast<int>();
    out.neuron_ids = csv::read_table(dir / "partitions.csv", csv::HeaderMode::Present).header;
    out.spike_probs = csv::read_matrix(dir / "spike_probs.csv");
    out.amp_means = csv::read_matrix(dir / "amp_means.csv");
    out.scalars = csv::read_matrix(dir / "scalars.csv");
    std::ifstream in(dir / "meta.json");
    const json j = json::parse(in);
    ChainMeta& m = out.meta;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.iters = j.at("iters").get<int>();
    m.burnin = j.at("burnin").get<int>();
    m.thin = j.at("thin").get<int>();
    m.threads = j.at("threads").get<int>();
    m.theta = j.at("theta").get<double>();
    m.p_vecchia = j.at("p_vecchia").get<int>();
    m.gamma_acceptance = j.at("gamma_acceptance").get<double>();
    m.amp_acceptance = j.at("amp_acceptance").get<double>();
    m.step_gamma = j.at("step_gamma").get<double>();
    m.step_a = j.at("step_a").get<double>();
    apply_overrides(m.hyper, j.at("hyperparams"));
    if (fs::exists(dir / "spikes_long.csv") && parts.rows() > 0) {
        const auto draws = static_cast<std::size_t>(parts.rows());
        out.spike_draws.assign(draws, IntMatrix::Zero(out.spike_probs.rows(), out.spike_probs.cols()));
        out.amp_draws.assign(draws, Matrix::Zero(out.spike_probs.rows(), out.spike_probs.cols()));
        const csv::Table t = csv::read_table(dir / "spikes_long.csv");
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& row = t.rows[r];
            if (row.size() != 4) {
                throw ParseError("spikes_long rows must have 4 cells", r + 2, 0);
            }
            const auto d = static_cast<std::size_t>(csv::parse_cell(row[0], r + 2, 1));
            const auto i = static_cast<Eigen::Index>(csv::parse_cell(row[1], r + 2, 2));
            const auto tt = static_cast<Eigen::Index>(csv::parse_cell(row[2], r + 2, 3));
            if (d >= draws || i >= out.spike_probs.rows() || tt >= out.spike_probs.cols()) {
                throw ParseError("spikes_long index out of range", r + 2, 0);
            }
            out.spike_draws[d](i, tt) = 1;
            out.amp_draws[d](i, tt) = csv::parse_cell(row[3], r + 2, 4);
        }
    }
    return out;
}

} // namespace calens
