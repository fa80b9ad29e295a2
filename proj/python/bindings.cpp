#include "calens/baseline_two_stage.hpp"
#include "calens/config.hpp"
#include "calens/ensemble_clustering.hpp"
#include "calens/errors.hpp"
#include "calens/posterior_summaries.hpp"
#include "calens/sampler.hpp"
#include "calens/synthetic_bench.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace calens;

namespace {

std::vector<Point2> to_points(const Matrix& xy) {
    if (xy.cols() != 2) {
        throw ArgumentError("locations must be an n x 2 array");
    }
    std::vector<Point2> out(static_cast<std::size_t>(xy.rows()));
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = {xy(i, 0), xy(i, 1)};
    }
    return out;
}

Matrix from_points(const std::vector<Point2>& pts) {
    Matrix xy(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        xy(static_cast<Eigen::Index>(i), 0) = pts[i].x;
        xy(static_cast<Eigen::Index>(i), 1) = pts[i].y;
    }
    return xy;
}

py::dict simulate(int n, int T, std::uint64_t seed, int replicate) {
    SyntheticConfig cfg;
    cfg.n = n;
    cfg.T = T;
    Rng rng(seed, StreamKind::Replicate, static_cast<std::uint64_t>(replicate));
    const SyntheticDataset ds = generate_dataset(cfg, rng);
    py::dict d;
    d["y"] = ds.traces.values;
    d["locations"] = from_points(ds.locations.coords);
    d["spikes"] = ds.truth.s_true;
    d["amplitudes"] = ds.truth.a_true;
    d["calcium"] = ds.truth.c_true;
    d["labels"] = ds.truth.zeta_true;
    d["prob_curves"] = ds.truth.prob_curves;
    return d;
}

py::dict run(const Matrix& y, const Matrix& locations, const std::string& config_json, std::uint64_t seed) {
    const RunConfig cfg = parse_config(config_json);
    ChainOutput ch;
    {
        py::gil_scoped_release release;
        ch = run_chain(y, to_points(locations), cfg.hyper, cfg.run, seed);
    }
    py::dict d;
    d["partitions"] = ch.partitions;
    d["spike_probs"] = ch.spike_probs;
    d["amp_means"] = ch.amp_means;
    d["scalars"] = ch.scalars;
    return d;
}

} // namespace

PYBIND11_MODULE(_calens, m) {
    m.doc() = "Bindings for the calens C++ library";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("default_config", [] { return to_json(RunConfig{}).dump(); });
    m.def("simulate", &simulate, py::arg("n") = 100, py::arg("T") = 50, py::arg("seed") = 1,
          py::arg("replicate") = 0,
          "Synthetic benchmark dataset as a dict of arrays (labels are 1-based).");
    m.def("run_chain", &run, py::arg("y"), py::arg("locations"), py::arg("config_json"), py::arg("seed"));

    m.def(
        "vi_point_estimate",
        [](const IntMatrix& partitions, std::uint64_t seed) {
            Rng rng(seed, StreamKind::Summary);
            const ViResult r = vi_point_estimate(partitions, {}, rng);
            return py::make_tuple(r.labels, r.expected_vi);
        },
        py::arg("partitions"), py::arg("seed") = 1, "Returns (labels, expected VI).");
    m.def("similarity_matrix", &similarity_matrix, py::arg("partitions"));
    m.def("psbp_weights", [](const std::vector<double>& alpha) { return psbp_weights(alpha); }, py::arg("alpha"));

    m.def(
        "l0_deconvolve",
        [](const std::vector<double>& y, double gamma, double lambda) {
            const L0Fit f = l0_deconvolve(y, gamma, lambda);
            py::dict d;
            d["spikes"] = f.spikes;
            d["amplitudes"] = f.amplitudes;
            d["calcium"] = f.calcium;
            d["objective"] = f.objective;
            return d;
        },
        py::arg("y"), py::arg("gamma"), py::arg("lam"));
    m.def("deconvolve_spikes", [](const Matrix& y) { return deconvolve_spikes(y); }, py::arg("y"));
    m.def(
        "consensus_kmeans",
        [](const Matrix& spikes, std::uint64_t seed) {
            Rng rng(seed, StreamKind::Summary);
            const ConsensusResult r = consensus_kmeans(spikes, {}, rng);
            return py::make_tuple(r.labels, r.k);
        },
        py::arg("spikes"), py::arg("seed") = 1, "Returns (labels, K).");

    m.def(
        "spike_error_rates",
        [](const IntMatrix& truth, const IntMatrix& est) {
            const SpikeErrors e = spike_error_rates(truth, est);
            py::dict d;
            d["false_negative"] = e.false_negative;
            d["false_positive"] = e.false_positive;
            d["misclassification"] = e.misclassification;
            return d;
        },
        py::arg("truth"), py::arg("estimate"));
    m.def(
        "adjusted_rand_index",
        [](const std::vector<int>& a, const std::vector<int>& b) { return adjusted_rand_index(a, b); },
        py::arg("a"), py::arg("b"));
}
