"""Joint Bayesian spike inference and functional ensemble clustering."""

import json as _json

from ._calens import (
    adjusted_rand_index,
    consensus_kmeans,
    deconvolve_spikes,
    l0_deconvolve,
    psbp_weights,
    similarity_matrix,
    simulate,
    spike_error_rates,
    vi_point_estimate,
)
from ._calens import run_chain as _run_chain
from ._calens import default_config as _default_config

__all__ = [
    "adjusted_rand_index",
    "consensus_kmeans",
    "default_config",
    "deconvolve_spikes",
    "fit",
    "l0_deconvolve",
    "psbp_weights",
    "similarity_matrix",
    "simulate",
    "spike_error_rates",
    "vi_point_estimate",
]


def default_config():
    """All hyperparameters and run options with their default values."""
    return _json.loads(_default_config())


def fit(y, locations, seed=1, iters=30000, burnin=25000, thin=5, threads=1, **hyper):
    """Run the Gibbs sampler on an n x T trace matrix and n x 2 locations.

    Keyword arguments beyond the run options override hyperparameters by name
    (for example ``alpha_a=4.0``). Returns a dict with ``partitions``,
    ``spike_probs``, ``amp_means`` and ``scalars``.
    """
    config = dict(hyper)
    config["run"] = {"iters": iters, "burnin": burnin, "thin": thin, "threads": threads}
    return _run_chain(y, locations, _json.dumps(config), seed)
