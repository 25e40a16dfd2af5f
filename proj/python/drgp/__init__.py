"""Deep recurrent sparse spectrum Gaussian processes."""

from ._drgp import (
    DrgpError,
    Fitted,
    feature_matrix,
    fit,
    load_model,
    optimal_bound,
    psi_stats,
    run_experiment,
)

__all__ = [
    "DrgpError",
    "Fitted",
    "feature_matrix",
    "fit",
    "load_model",
    "optimal_bound",
    "psi_stats",
    "run_experiment",
]
