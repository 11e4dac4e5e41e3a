from .extract import (
    BatchResult,
    CoopPoint,
    Trace,
    TraceOutcome,
    batch_extract,
    fit_bare_cavity,
    fit_coop_linear,
    fit_omia,
    refine_cavity,
)
from .lsq import FitReport, finite_difference_jacobian, least_squares

__all__ = [
    "BatchResult",
    "CoopPoint",
    "FitReport",
    "Trace",
    "TraceOutcome",
    "batch_extract",
    "finite_difference_jacobian",
    "fit_bare_cavity",
    "fit_coop_linear",
    "fit_omia",
    "least_squares",
    "refine_cavity",
]
