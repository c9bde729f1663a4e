"""Marginal-mean transformation models for recurrent events with a terminal event."""

from ._core import (
    ConvergenceError,
    Dataset,
    Fit,
    Link,
    NumericalError,
    ValidationError,
    __version__,
    aalen_johansen,
    censoring_survival,
    fit,
    ghosh_lin,
    gompertz_cum,
    mc_study,
    nelson_aalen_pseudo,
    predict,
    presets,
    simulate,
)

__all__ = [
    "ConvergenceError",
    "Dataset",
    "Fit",
    "Link",
    "NumericalError",
    "ValidationError",
    "aalen_johansen",
    "censoring_survival",
    "fit",
    "ghosh_lin",
    "gompertz_cum",
    "mc_study",
    "nelson_aalen_pseudo",
    "predict",
    "presets",
    "simulate",
]
