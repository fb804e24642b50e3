"""Bursts and time crystals from pumped, disordered spin ensembles in a lossy cavity."""

from .core import (
    BinnedEnsemble,
    ConfigError,
    DisorderSpec,
    DomainError,
    ModelParams,
    build_bins,
    cooperativity,
    hz,
    normalized_coupling,
    reference_params,
)

__version__ = "0.1.0"
