"""Pseudoclassical simulation of an open Bose-Hubbard chain."""

from .ensemble import EnsembleStats, run_ensemble
from .errors import (
    ConfigError,
    CutoffTooSmall,
    DimensionError,
    DomainError,
    IntegrationDiverged,
    OpenChainError,
    WindowTooShort,
)
from .langevin import IntegratorConfig, NoiseStream, simulate, step
from .model import ChainParams, SingleSiteParams, SpdmMatrix, TransportRegime, transport_regime

__version__ = "0.1.0"

__all__ = [
    "ChainParams",
    "ConfigError",
    "CutoffTooSmall",
    "DimensionError",
    "DomainError",
    "EnsembleStats",
    "IntegrationDiverged",
    "IntegratorConfig",
    "NoiseStream",
    "OpenChainError",
    "SingleSiteParams",
    "SpdmMatrix",
    "TransportRegime",
    "WindowTooShort",
    "run_ensemble",
    "simulate",
    "step",
    "transport_regime",
]
