"""Parameters, deterministic dynamics and diagnostics of the oscillator chain.

Amplitudes are plain complex numpy arrays whose last axis runs over sites,
so every function here also works on stacks of states with shape (..., L).
Sites are 0-based in code; the physical site l corresponds to index l-1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, DimensionError

DEFAULT_NBAR = 10.0


@dataclass(frozen=True)
class ChainParams:
    """Physical constants of the boundary-driven chain.

    ``g`` governs the classical dynamics. ``U`` is optional and, when given,
    must satisfy ``g == U * nbar``; use :meth:`from_interaction` to derive
    ``g`` from ``U``.
    """

    L: int = 5
    J: float = 1.0
    omega: float = 1.0
    g: float = 0.0
    gamma1: float = 0.5
    gammaL: float = 0.5
    D1: float = 0.5
    DL: float = 0.25
    U: Optional[float] = None
    nbar: float = DEFAULT_NBAR

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ConfigError(f"chain length must be an integer >= 2, got {self.L}", "length")
        for key in ("J", "gamma1", "gammaL", "D1", "DL"):
            value = getattr(self, key)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{key} must be finite and >= 0, got {value}", key)
        if not self.nbar > 0:
            raise ConfigError(f"nbar must be > 0, got {self.nbar}", "nbar")
        if self.U is not None and not math.isclose(self.g, self.U * self.nbar, rel_tol=1e-12, abs_tol=1e-12):
            raise ConfigError(
                f"g={self.g} inconsistent with U*nbar={self.U * self.nbar}", "g"
            )

    @classmethod
    def from_interaction(cls, U: float, nbar: float = DEFAULT_NBAR, **kwargs) -> "ChainParams":
        return cls(g=U * nbar, U=U, nbar=nbar, **kwargs)

    @property
    def hbar_eff(self) -> float:
        return 1.0 / self.nbar

    @property
    def gamma_min(self) -> float:
        return min(self.gamma1, self.gammaL)


@dataclass(frozen=True)
class SingleSiteParams:
    """A single damped, driven nonlinear oscillator."""

    omega: float = 1.0
    g: float = 0.0
    gamma: float = 0.5
    D: float = 0.5

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}", "gamma")
        if self.D < 0:
            raise ConfigError(f"D must be >= 0, got {self.D}", "D")

    @property
    def L(self) -> int:
        return 1

    @property
    def J(self) -> float:
        return 0.0

    @property
    def gamma_min(self) -> float:
        return self.gamma


class SiteCoefficients(NamedTuple):
    """Per-site friction and noise layout used by the integrators."""

    L: int
    omega: float
    g: float
    J: float
    gamma: np.ndarray  # friction per site, zero in the bulk
    driven: np.ndarray  # indices of sites receiving noise
    noise_amp: np.ndarray  # sqrt(D/2) for each driven site


def site_coefficients(params) -> SiteCoefficients:
    if isinstance(params, SingleSiteParams):
        return SiteCoefficients(
            1, params.omega, params.g, 0.0,
            np.array([params.gamma]), np.array([0]), np.sqrt(np.array([params.D]) / 2),
        )
    L = params.L
    gamma = np.zeros(L)
    gamma[0] = params.gamma1
    gamma[-1] = params.gammaL
    return SiteCoefficients(
        L, params.omega, params.g, params.J, gamma,
        np.array([0, L - 1]), np.sqrt(np.array([params.D1, params.DL]) / 2),
    )


def _check_length(a, L):
    if a.shape[-1] != L:
        raise DimensionError(f"state has {a.shape[-1]} sites, parameters expect {L}")


def _hopping(a):
    """Sum of the two neighbours with open ends (missing neighbours are zero)."""
    out = np.zeros_like(a)
    out[..., :-1] += a[..., 1:]
    out[..., 1:] += a[..., :-1]
    return out


def drift_from_coefficients(a: np.ndarray, c: SiteCoefficients) -> np.ndarray:
    intensity = a.real**2 + a.imag**2
    dH = (c.omega + c.g * intensity) * a
    if c.J:
        dH = dH - 0.5 * c.J * _hopping(a)
    return -1j * dH - 0.5 * c.gamma * a


def drift(state, params: ChainParams) -> np.ndarray:
    """Deterministic rate da/dt of the chain: -i dH/da* minus boundary friction."""
    a = np.asarray(state, dtype=complex)
    _check_length(a, params.L)
    return drift_from_coefficients(a, site_coefficients(params))


def drift_single(state: complex, params: SingleSiteParams) -> complex:
    a = complex(state)
    return -1j * (params.omega + params.g * abs(a) ** 2) * a - 0.5 * params.gamma * a


def hamiltonian(state, params: ChainParams) -> float:
    a = np.asarray(state, dtype=complex)
    _check_length(a, params.L)
    intensity = np.abs(a) ** 2
    onsite = np.sum(params.omega * intensity + 0.5 * params.g * intensity**2, axis=-1)
    hop = np.sum(np.conj(a[..., 1:]) * a[..., :-1], axis=-1).real
    return onsite - params.J * hop


def quadratures(state):
    """Canonical pair (q, p) with a = (q + i p)/sqrt(2)."""
    a = np.asarray(state, dtype=complex)
    return math.sqrt(2) * a.real, math.sqrt(2) * a.imag


def from_quadratures(q, p):
    return (np.asarray(q) + 1j * np.asarray(p)) / math.sqrt(2)


def eigenfrequencies(params: ChainParams) -> np.ndarray:
    """Band of collective-mode frequencies -J cos(2 pi k / L), k = 1..L.

    This is the ring dispersion used as an approximate label for the open chain.
    """
    k = np.arange(1, params.L + 1)
    return -params.J * np.cos(2 * np.pi * k / params.L)


class TransportRegime(str, enum.Enum):
    BALLISTIC = "ballistic"
    DIFFUSIVE = "diffusive"
    MIXED = "mixed"


def transport_regime(stationary_actions, params: ChainParams) -> TransportRegime:
    """Classify transport by comparing each site's nonlinear shift g*I with the bandwidth J."""
    actions = np.asarray(stationary_actions, dtype=float)
    _check_length(actions, params.L)
    if params.g <= 0:
        return TransportRegime.BALLISTIC
    above = actions > params.J / params.g
    if above.all():
        return TransportRegime.DIFFUSIVE
    if not above.any():
        return TransportRegime.BALLISTIC
    return TransportRegime.MIXED


@dataclass
class SpdmMatrix:
    """Single-particle density matrix rho[l, m] = <a_l^* a_m>."""

    entries: np.ndarray
    standard_errors: np.ndarray = field(default=None)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.standard_errors is None:
            self.standard_errors = np.zeros(self.entries.shape)

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    @property
    def actions(self) -> np.ndarray:
        return np.diag(self.entries).real.copy()

    def bond_currents(self, J: float) -> np.ndarray:
        return J * np.diagonal(self.entries, offset=1).imag
