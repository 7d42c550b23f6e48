"""Exact master-equation reference for a single damped anharmonic oscillator.

H = omega n + (U/2) n^2 in a Fock basis truncated at ``cutoff``. Two forms of
the dissipator are supported:

``lindblad``
    loss at rate gamma (nbar + 1) and gain at rate gamma nbar.
``split``
    diffusion -(D nbar/2)([a,[a^+,R]] + [a^+,[a,R]]) plus friction
    -(gamma/2)(a^+a R - 2 a R a^+ + R a^+a), with D and gamma independent.

Because H is diagonal, every dissipator term maps the k-th off-diagonal band
R[m, m+k] onto itself, and on each band the generator is tridiagonal. Bands
are propagated exactly with a matrix exponential; bands that start at zero
stay zero and are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg

from .errors import ConfigError, CutoffTooSmall, DomainError

TOP_LEVELS = 5
TOP_POPULATION_LIMIT = 1e-8


@dataclass(frozen=True)
class OscillatorQuantumParams:
    omega: float = 1.0
    U: float = 0.0
    nbar: float = 10.0
    gamma: float = 0.5
    D: Optional[float] = None  # split mode only; lindblad mode implies D = gamma
    mode: str = "lindblad"

    def __post_init__(self):
        if self.mode not in ("lindblad", "split"):
            raise ConfigError(f"mode must be 'lindblad' or 'split', got {self.mode!r}", "mode")
        if self.nbar < 0 or self.gamma < 0:
            raise ConfigError("nbar and gamma must be >= 0", "gamma")
        if self.mode == "split" and (self.D is None or self.D < 0):
            raise ConfigError("split mode needs D >= 0", "D")

    @property
    def diffusion(self) -> float:
        return self.gamma if self.mode == "lindblad" else self.D

    @property
    def g(self) -> float:
        return self.U * self.nbar


@dataclass
class FockDensityMatrix:
    matrix: np.ndarray
    time: float = 0.0

    @property
    def cutoff(self) -> int:
        return self.matrix.shape[0] - 1

    @classmethod
    def fock(cls, n: int, cutoff: int) -> "FockDensityMatrix":
        if not 0 <= n <= cutoff:
            raise ValueError(f"Fock level {n} outside [0, {cutoff}]")
        m = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        m[n, n] = 1.0
        return cls(m)

    @classmethod
    def thermal(cls, mean: float, cutoff: int) -> "FockDensityMatrix":
        n = np.arange(cutoff + 1)
        p = (mean / (mean + 1)) ** n / (mean + 1) if mean > 0 else (n == 0).astype(float)
        return cls(np.diag(p / p.sum()).astype(complex))

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def populations(self) -> np.ndarray:
        return np.diag(self.matrix).real.copy()

    def top_population(self, levels: int = TOP_LEVELS) -> float:
        return float(self.populations()[-levels:].sum())


def mean_number(rho: FockDensityMatrix) -> float:
    n = np.arange(rho.cutoff + 1)
    return float(np.dot(n, rho.populations()))


def steady_number(D: float, gamma: float, nbar: float) -> float:
    """Stationary occupation nbar D / gamma."""
    if not gamma > 0:
        raise DomainError("no steady state for gamma = 0: diffusion grows without bound")
    return nbar * D / gamma


def _cutoff_for_mean(mean: float) -> int:
    # thermal tail: keep the top levels well below TOP_POPULATION_LIMIT
    if mean <= 0:
        return 10
    ratio = mean / (mean + 1)
    n = math.log(1e-11 * (mean + 1) / TOP_LEVELS) / math.log(ratio)
    return int(math.ceil(n)) + TOP_LEVELS + 5


def default_cutoff(params: OscillatorQuantumParams, t_final: float, initial_number: float = 0.0) -> int:
    """Cutoff large enough for the largest thermal-like occupation reached by ``t_final``."""
    D = params.diffusion
    if params.gamma > 0:
        peak = max(steady_number(D, params.gamma, params.nbar), initial_number)
    else:
        peak = initial_number + params.nbar * D * t_final
    return max(_cutoff_for_mean(peak), int(math.ceil(initial_number)) + 10 + TOP_LEVELS)


def band_generator(params: OscillatorQuantumParams, cutoff: int, k: int) -> np.ndarray:
    """Generator acting on x_m = R[m, m+k], m = 0..cutoff-k (k >= 0)."""
    K = cutoff + 1 - k
    m = np.arange(K)
    n_left, n_right = m, m + k
    # diagonal of a a^+ in the truncated space: m + 1, except 0 at the top level
    e_left = np.where(n_left < cutoff, n_left + 1, 0)
    e_right = np.where(n_right < cutoff, n_right + 1, 0)
    energy = lambda n: params.omega * n + 0.5 * params.U * n**2  # noqa: E731
    G = np.zeros((K, K), dtype=complex)
    diag = -1j * (energy(n_left) - energy(n_right)).astype(complex)
    if params.mode == "lindblad":
        loss = params.gamma * (params.nbar + 1)
        gain = params.gamma * params.nbar
        diag += -0.5 * loss * (n_left + n_right) - 0.5 * gain * (e_left + e_right)
        up = loss * np.sqrt((m[:-1] + 1) * (m[:-1] + k + 1.0))  # a R a^+ pulls from m+1
        down = gain * np.sqrt(m[1:] * (m[1:] + k + 0.0))  # a^+ R a pulls from m-1
    else:
        # double commutators: (aa^+ + a^+a)R + R(a^+a + aa^+) - 2 a R a^+ - 2 a^+ R a
        c = 0.5 * params.D * params.nbar
        diag += -c * (e_left + n_left + n_right + e_right)
        up = 2 * c * np.sqrt((m[:-1] + 1) * (m[:-1] + k + 1.0))
        down = 2 * c * np.sqrt(m[1:] * (m[1:] + k + 0.0))
        # friction: -(gamma/2)(a^+a R - 2 a R a^+ + R a^+a)
        diag += -0.5 * params.gamma * (n_left + n_right)
        up = up + params.gamma * np.sqrt((m[:-1] + 1) * (m[:-1] + k + 1.0))
    G[np.arange(K - 1), np.arange(1, K)] += up
    G[np.arange(1, K), np.arange(K - 1)] += down
    G[m, m] += diag
    return G


def liouvillian(R: np.ndarray, params: OscillatorQuantumParams) -> np.ndarray:
    """dR/dt from literal matrix products of the truncated operators."""
    n_levels = R.shape[0]
    a = np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)
    ad = a.conj().T
    n = ad @ a
    H = params.omega * n + 0.5 * params.U * n @ n
    out = -1j * (H @ R - R @ H)
    if params.mode == "lindblad":
        loss = params.gamma * (params.nbar + 1)
        gain = params.gamma * params.nbar
        out += -0.5 * loss * (n @ R - 2 * a @ R @ ad + R @ n)
        out += -0.5 * gain * (a @ ad @ R - 2 * ad @ R @ a + R @ a @ ad)
    else:
        def comm(x, y):
            return x @ y - y @ x

        out += -0.5 * params.D * params.nbar * (comm(a, comm(ad, R)) + comm(ad, comm(a, R)))
        out += -0.5 * params.gamma * (n @ R - 2 * a @ R @ ad + R @ n)
    return out


def _check(rho: FockDensityMatrix):
    top = rho.top_population()
    if top > TOP_POPULATION_LIMIT:
        raise CutoffTooSmall(
            f"population {top:.3g} in the top {TOP_LEVELS} Fock levels at t={rho.time:g} "
            f"(cutoff {rho.cutoff}); increase the cutoff"
        )


def evolve_master(
    params: OscillatorQuantumParams,
    rho0: Optional[FockDensityMatrix],
    t_final: float,
    n_samples: int = 101,
    cutoff: Optional[int] = None,
) -> List[FockDensityMatrix]:
    """Density matrices at ``n_samples`` equally spaced times in [0, t_final].

    ``rho0=None`` starts from the ground state with a cutoff chosen by
    :func:`default_cutoff` unless ``cutoff`` is given.
    """
    if rho0 is None:
        if cutoff is None:
            cutoff = default_cutoff(params, t_final)
        rho0 = FockDensityMatrix.fock(0, cutoff)
    if abs(rho0.trace() - 1) > 1e-9:
        raise ValueError("initial density matrix is not normalized")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    cut = rho0.cutoff
    _check(rho0)
    h = t_final / (n_samples - 1)
    R = np.array(rho0.matrix, dtype=complex)
    bands = {}
    for k in range(cut + 1):
        x = np.diagonal(R, offset=k).copy()
        if np.any(x != 0):
            bands[k] = (scipy.linalg.expm(band_generator(params, cut, k) * h), x)
    out = [FockDensityMatrix(R.copy(), 0.0)]
    for s in range(1, n_samples):
        R = np.zeros_like(R)
        for k, (P, x) in bands.items():
            x = P @ x
            bands[k] = (P, x)
            idx = np.arange(cut + 1 - k)
            R[idx, idx + k] = x
            if k:
                R[idx + k, idx] = x.conj()
        rho = FockDensityMatrix(R, s * h)
        _check(rho)
        out.append(rho)
    return out


@dataclass
class ConsistencyReport:
    times: np.ndarray
    quantum: np.ndarray  # N(t)/nbar
    classical: np.ndarray  # <I(t)>
    classical_se: np.ndarray
    tolerance: np.ndarray
    max_deviation: float
    within: bool = field(default=False)


def classical_consistency(
    params: OscillatorQuantumParams,
    g: Optional[float] = None,
    *,
    t_final: float = 10.0,
    M: int = 4000,
    master_seed: int = 0,
    dt: float = 0.005,
    sample_stride: int = 20,
    abs_tol: float = 0.0,
) -> ConsistencyReport:
    """Compare N(t)/nbar from the master equation with the Langevin mean action.

    Both start from rest (ground state / zero amplitude). The allowed
    deviation at each time is ``3 * se + abs_tol`` plus the cutoff error.
    """
    from .ensemble import run_ensemble
    from .langevin import IntegratorConfig
    from .model import SingleSiteParams

    if g is not None and not math.isclose(g, params.g, rel_tol=1e-12, abs_tol=1e-12):
        raise ConfigError(f"g={g} inconsistent with U*nbar={params.g}", "g")
    if not params.nbar > 0:
        raise ConfigError("nbar must be > 0 for the classical mapping", "nbar")
    config = IntegratorConfig(dt=dt, t_final=t_final, sample_stride=sample_stride, transient=0.0)
    stats = run_ensemble(
        SingleSiteParams(omega=params.omega, g=params.g, gamma=params.gamma, D=params.diffusion),
        config, M=M, master_seed=master_seed,
    )
    rhos = evolve_master(params, None, t_final, n_samples=config.n_samples)
    quantum = np.array([mean_number(r) for r in rhos]) / params.nbar
    cutoff_err = max(r.top_population() for r in rhos)
    classical = stats.actions[:, 0]
    se = stats.actions_se[:, 0]
    tol = 3 * se + abs_tol + cutoff_err
    dev = np.abs(quantum - classical)
    return ConsistencyReport(
        config.times, quantum, classical, se, tol, float(dev.max()), bool(np.all(dev <= tol))
    )
