"""Time stepping of single noise realizations.

Integrates i da/dt = dH/da* - i(gamma/2)a + sqrt(D/2) xi with a symmetric
splitting: the on-site rotation a -> a exp(-i(omega + g|a|^2) h), which
conserves |a|, is applied for half a step on either side of a stochastic
Heun step for the hopping, friction and noise terms (the same Wiener
increment enters predictor and corrector). The rotation uses the Cayley
form of the exponential, so it stays exactly unitary; a plain Heun step on
the full drift slowly pumps energy into large-amplitude sites and blows up.

Each trajectory owns a counter-based Philox stream keyed by
``(master_seed, trajectory_index)``. Draws are laid out as
(step, driven site, quadrature), so a trajectory is reproducible no matter
how many steps are drawn per call or which batch it is integrated in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .errors import ConfigError, DimensionError, IntegrationDiverged
from .model import SiteCoefficients, site_coefficients

DIVERGENCE_LIMIT = 1e6
_NOISE_CHUNK = 512


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.005
    t_final: float = 80.0
    sample_stride: int = 20
    transient: float = 20.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}", "dt")
        if not self.t_final > self.dt:
            raise ConfigError(f"t_final must exceed dt, got {self.t_final}", "t_final")
        if not 0 <= self.transient < self.t_final:
            raise ConfigError(f"transient must lie in [0, t_final), got {self.transient}", "transient")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ConfigError(f"sample_stride must be an integer >= 1, got {self.sample_stride}", "stride")
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ConfigError("t_final must be an integer multiple of dt", "t_final")
        if n % self.sample_stride:
            raise ConfigError("number of steps must be a multiple of sample_stride", "stride")

    @classmethod
    def for_params(cls, params, dt: float = 0.005, sample_stride: int = 20) -> "IntegratorConfig":
        """Stationary-run defaults: run for 40 and discard 10 relaxation times 1/gamma."""
        gamma = params.gamma_min
        if not gamma > 0:
            raise ConfigError("stationary defaults need positive friction", "gamma1")
        return cls(dt=dt, t_final=40.0 / gamma, sample_stride=sample_stride, transient=10.0 / gamma)

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.sample_stride + 1

    @property
    def sample_interval(self) -> float:
        return self.dt * self.sample_stride

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.sample_interval

    @property
    def first_window_sample(self) -> int:
        """Index of the first sample at or after the transient."""
        return int(math.ceil(self.transient / self.sample_interval - 1e-9))


class NoiseStream:
    """Reproducible Gaussian noise for one trajectory."""

    def __init__(self, master_seed: int, trajectory_index: int):
        if trajectory_index < 0:
            raise ValueError("trajectory_index must be >= 0")
        self.master_seed = int(master_seed)
        self.trajectory_index = int(trajectory_index)
        self._key = ((self.master_seed % 2**64) << 64) | self.trajectory_index
        self._gen = np.random.Generator(np.random.Philox(key=self._key))

    def increments(self, n_steps: int, n_sites: int, dt: float) -> np.ndarray:
        """Complex Wiener increments of shape (n_steps, n_sites); each quadrature has variance dt."""
        z = self._gen.standard_normal((n_steps, n_sites, 2))
        return math.sqrt(dt) * (z[..., 0] + 1j * z[..., 1])

    def gaussian_state(self, factor: np.ndarray) -> np.ndarray:
        """Draw a = factor @ z with z standard complex normal, from a substream disjoint from the noise.

        With ``factor @ factor^H = rho^T`` the draw has <a_l^* a_m> = rho[l, m].
        """
        gen = np.random.Generator(np.random.Philox(key=self._key).jumped())
        z = gen.standard_normal((factor.shape[1], 2))
        return factor @ ((z[:, 0] + 1j * z[:, 1]) / math.sqrt(2))

    def increment(self, dt: float) -> complex:
        if not dt > 0:
            raise ValueError("dt must be > 0")
        return complex(self.increments(1, 1, dt)[0, 0])


def noise_increment(stream: NoiseStream, dt: float) -> complex:
    return stream.increment(dt)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_samples, L)

    def window(self, transient: float) -> "Trajectory":
        keep = self.times >= transient - 1e-9
        return Trajectory(self.times[keep], self.states[keep])


@nb.njit(cache=True)
def _rotation(z, omega, g, h):
    # Cayley form of exp(-i theta): unitary and second order in theta
    theta = (omega + g * (z.real * z.real + z.imag * z.imag)) * h
    t2 = 0.25 * theta * theta
    d = 1.0 / (1.0 + t2)
    return z * complex((1.0 - t2) * d, -theta * d)


@nb.njit(cache=True)
def _advance(a, dW, omega, g, J, gamma, driven, amp, dt):
    """Advance every row of ``a`` in place by ``dW.shape[0]`` steps."""
    n_steps, B, n_driven = dW.shape
    L = a.shape[1]
    b = np.empty(L, np.complex128)
    f0 = np.empty(L, np.complex128)
    pred = np.empty(L, np.complex128)
    half = 0.5 * dt
    for s in range(n_steps):
        for t in range(B):
            for l in range(L):
                b[l] = _rotation(a[t, l], omega, g, half)
            for l in range(L):
                hop = 0j
                if l > 0:
                    hop += b[l - 1]
                if l < L - 1:
                    hop += b[l + 1]
                f0[l] = 0.5j * J * hop - 0.5 * gamma[l] * b[l]
                pred[l] = b[l] + dt * f0[l]
            for k in range(n_driven):
                pred[driven[k]] += -1j * amp[k] * dW[s, t, k]
            for l in range(L):
                hop = 0j
                if l > 0:
                    hop += pred[l - 1]
                if l < L - 1:
                    hop += pred[l + 1]
                b[l] += half * (f0[l] + 0.5j * J * hop - 0.5 * gamma[l] * pred[l])
            for k in range(n_driven):
                b[driven[k]] += -1j * amp[k] * dW[s, t, k]
            for l in range(L):
                a[t, l] = _rotation(b[l], omega, g, half)


def advance(a: np.ndarray, c: SiteCoefficients, dt: float, dW: np.ndarray) -> None:
    """Advance states ``a`` (B, L) in place; ``dW`` has shape (n_steps, B, n_driven)."""
    _advance(
        a, np.ascontiguousarray(dW, dtype=np.complex128), float(c.omega), float(c.g), float(c.J),
        np.asarray(c.gamma, dtype=np.float64), np.asarray(c.driven, dtype=np.int64),
        np.asarray(c.noise_amp, dtype=np.float64), float(dt),
    )


def _check_finite(a, streams):
    bad = ~(np.isfinite(a).all(axis=-1) & (np.abs(a) <= DIVERGENCE_LIMIT).all(axis=-1))
    if bad.any():
        idx = streams[int(np.argmax(bad))].trajectory_index
        raise IntegrationDiverged(
            f"trajectory {idx} diverged (|a| > {DIVERGENCE_LIMIT:g} or non-finite); reduce dt",
            trajectory_index=idx,
        )


def integrate_batch(
    initial: np.ndarray,
    coeffs: SiteCoefficients,
    config: IntegratorConfig,
    streams: Sequence[NoiseStream],
    on_sample: Callable[[int, np.ndarray], None],
) -> np.ndarray:
    """Advance a batch of trajectories, calling ``on_sample(k, a)`` at every recorded time.

    ``initial`` has shape (B, L) with one row per stream. Returns the final states.
    """
    a = np.array(initial, dtype=complex)
    if a.ndim != 2 or a.shape != (len(streams), coeffs.L):
        raise DimensionError(f"initial batch shape {a.shape} does not match ({len(streams)}, {coeffs.L})")
    _check_finite(a, streams)
    on_sample(0, a)
    n_driven = len(coeffs.driven)
    stride = config.sample_stride
    dt = config.dt
    chunk = stride * max(1, _NOISE_CHUNK // stride)
    done = 0
    while done < config.n_steps:
        n = min(chunk, config.n_steps - done)
        dW = np.stack([s.increments(n, n_driven, dt) for s in streams], axis=1)
        for i in range(0, n, stride):
            advance(a, coeffs, dt, dW[i:i + stride])
            done += stride
            _check_finite(a, streams)
            on_sample(done // stride, a)
    return a


def step(state, params, dt: float, stream: NoiseStream) -> np.ndarray:
    """Advance one state by ``dt`` using one increment per driven site from ``stream``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    c = site_coefficients(params)
    a = np.atleast_1d(np.asarray(state, dtype=complex))
    if a.shape != (c.L,):
        raise DimensionError(f"state has shape {a.shape}, parameters expect ({c.L},)")
    out = a[None, :].copy()
    advance(out, c, dt, stream.increments(1, len(c.driven), dt)[:, None, :])
    _check_finite(out, [stream])
    return out[0]


def simulate(initial, params, config: IntegratorConfig, stream: NoiseStream) -> Trajectory:
    c = site_coefficients(params)
    if initial is None:
        initial = np.zeros(c.L, dtype=complex)
    initial = np.atleast_1d(np.asarray(initial, dtype=complex))
    states = np.empty((config.n_samples, c.L), dtype=complex)

    def record(k, a):
        states[k] = a[0]

    integrate_batch(initial[None, :], c, config, [stream], record)
    return Trajectory(config.times, states)


def zero_state(params) -> np.ndarray:
    return np.zeros(site_coefficients(params).L, dtype=complex)


def covariance_factor(rho: np.ndarray) -> np.ndarray:
    """Matrix C with C C^H = rho^T for a Hermitian positive semidefinite ``rho``."""
    w, V = np.linalg.eigh(np.asarray(rho).T)
    return V * np.sqrt(np.clip(w, 0.0, None))


__all__ = [
    "IntegratorConfig",
    "NoiseStream",
    "Trajectory",
    "advance",
    "integrate_batch",
    "noise_increment",
    "simulate",
    "step",
    "zero_state",
    "covariance_factor",
]
