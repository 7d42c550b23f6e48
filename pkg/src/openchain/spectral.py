"""Stationary spectral densities of oscillator amplitudes.

The estimator is the rectangular-window periodogram averaged over
realizations,

    P_l(nu_k) = T/(2 pi) * |(1/N) sum_n a_l(t_n) exp(-i nu_k t_n)|^2,
    nu_k = 2 pi k / T,  k in [-N/2, N/2),

which is normalized so that dnu * sum_k P_l(nu_k) equals the time-averaged
action of the same samples exactly (Parseval). The kernel exp(-i nu t) puts
a free oscillator a ~ exp(-i omega t) at nu = -omega.

The periodogram's expectation is the true spectrum convolved with a Fejer
kernel, a bias of order 1/(gamma T). The ``correlogram`` alternative
transforms the lag-unbiased autocorrelation C(tau) = <a^*(t) a(t+tau)>
(each lag divided by its own number of products) on the same grid. It has
no window bias and obeys the same discrete sum rule, since only tau = 0
survives the sum over the grid, but single bins may come out negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, WindowTooShort


@dataclass
class SpectrumEstimate:
    frequencies: np.ndarray  # (K,) ascending
    densities: np.ndarray  # (L, K)
    standard_errors: np.ndarray  # (L, K)
    window_length: float
    M: int
    mean_actions: np.ndarray  # (L,) time-and-ensemble averaged |a_l|^2 of the same samples
    method: str = "periodogram"

    @property
    def L(self) -> int:
        return self.densities.shape[0]

    @property
    def resolution(self) -> float:
        return 2 * np.pi / self.window_length

    def sum_rule(self) -> np.ndarray:
        """dnu * sum_k P_l(nu_k) for every site."""
        return self.resolution * self.densities.sum(axis=1)


def window_periodograms(samples: np.ndarray, sample_interval: float):
    """Per-realization periodograms.

    ``samples`` has shape (..., N, L). Returns ``(frequencies, P)`` with ``P``
    of the same shape, frequencies sorted ascending along the N axis.
    """
    samples = np.asarray(samples, dtype=complex)
    N = samples.shape[-2]
    T = N * sample_interval
    X = np.fft.fft(samples, axis=-2) / N
    P = (T / (2 * np.pi)) * (X.real**2 + X.imag**2)
    freqs = 2 * np.pi * np.fft.fftfreq(N, d=sample_interval)
    return np.fft.fftshift(freqs), np.fft.fftshift(P, axes=-2)


def window_correlograms(samples: np.ndarray, sample_interval: float):
    """Per-realization lag-unbiased correlogram spectra, same layout as :func:`window_periodograms`."""
    samples = np.asarray(samples, dtype=complex)
    N = samples.shape[-2]
    X = np.fft.fft(samples, n=2 * N, axis=-2)
    r = np.fft.ifft(X.real**2 + X.imag**2, axis=-2)  # r[tau] = sum_n a_{n+tau} a_n^*
    counts = np.concatenate([N - np.arange(N), [1], np.arange(1, N)])[:, None]
    C = r / counts
    folded = C[..., :N, :].copy()
    folded[..., 1:, :] += C[..., N + 1:, :]  # lag tau - N lands on the same grid phase as tau
    P = (sample_interval / (2 * np.pi)) * np.fft.fft(folded, axis=-2).real
    freqs = 2 * np.pi * np.fft.fftfreq(N, d=sample_interval)
    return np.fft.fftshift(freqs), np.fft.fftshift(P, axes=-2)


ESTIMATORS = {"periodogram": window_periodograms, "correlogram": window_correlograms}


def spectral_estimator(method: str):
    try:
        return ESTIMATORS[method]
    except KeyError:
        raise ValueError(f"unknown spectral estimator {method!r}") from None


def check_window(window_length: float, gamma: Optional[float]):
    if gamma is None:
        return
    if not gamma > 0:
        raise WindowTooShort("no friction: stationarity cannot be established")
    if window_length < 2.0 / gamma:
        raise WindowTooShort(
            f"window T={window_length:g} shorter than 2/gamma={2.0 / gamma:g}; stationarity not established"
        )


def estimate_spectrum(
    trajectories: Sequence, transient: float, gamma: Optional[float] = None, method: str = "periodogram"
) -> SpectrumEstimate:
    """Average periodogram over realizations of the samples with t >= transient.

    If ``gamma`` is given the window must be at least 2/gamma long.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories given")
    times = trajectories[0].times
    for tr in trajectories[1:]:
        if tr.times.shape != times.shape or not np.array_equal(tr.times, times):
            raise DimensionError("trajectories do not share a time grid")
    keep = times >= transient - 1e-9
    if keep.sum() < 2:
        raise WindowTooShort("fewer than two samples after the transient")
    h = times[1] - times[0]
    samples = np.stack([tr.states[keep] for tr in trajectories])  # (M, N, L)
    T = samples.shape[1] * h
    check_window(T, gamma)
    freqs, P = spectral_estimator(method)(samples, h)
    M = len(trajectories)
    mean = P.mean(axis=0)
    se = P.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros_like(mean)
    actions = (samples.real**2 + samples.imag**2).mean(axis=(0, 1))
    return SpectrumEstimate(freqs, mean.T, se.T, T, M, actions, method)


def lorentzian_reference(nu, omega: float, gamma: float, D: float):
    """Exact spectral density of the linear oscillator: (D/2pi) / ((nu+omega)^2 + (gamma/2)^2)."""
    if not gamma > 0:
        raise DomainError("Lorentzian reference needs gamma > 0")
    nu = np.asarray(nu, dtype=float)
    return (D / (2 * np.pi)) / ((nu + omega) ** 2 + (0.5 * gamma) ** 2)


def spectral_centroid(spectrum: SpectrumEstimate, site: int) -> float:
    if not 0 <= site < spectrum.L:
        raise IndexError(f"site {site} out of range for L={spectrum.L}")
    P = spectrum.densities[site]
    return float(np.sum(spectrum.frequencies * P) / np.sum(P))


def peak_frequencies(spectrum: SpectrumEstimate, site: int, rel_height: float = 0.2) -> np.ndarray:
    """Frequencies of local maxima of P_site higher than ``rel_height`` times the global maximum."""
    P = spectrum.densities[site]
    inner = (P[1:-1] > P[:-2]) & (P[1:-1] >= P[2:]) & (P[1:-1] >= rel_height * P.max())
    return spectrum.frequencies[1:-1][inner]
