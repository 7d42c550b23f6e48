"""Monte-Carlo ensembles of Langevin trajectories.

Trajectories are integrated in fixed-size batches of consecutive indices.
Each batch returns plain sums; the sums are folded in batch order, so the
result depends on ``batch_size`` but never on the number of workers.

Stationary quantities are time averages over [transient, t_final]. Their
standard errors come from the spread of the per-trajectory window averages,
which are independent across trajectories and therefore need no
autocorrelation correction.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ConfigError
from .langevin import IntegratorConfig, NoiseStream, Trajectory, covariance_factor, integrate_batch
from .linear_oracle import stationary_covariance
from .model import SingleSiteParams, SpdmMatrix, site_coefficients
from .spectral import ESTIMATORS, SpectrumEstimate, check_window, spectral_estimator

DEFAULT_BATCH = 250
DEFAULT_REALIZATIONS = 4000


def default_threads() -> int:
    env = os.environ.get("OPENCHAIN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class _Task:
    params: object
    config: IntegratorConfig
    master_seed: int
    start: int
    stop: int
    initial: np.ndarray
    warm_factor: Optional[np.ndarray]
    spectrum: Optional[str]
    keep_trajectories: bool


@dataclass
class _Sums:
    """Additive per-batch statistics."""

    count: int
    rho: np.ndarray  # (S, L, L) sum of a_l^* a_m
    abs2: np.ndarray  # (S, L, L) sum of I_l I_m
    sq: np.ndarray  # (S, L, L) sum of (a_l^*)^2 a_m^2
    cur: np.ndarray  # (S,)
    cur2: np.ndarray  # (S,)
    win_rho: np.ndarray  # (L, L) sum of per-trajectory window averages
    win_re2: np.ndarray
    win_im2: np.ndarray
    win_cur: float
    win_cur2: float
    slope: np.ndarray  # (L,) sum of per-trajectory slopes of I_l(t) over the window
    slope2: np.ndarray
    psd: Optional[np.ndarray] = None  # (K, L)
    psd2: Optional[np.ndarray] = None
    freqs: Optional[np.ndarray] = None
    trajectories: List[Trajectory] = field(default_factory=list)

    def add(self, other: "_Sums"):
        for name in ("rho", "abs2", "sq", "cur", "cur2", "win_rho", "win_re2", "win_im2", "slope", "slope2"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.win_cur += other.win_cur
        self.win_cur2 += other.win_cur2
        if self.psd is not None:
            self.psd = self.psd + other.psd
            self.psd2 = self.psd2 + other.psd2
        self.count += other.count
        self.trajectories.extend(other.trajectories)


def _bond_current(rho, J, L):
    """Per-bond average of J Im rho_{l,l+1}; ``rho`` has shape (..., L, L)."""
    if L < 2:
        return np.zeros(rho.shape[:-2])
    return J * np.diagonal(rho, offset=1, axis1=-2, axis2=-1).imag.sum(axis=-1) / (L - 1)


def _run_batch(task: _Task) -> _Sums:
    c = site_coefficients(task.params)
    cfg = task.config
    L = c.L
    B = task.stop - task.start
    S = cfg.n_samples
    w0 = cfg.first_window_sample
    rho = np.empty((S, L, L), dtype=complex)
    abs2 = np.empty((S, L, L))
    sq = np.empty((S, L, L), dtype=complex)
    cur = np.empty(S)
    cur2 = np.empty(S)
    window = np.empty((B, S - w0, L), dtype=complex)
    full = np.empty((B, S, L), dtype=complex) if task.keep_trajectories else None

    def record(k, a):
        ac = a.conj()
        I = a.real**2 + a.imag**2
        rho[k] = ac.T @ a
        abs2[k] = I.T @ I
        sq[k] = (ac * ac).T @ (a * a)
        if L > 1:
            cb = c.J * (ac[:, :-1] * a[:, 1:]).imag.sum(axis=1) / (L - 1)
            cur[k] = cb.sum()
            cur2[k] = (cb * cb).sum()
        else:
            cur[k] = cur2[k] = 0.0
        if k >= w0:
            window[:, k - w0] = a
        if full is not None:
            full[:, k] = a

    streams = [NoiseStream(task.master_seed, i) for i in range(task.start, task.stop)]
    if task.warm_factor is not None:
        initial = np.stack([s.gaussian_state(task.warm_factor) for s in streams])
    else:
        initial = np.broadcast_to(task.initial, (B, L))
    integrate_batch(initial, c, cfg, streams, record)

    N = S - w0
    per_traj = np.matmul(window.conj().transpose(0, 2, 1), window) / N  # (B, L, L)
    per_cur = _bond_current(per_traj, c.J, L)
    t = cfg.times[w0:]
    tc = t - t.mean()
    intensity = window.real**2 + window.imag**2
    slopes = np.einsum("n,bnl->bl", tc, intensity) / np.dot(tc, tc) if N > 1 else np.zeros((B, L))
    sums = _Sums(
        count=B, rho=rho, abs2=abs2, sq=sq, cur=cur, cur2=cur2,
        win_rho=per_traj.sum(axis=0),
        win_re2=(per_traj.real**2).sum(axis=0),
        win_im2=(per_traj.imag**2).sum(axis=0),
        win_cur=float(per_cur.sum()), win_cur2=float((per_cur**2).sum()),
        slope=slopes.sum(axis=0), slope2=(slopes**2).sum(axis=0),
    )
    if task.spectrum:
        freqs, P = spectral_estimator(task.spectrum)(window, cfg.sample_interval)
        sums.freqs = freqs
        sums.psd = P.sum(axis=0)
        sums.psd2 = (P**2).sum(axis=0)
    if full is not None:
        sums.trajectories = [Trajectory(cfg.times.copy(), full[b]) for b in range(B)]
    return sums


def _se(total, total2, n):
    mean = total / n
    var = np.maximum(total2 - n * mean**2, 0.0) / (n - 1)
    return mean, np.sqrt(var / n)


def _hermitian(x):
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


@dataclass
class EnsembleStats:
    times: np.ndarray
    actions: np.ndarray  # (S, L)
    actions_se: np.ndarray
    spdm: np.ndarray  # (S, L, L)
    spdm_se: np.ndarray  # (S, L, L) standard error of the complex entry, sqrt(se_re^2 + se_im^2)
    current: Optional[np.ndarray]  # (S,), per-bond average; None for a single site
    current_se: Optional[np.ndarray]
    M: int
    stationary_actions: np.ndarray  # (L,)
    stationary_actions_se: np.ndarray
    stationary_spdm: SpdmMatrix
    stationary_spdm_se_real: np.ndarray
    stationary_spdm_se_imag: np.ndarray
    stationary_current: Optional[float]
    stationary_current_se: Optional[float]
    stationary_slopes: np.ndarray  # (L,) d I_l/dt over the window, ensemble mean
    stationary_slopes_se: np.ndarray
    params: object = None
    config: Optional[IntegratorConfig] = None
    spectrum: Optional[SpectrumEstimate] = None
    trajectories: Optional[List[Trajectory]] = None

    @property
    def L(self) -> int:
        return self.actions.shape[1]

    def spdm_at(self, k: int) -> SpdmMatrix:
        return SpdmMatrix(self.spdm[k], self.spdm_se[k])


def _finalize(total: _Sums, params, config: IntegratorConfig, M: int, method=None) -> EnsembleStats:
    L = total.rho.shape[-1]
    rho = _hermitian(total.rho / M)
    abs2 = total.abs2 / M
    sq = total.sq / M
    # entrywise second moments of Re and Im of a_l^* a_m
    var_re = np.maximum((abs2 + sq.real) / 2 - rho.real**2, 0.0) * M / (M - 1)
    var_im = np.maximum((abs2 - sq.real) / 2 - rho.imag**2, 0.0) * M / (M - 1)
    spdm_se = np.sqrt((var_re + var_im) / M)
    actions = np.diagonal(rho, axis1=1, axis2=2).real.copy()
    actions_se = np.sqrt(np.diagonal(var_re, axis1=1, axis2=2) / M)

    win = _hermitian(total.win_rho / M)
    se_re = np.sqrt(np.maximum(total.win_re2 - M * win.real**2, 0.0) / (M - 1) / M)
    se_im = np.sqrt(np.maximum(total.win_im2 - M * win.imag**2, 0.0) / (M - 1) / M)
    slopes, slopes_se = _se(total.slope, total.slope2, M)

    if L > 1:
        current, current_se = _se(total.cur, total.cur2, M)
        jt, jt_se = _se(total.win_cur, total.win_cur2, M)
        jt, jt_se = float(jt), float(jt_se)
    else:
        current = current_se = jt = jt_se = None

    spectrum = None
    if total.psd is not None:
        psd, psd_se = _se(total.psd, total.psd2, M)
        T = len(total.freqs) * config.sample_interval
        spectrum = SpectrumEstimate(total.freqs, psd.T, psd_se.T, T, M, np.diag(win).real.copy(), method)

    return EnsembleStats(
        times=config.times, actions=actions, actions_se=actions_se,
        spdm=rho, spdm_se=spdm_se, current=current, current_se=current_se, M=M,
        stationary_actions=np.diag(win).real.copy(),
        stationary_actions_se=np.diag(se_re).copy(),
        stationary_spdm=SpdmMatrix(win, np.sqrt(se_re**2 + se_im**2)),
        stationary_spdm_se_real=se_re, stationary_spdm_se_imag=se_im,
        stationary_current=jt, stationary_current_se=jt_se,
        stationary_slopes=slopes, stationary_slopes_se=slopes_se,
        params=params, config=config, spectrum=spectrum,
        trajectories=total.trajectories or None,
    )


def warm_covariance(params) -> np.ndarray:
    """Initial covariance <a_l^* a_m> close to the stationary state.

    Exact stationary covariance for g = 0. For g != 0 a diagonal profile
    interpolating linearly between the reservoir actions D1/gamma1 and
    DL/gammaL, which is what the edge balances give for a small current.
    """
    if isinstance(params, SingleSiteParams) or params.g == 0:
        return stationary_covariance(params)
    if not (params.gamma1 > 0 and params.gammaL > 0):
        raise ConfigError("warm start needs positive friction at both ends", "gamma1")
    profile = np.linspace(params.D1 / params.gamma1, params.DL / params.gammaL, params.L)
    return np.diag(profile).astype(complex)


def run_ensemble(
    params,
    config: IntegratorConfig,
    M: int = DEFAULT_REALIZATIONS,
    master_seed: int = 0,
    *,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH,
    initial=None,
    spectrum=False,
    keep_trajectories: bool = False,
    initial_covariance=None,
) -> EnsembleStats:
    """Integrate trajectories 0..M-1 and reduce them to ensemble statistics.

    ``params`` is a :class:`ChainParams` or :class:`SingleSiteParams`.
    ``initial`` is None (all oscillators at rest), a fixed state of length L,
    or ``"warm"``: each trajectory then starts from its own Gaussian draw with
    covariance :func:`warm_covariance`. ``initial_covariance`` replaces that
    covariance by an explicit (L, L) matrix <a_l^* a_m>. With
    ``spectrum=True`` (or ``"periodogram"``, ``"correlogram"``) the per-site
    spectra of the stationary window are averaged as well (the window must be
    at least 2/gamma long).
    """
    if int(M) != M or M < 2:
        raise ConfigError(f"number of realizations must be >= 2, got {M}", "realizations")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1", "batch_size")
    c = site_coefficients(params)
    warm = None
    if initial_covariance is not None:
        if initial is not None:
            raise ConfigError("give either initial or initial_covariance", "initial")
        cov = np.asarray(initial_covariance, dtype=complex)
        if cov.shape != (c.L, c.L):
            raise ConfigError(f"initial_covariance must have shape ({c.L}, {c.L})", "initial")
        warm = covariance_factor(cov)
    elif isinstance(initial, str):
        if initial != "warm":
            raise ConfigError(f"unknown initial condition {initial!r}", "initial")
        warm = covariance_factor(warm_covariance(params))
        initial = None
    if initial is None:
        initial = np.zeros(c.L, dtype=complex)
    initial = np.asarray(initial, dtype=complex)
    if initial.shape != (c.L,):
        raise ConfigError(f"initial state must have shape ({c.L},)", "initial")
    if config.n_samples - config.first_window_sample < 2:
        raise ConfigError("stationary window holds fewer than two samples", "transient")
    method = None
    if spectrum:
        method = "periodogram" if spectrum is True else str(spectrum)
        if method not in ESTIMATORS:
            raise ConfigError(f"unknown spectral estimator {method!r}", "estimator")
        window = (config.n_samples - config.first_window_sample) * config.sample_interval
        check_window(window, params.gamma_min)

    tasks = [
        _Task(params, config, master_seed, s, min(s + batch_size, M), initial, warm, method, keep_trajectories)
        for s in range(0, M, batch_size)
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(_run_batch, tasks)
            total = _fold(parts)
    else:
        total = _fold(map(_run_batch, tasks))
    return _finalize(total, params, config, M, method)


def _fold(parts) -> _Sums:
    total = None
    for part in parts:
        if total is None:
            total = part
        else:
            total.add(part)
    return total


def spdm_estimate(trajectories, t_index: int) -> SpdmMatrix:
    """rho_{l,m} = mean over realizations of a_l^* a_m at sample ``t_index``."""
    trajectories = list(trajectories)
    times = trajectories[0].times
    for tr in trajectories[1:]:
        if not np.array_equal(tr.times, times):
            raise ConfigError("trajectories do not share a time grid", "trajectories")
    A = np.stack([tr.states[t_index] for tr in trajectories])
    M = A.shape[0]
    Z = A.conj()[:, :, None] * A[:, None, :]
    mean = _hermitian(Z.mean(axis=0))
    if M > 1:
        se = np.sqrt((Z.real.var(axis=0, ddof=1) + Z.imag.var(axis=0, ddof=1)) / M)
    else:
        se = np.zeros(mean.shape)
    return SpdmMatrix(mean, se)


def fit_inverse_length(lengths, currents, errors, intercept: bool = True) -> dict:
    """Weighted least-squares fit of currents against 1/L.

    Returns slope, intercept (0 when ``intercept`` is False), their standard
    errors from the inverse normal matrix, and the weighted R^2.
    """
    x = 1.0 / np.asarray(lengths, dtype=float)
    y = np.asarray(currents, dtype=float)
    se = np.asarray(errors, dtype=float)
    if np.any(se <= 0):
        raise ConfigError("fit needs positive standard errors", "errors")
    w = 1.0 / se**2
    X = np.column_stack([x, np.ones_like(x)]) if intercept else x[:, None]
    if len(y) <= X.shape[1]:
        raise ConfigError("not enough chain lengths for the fit", "lengths")
    normal = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(normal)
    beta = cov @ (X.T @ (w * y))
    resid = y - X @ beta
    ybar = np.sum(w * y) / np.sum(w)
    r2 = 1.0 - np.sum(w * resid**2) / np.sum(w * (y - ybar) ** 2)
    return {
        "slope": float(beta[0]),
        "slope_se": float(np.sqrt(cov[0, 0])),
        "intercept": float(beta[1]) if intercept else 0.0,
        "intercept_se": float(np.sqrt(cov[1, 1])) if intercept else 0.0,
        "r2": float(r2),
        "chi2": float(np.sum(w * resid**2)),
    }


def current_from_spdm(spdm, J: float) -> float:
    """Bond-averaged current J * sum_l Im rho_{l,l+1} / (L - 1)."""
    rho = spdm.entries if isinstance(spdm, SpdmMatrix) else np.asarray(spdm)
    L = rho.shape[0]
    if L < 2:
        raise ConfigError("current needs at least two sites", "length")
    return float(_bond_current(rho, J, L))
