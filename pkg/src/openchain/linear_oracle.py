"""Exact references for the non-interacting chain (g = 0).

For g = 0 the correlation matrix rho_{l,m} = <a_l^* a_m> obeys the closed
linear equation

    d rho/dt = K rho + rho K^H + S,   K = -i (J/2) T - Gamma/2,

with T the open-chain adjacency matrix, Gamma = diag(gamma_1, 0, ..., gamma_L)
and S = diag(D_1, 0, ..., D_L). The stationary state is the solution of the
continuous Lyapunov equation K rho + rho K^H = -S.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .errors import DomainError
from .model import ChainParams, SingleSiteParams, SpdmMatrix


def _require_linear(params):
    if params.g != 0:
        raise DomainError(f"linear oracle requires g = 0, got g = {params.g}")


def _matrices(params: ChainParams):
    L = params.L
    T = np.eye(L, k=1) + np.eye(L, k=-1)
    gamma = np.zeros(L)
    gamma[0] += params.gamma1
    gamma[-1] += params.gammaL
    source = np.zeros(L)
    source[0] += params.D1
    source[-1] += params.DL
    K = -0.5j * params.J * T - 0.5 * np.diag(gamma)
    return K, np.diag(source).astype(complex)


def rate(rho: np.ndarray, params: ChainParams) -> np.ndarray:
    """Right-hand side of the correlation-matrix equation."""
    K, S = _matrices(params)
    return K @ rho + rho @ K.conj().T + S


def generator_matrix(params: ChainParams):
    """Real-linear map on (Re rho, Im rho) as a dense 2L^2 x 2L^2 matrix plus source vector.

    Row-major vectorization: entry (l, m) sits at index l*L + m, first the
    real parts then the imaginary parts.
    """
    K, S = _matrices(params)
    L = params.L
    eye = np.eye(L)
    # vec(K rho + rho K^H) = (K kron I + I kron conj(K)) vec(rho) in row-major order
    A = np.kron(K, eye) + np.kron(eye, K.conj())
    real = np.block([[A.real, -A.imag], [A.imag, A.real]])
    src = np.concatenate([S.real.ravel(), S.imag.ravel()])
    return real, src


def stationary_spdm(params: ChainParams) -> SpdmMatrix:
    """Exact stationary correlation matrix of the linear chain."""
    _require_linear(params)
    if params.gamma1 == 0 and params.gammaL == 0:
        raise DomainError("no friction: the linear system has no unique stationary state")
    K, S = _matrices(params)
    rho = scipy.linalg.solve_continuous_lyapunov(K, -S)
    rho = 0.5 * (rho + rho.conj().T)
    return SpdmMatrix(rho)


def stationary_spdm_direct(params: ChainParams) -> SpdmMatrix:
    """Same stationary state from an LU solve of the assembled real system.

    Cost grows as L^6; intended for cross-checks on short chains.
    """
    _require_linear(params)
    A, src = generator_matrix(params)
    try:
        x = scipy.linalg.solve(A, -src)
    except scipy.linalg.LinAlgError as exc:
        raise DomainError("singular stationary system") from exc
    n = params.L**2
    rho = (x[:n] + 1j * x[n:]).reshape(params.L, params.L)
    return SpdmMatrix(0.5 * (rho + rho.conj().T))


def relaxation_rate(params: ChainParams) -> float:
    """Slowest decay rate of rho towards its stationary value (linear part of the dynamics)."""
    K, _ = _matrices(params)
    return float(-2 * np.linalg.eigvals(K).real.max())


def spdm_evolution(params: ChainParams, rho0=None, t: float = 0.0, dt: float = None) -> SpdmMatrix:
    """Integrate the correlation-matrix equation from ``rho0`` to time ``t`` with fixed-step RK4."""
    _require_linear(params)
    L = params.L
    if rho0 is None:
        rho = np.zeros((L, L), dtype=complex)
    else:
        rho = np.array(rho0.entries if isinstance(rho0, SpdmMatrix) else rho0, dtype=complex)
    if t <= 0:
        return SpdmMatrix(rho)
    K, S = _matrices(params)
    Kh = K.conj().T
    if dt is None:
        dt = 0.01 / max(params.J, params.gamma1, params.gammaL, 1e-12)
    n = max(1, math.ceil(t / dt))
    h = t / n

    def f(r):
        return K @ r + r @ Kh + S

    for _ in range(n):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return SpdmMatrix(0.5 * (rho + rho.conj().T))


def _symmetric_gamma(params: ChainParams) -> float:
    if params.gamma1 != params.gammaL:
        raise DomainError("closed forms hold only for gamma1 == gammaL")
    if not params.gamma1 > 0:
        raise DomainError("closed forms need gamma > 0")
    return params.gamma1


def stationary_current_formula(params: ChainParams) -> float:
    """Per-bond current J^2 gamma / (J^2 + gamma^2) * (D1 - DL) / (2 gamma)."""
    gamma = _symmetric_gamma(params)
    J = params.J
    return J**2 * gamma / (J**2 + gamma**2) * (params.D1 - params.DL) / (2 * gamma)


def stationary_action_formula(params: ChainParams) -> float:
    """Bulk stationary action (D1 + DL) / (2 gamma)."""
    gamma = _symmetric_gamma(params)
    return (params.D1 + params.DL) / (2 * gamma)


def single_site_action_reference(I0: float, D: float, gamma: float, t):
    """Mean action of the linear single oscillator: D/gamma + (I0 - D/gamma) e^{-gamma t}."""
    if D < 0 or gamma < 0:
        raise DomainError("D and gamma must be >= 0")
    t = np.asarray(t, dtype=float)
    if gamma == 0:
        out = I0 + D * t
    else:
        steady = D / gamma
        out = steady + (I0 - steady) * np.exp(-gamma * t)
    return float(out) if out.ndim == 0 else out


def stationary_covariance(params) -> np.ndarray:
    """Stationary <a_l^* a_m> of the linear (g = 0) version of ``params``.

    Used to draw warm-start initial states; the nonlinearity is ignored.
    """
    if isinstance(params, SingleSiteParams):
        if not params.gamma > 0:
            raise DomainError("no stationary state without friction")
        return np.array([[params.D / params.gamma]], dtype=complex)
    linear = ChainParams(
        L=params.L, J=params.J, omega=params.omega, g=0.0, gamma1=params.gamma1,
        gammaL=params.gammaL, D1=params.D1, DL=params.DL, nbar=params.nbar,
    )
    return stationary_spdm(linear).entries
