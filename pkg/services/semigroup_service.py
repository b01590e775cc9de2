"""
Semigroup service - evolution of Q_t = exp(t (L + A)) on the Galerkin space and its certificates
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from messages import MSG_STIFF
from services.rate_fit import RateFit, fit_exponential
from utils.errors import DomainError, StiffnessError

logger = logging.getLogger(__name__)

RK_RTOL = 1e-10
RK_ATOL = 1e-12
MAX_EXPM_TIMES = 8
# Simpson intervals per Duhamel substep
SIMPSON_PANELS = 8
METHODS = ("auto", "expm", "expm-step", "rk45")


@dataclass(frozen=True)
class SemigroupTrajectory:
    times: np.ndarray
    coeffs: np.ndarray
    l2_norms: np.ndarray
    method: str

    def as_columns(self) -> dict:
        columns = {"t": self.times, "l2_norm": self.l2_norms}
        for i in range(min(self.coeffs.shape[1], 4)):
            columns[f"c{i}"] = self.coeffs[:, i]
        return columns


def _validate_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("times must be a nonempty vector")
    if times[0] != 0.0:
        raise DomainError(f"times must start at 0, got {times[0]}")
    if np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly increasing")
    return times


def _uniform(times: np.ndarray) -> bool:
    if times.size < 3:
        return True
    steps = np.diff(times)
    return bool(np.allclose(steps, steps[0], rtol=1e-12, atol=0.0))


def _centered_norms(coeffs: np.ndarray, mean0: float) -> np.ndarray:
    # orthonormal basis: the L2(mu) norm is the Euclidean norm of the coefficients
    shifted = coeffs.copy()
    shifted[:, 0] -= mean0
    return np.linalg.norm(shifted, axis=1)


def evolve(L, A, f_coeffs, times: Sequence[float], method: str = "auto") -> SemigroupTrajectory:
    """
    Coefficients of Q_t f at the requested times.

    method "auto" uses the matrix exponential for at most 8 times, exponential stepping on a
    uniform grid and adaptive RK45 otherwise.
    """
    if method not in METHODS:
        raise DomainError(f"unknown method '{method}', expected one of {METHODS}")
    times = _validate_times(times)
    M = np.asarray(L, dtype=float) + np.asarray(A, dtype=float)
    f = np.asarray(f_coeffs, dtype=float)
    if f.shape != (M.shape[0],):
        raise DomainError(f"f_coeffs must have length {M.shape[0]}, got {f.shape}")

    if method == "auto":
        if times.size <= MAX_EXPM_TIMES:
            method = "expm"
        elif _uniform(times):
            method = "expm-step"
        else:
            method = "rk45"

    if method == "expm":
        coeffs = np.array([scipy.linalg.expm(t * M) @ f for t in times])
    elif method == "expm-step":
        if not _uniform(times):
            raise DomainError("expm-step needs a uniform time grid")
        coeffs = np.empty((times.size, f.size))
        coeffs[0] = f
        if times.size > 1:
            step = scipy.linalg.expm((times[1] - times[0]) * M)
            for k in range(1, times.size):
                coeffs[k] = step @ coeffs[k - 1]
    else:
        coeffs = _rk45(M, f, times)

    coeffs.setflags(write=False)
    return SemigroupTrajectory(
        times=times, coeffs=coeffs, l2_norms=_centered_norms(coeffs, f[0]), method=method
    )


def _rk45(M: np.ndarray, f: np.ndarray, times: np.ndarray) -> np.ndarray:
    if times.size == 1:
        return f[None, :].copy()
    sol = solve_ivp(
        lambda _t, c: M @ c,
        (0.0, float(times[-1])),
        f,
        method="RK45",
        t_eval=times,
        rtol=RK_RTOL,
        atol=RK_ATOL,
    )
    if sol.status < 0:
        failed_at = float(sol.t[-1]) if sol.t.size else 0.0
        raise StiffnessError(MSG_STIFF.format(time=failed_at, detail=sol.message).strip())
    return sol.y.T.copy()


def _simpson_weights(n: int, h: float) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def duhamel_residual(L, A, f_coeffs, t: float, substeps: int, panels: int = SIMPSON_PANELS) -> float:
    """
    L2(mu) norm of Q_t f - P_t f - int_0^t P_s A Q_{t-s} f ds, the integral by composite Simpson
    with each of the substeps intervals split into panels Simpson intervals.
    """
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}")
    if substeps < 8 or substeps % 2:
        raise DomainError(f"substeps must be even and >= 8, got {substeps}")
    if panels < 1:
        raise DomainError(f"panels must be >= 1, got {panels}")

    L = np.asarray(L, dtype=float)
    A = np.asarray(A, dtype=float)
    f = np.asarray(f_coeffs, dtype=float)
    M = L + A
    n = substeps * panels
    h = t / n

    q_t = scipy.linalg.expm(t * M) @ f
    p_t = scipy.linalg.expm(t * L) @ f

    # q[j] = Q_{j h} f
    step_q = scipy.linalg.expm(h * M)
    q = np.empty((n + 1, f.size))
    q[0] = f
    for j in range(1, n + 1):
        q[j] = step_q @ q[j - 1]

    # sum_k w_k P_{kh} A q[n-k] by Horner in P_h
    step_p = scipy.linalg.expm(h * L)
    weights = _simpson_weights(n, h)
    acc = weights[n] * (A @ q[0])
    for k in range(n - 1, -1, -1):
        acc = weights[k] * (A @ q[n - k]) + step_p @ acc

    return float(np.linalg.norm(q_t - p_t - acc))


def invariance_check(trajectory: SemigroupTrajectory, mu_f: float) -> float:
    """max_t |mu(Q_t f) - mu(f)|; the 0-th coefficient is mu(Q_t f) because p_0 = 1"""
    if trajectory.times.size == 0:
        raise DomainError("empty trajectory")
    return float(np.max(np.abs(trajectory.coeffs[:, 0] - mu_f)))


def decay_rate(trajectory: SemigroupTrajectory, window: Tuple[float, float]) -> RateFit:
    lo, hi = window
    if lo < trajectory.times[0] or hi > trajectory.times[-1]:
        raise DomainError(
            f"window [{lo:g}, {hi:g}] outside trajectory span [{trajectory.times[0]:g}, {trajectory.times[-1]:g}]"
        )
    return fit_exponential(trajectory.times, trajectory.l2_norms, window)
