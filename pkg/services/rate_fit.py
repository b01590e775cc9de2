"""
Log-linear exponential rate fits shared by the semigroup and particle services
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import stats

from utils.errors import DomainError, InsufficientDataError

MIN_POINTS = 4


@dataclass(frozen=True)
class RateFit:
    rate: float
    log_prefactor: float
    r_squared: float
    window: Tuple[float, float]
    rate_stderr: float = 0.0
    points: int = 0

    def as_dict(self) -> dict:
        return {
            "rate": self.rate,
            "log_prefactor": self.log_prefactor,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "rate_stderr": self.rate_stderr,
            "points": self.points,
        }


def fit_exponential(times, values, window: Tuple[float, float]) -> RateFit:
    """Least-squares line through (t, log value) for t in the closed window"""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = float(window[0]), float(window[1])
    if hi < lo:
        raise DomainError(f"window must be increasing, got {window}")

    inside = (times >= lo) & (times <= hi)
    if int(inside.sum()) < MIN_POINTS:
        raise InsufficientDataError(
            f"{int(inside.sum())} point(s) in window [{lo:g}, {hi:g}], need at least {MIN_POINTS}"
        )
    t, v = times[inside], values[inside]
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DomainError("values must be positive and finite on the fit window")

    fit = stats.linregress(t, np.log(v))
    r2 = float(np.clip(fit.rvalue ** 2, 0.0, 1.0)) if np.isfinite(fit.rvalue) else 0.0
    return RateFit(
        rate=-float(fit.slope),
        log_prefactor=float(fit.intercept),
        r_squared=r2,
        window=(lo, hi),
        rate_stderr=float(fit.stderr),
        points=int(t.size),
    )
