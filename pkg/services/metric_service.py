"""
Metric service - the modulus class for weighted distances and the (phi, V) catalog
"""
import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np
from scipy import integrate

from services.model_service import ModelName, ModelSpec
from utils.errors import CatalogError, MetricClassError

logger = logging.getLogger(__name__)

GRID_POINTS = 1000
GRID_RANGE = (1e-6, 1e2)
CHECK_TOL = 1e-12
# int_0^1 phi(s)/s ds = int_0^inf phi(e^-t) dt, integrated up to t = DINI_HORIZON
DINI_HORIZON = 700.0
DINI_TAIL = 1e-2

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MetricSpec:
    phi: Fn
    V: Fn
    phi_integral: float
    name: str = "custom"

    def as_dict(self) -> dict:
        return {"name": self.name, "phi_integral": self.phi_integral}


def check_grid() -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(GRID_RANGE[0], GRID_RANGE[1], GRID_POINTS)])


def _eval(fn: Fn, x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape)


def _tol(values: np.ndarray) -> np.ndarray:
    return CHECK_TOL * np.maximum(1.0, np.abs(values))


def _check_concavity(phi: Fn, r: np.ndarray) -> None:
    """midpoint concavity of g(u) = phi(sqrt(u))^2 on pairs (0, u_i) and (u_i, u_{i+1})"""
    u = r * r

    def g(points):
        return _eval(phi, np.sqrt(points)) ** 2

    gu = g(u)
    pairs = (
        (np.zeros_like(u[1:]), u[1:], gu[0], gu[1:]),
        (u[:-1], u[1:], gu[:-1], gu[1:]),
    )
    for left, right, g_left, g_right in pairs:
        chord = 0.5 * (g_left + g_right)
        mid = g(0.5 * (left + right))
        bad = np.nonzero(mid < chord - _tol(chord))[0]
        if bad.size:
            i = int(bad[0])
            raise MetricClassError(
                "concavity of phi^2(sqrt(.))",
                float(np.sqrt(right[i])),
                f"midpoint value {mid[i]:.6g} < chord {chord[i]:.6g}",
            )


def _dini_integral(phi: Fn) -> Tuple[float, float]:
    """Integral and its second half; the tail of a divergent integral does not shrink"""
    def integrand(t: float) -> float:
        return float(np.asarray(phi(math.exp(-t)), dtype=float))

    half = DINI_HORIZON / 2.0
    head, _ = integrate.quad(integrand, 0.0, half, limit=200)
    tail, _ = integrate.quad(integrand, half, DINI_HORIZON, limit=200)
    return head + tail, tail


def validate_metric(phi: Fn, V: Fn, name: str = "custom") -> MetricSpec:
    """
    Grid checks of the modulus class: phi(0) = 0, monotonicity, concavity of phi^2(sqrt(.)),
    V >= 1, the Dini integral and phi(r) >= phi(1) (r ^ 1).
    """
    r = check_grid()
    values = _eval(phi, r)
    if not np.all(np.isfinite(values)):
        bad = int(np.nonzero(~np.isfinite(values))[0][0])
        raise MetricClassError("finiteness of phi", float(r[bad]))

    if abs(values[0]) > CHECK_TOL:
        raise MetricClassError("phi(0) = 0", 0.0, f"phi(0) = {values[0]:.6g}")

    drops = np.nonzero(np.diff(values) < -_tol(values[:-1]))[0]
    if drops.size:
        raise MetricClassError("monotonicity of phi", float(r[drops[0] + 1]))

    _check_concavity(phi, r)

    x = np.concatenate([-r[:0:-1], r])
    weights = _eval(V, x)
    low = np.nonzero(~(weights >= 1.0 - CHECK_TOL))[0]
    if low.size:
        raise MetricClassError("V >= 1", float(x[low[0]]), f"V = {weights[low[0]]:.6g}")

    integral, tail = _dini_integral(phi)
    if not np.isfinite(integral) or tail > DINI_TAIL * max(1.0, integral):
        raise MetricClassError(
            "Dini integral of phi(s)/s on (0, 1)", 0.0, f"partial value {integral:.6g}, tail {tail:.3g}"
        )

    floor = values[r == 1.0][0] if np.any(r == 1.0) else float(np.asarray(phi(1.0)))
    bound = floor * np.minimum(r, 1.0)
    under = np.nonzero(values < bound - _tol(bound))[0]
    if under.size:
        raise MetricClassError("lower bound phi(r) >= phi(1) (r ^ 1)", float(r[under[0]]))

    return MetricSpec(phi=phi, V=V, phi_integral=float(integral), name=name)


def phi_identity(r):
    return np.asarray(r, dtype=float) * 1.0


def phi_capped(r):
    return np.minimum(r, 1.0)


def v_one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def v_poly(p: float) -> Fn:
    def weight(x):
        return (1.0 + np.asarray(x, dtype=float) ** 2) ** (p / 2.0)

    return weight


def v_subgauss(x):
    return np.exp(np.cbrt(1.0 + np.asarray(x, dtype=float) ** 2))


METRIC_NAMES = ("w1", "poly", "subgauss")


def metric_pair(name: str, p: float = 1.0) -> Tuple[Fn, Fn]:
    """(phi, V) for a catalog entry"""
    key = name.strip().lower()
    if key == "w1":
        return phi_identity, v_one
    if key == "poly":
        return phi_capped, v_poly(p)
    if key == "subgauss":
        return phi_capped, v_subgauss
    raise CatalogError(f"Unknown metric '{name}'. Known: {', '.join(METRIC_NAMES)}")


@functools.lru_cache(maxsize=None)
def catalog_metric(name: str, p: float = 1.0) -> MetricSpec:
    phi, V = metric_pair(name, p)
    return validate_metric(phi, V, name=name if name != "poly" else f"poly(p={p:g})")


def default_metric(model: ModelSpec) -> MetricSpec:
    """Weighted distance reported next to W1 in particle runs"""
    if model.name is ModelName.SUB_GAUSSIAN:
        return catalog_metric("subgauss")
    return catalog_metric("poly", 1.0)


def catalog_summary() -> Dict[str, float]:
    return {name: catalog_metric(name).phi_integral for name in METRIC_NAMES}
