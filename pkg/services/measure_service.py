"""
Measure service - probability measures on a truncated line via composite Gauss-Legendre grids
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from config import MAX_TRUNCATION_DOUBLINGS, NODES_PER_PANEL
from messages import MSG_TRUNCATION_TOO_SMALL
from services.model_service import ModelName, ModelSpec
from services.rng import uniforms
from utils.errors import DomainError, NumericError, TruncationError

logger = logging.getLogger(__name__)

ENDPOINT_MASS_LIMIT = 1e-10


@dataclass(frozen=True)
class GridMeasure:
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    log_norm: float
    # midpoint CDF at the nodes; the last value is 1 - m_last / 2, not 1
    cdf: np.ndarray
    truncation: float
    # strictly increasing inverse-CDF table, endpoints included
    quantile_x: np.ndarray
    quantile_p: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        """Quadrature masses w_i * rho_i (sum to one)"""
        return self.weights * self.density

    @property
    def size(self) -> int:
        return int(self.nodes.size)


@dataclass(frozen=True)
class ProductMeasure:
    """Product of two 1D grid measures (the GaussCos2D stationary laws are product Gaussians)"""
    marginals: Tuple[GridMeasure, GridMeasure]

    @property
    def truncation(self) -> float:
        return max(m.truncation for m in self.marginals)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=64)
def composite_gauss_legendre(truncation: float, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights of `panels` 16-point Gauss-Legendre panels on [-R, R], mirror-symmetric
    bit for bit (x[i] == -x[n-1-i]) so that symmetric models produce symmetric densities.
    """
    if panels % 2:
        panels += 1
    t, w = leggauss(NODES_PER_PANEL)
    t = 0.5 * (t - t[::-1])
    w = 0.5 * (w + w[::-1])

    half = panels // 2
    h = truncation / half
    right_x = np.concatenate([(k + 0.5) * h + 0.5 * h * t for k in range(half)])
    right_w = np.concatenate([0.5 * h * w for _ in range(half)])
    nodes = np.concatenate([-right_x[::-1], right_x])
    weights = np.concatenate([right_w[::-1], right_w])
    return _freeze(nodes), _freeze(weights)


def default_truncation(model: ModelSpec) -> float:
    if model.name is ModelName.DAWSON:
        return 8.0 * max(1.0, model.sigma)
    if model.name is ModelName.SUB_GAUSSIAN:
        return 12.0 * max(1.0, model.sigma) ** 1.5
    return 12.0 * max(1.0, model.sigma / math.sqrt(2.0))


def measure_from_logdensity(
    logdensity: np.ndarray,
    nodes: np.ndarray,
    weights: np.ndarray,
    truncation: float,
    label: str = "measure",
) -> GridMeasure:
    logdensity = np.asarray(logdensity, dtype=float)
    if not np.all(np.isfinite(logdensity)):
        raise NumericError(f"log-density of {label} is not finite on the grid")

    top = float(np.max(logdensity))
    unnorm = np.exp(logdensity - top)
    z = math.fsum(weights * unnorm)
    density = unnorm / z
    mass = weights * density

    band = truncation / 10.0
    near_end = np.abs(nodes) > truncation - band
    endpoint_mass = math.fsum(mass[near_end])
    if endpoint_mass > ENDPOINT_MASS_LIMIT:
        raise TruncationError(
            MSG_TRUNCATION_TOO_SMALL.format(
                model=label, endpoint_mass=endpoint_mass, band=band,
                truncation=truncation, limit=ENDPOINT_MASS_LIMIT,
            ).strip(),
            truncation=truncation,
            endpoint_mass=endpoint_mass,
        )

    # midpoint convention: F(x_i) = sum_{j<i} m_j + m_i / 2, so cdf[0] = m_0 / 2 and
    # cdf[-1] = 1 - m_last / 2 < 1. The inverse-CDF table closes both ends at
    # (-truncation, 0) and (truncation, 1); quantile and sample interpolate in that table only.
    running = np.cumsum(mass)
    cdf = running - 0.5 * mass
    cdf = np.clip(cdf, 0.0, 1.0)

    qx = np.concatenate([[-truncation], nodes, [truncation]])
    qp = np.concatenate([[0.0], cdf, [1.0]])
    keep = np.concatenate([[True], np.diff(qp) > 0])
    qx, qp = qx[keep], qp[keep]
    if qp[-1] < 1.0:
        qx = np.append(qx, truncation)
        qp = np.append(qp, 1.0)

    return GridMeasure(
        nodes=_freeze(nodes),
        weights=_freeze(weights),
        density=_freeze(density),
        log_norm=top + math.log(z),
        cdf=_freeze(cdf),
        truncation=float(truncation),
        quantile_x=_freeze(qx),
        quantile_p=_freeze(qp),
    )


def gibbs_measure(
    model: ModelSpec,
    s,
    truncation: Optional[float] = None,
    panels: int = 64,
):
    """
    Frozen-statistic stationary candidate mu_s proportional to exp(confinement_logdensity(x, s)).

    Returns a GridMeasure in 1D and a ProductMeasure for GaussCos2D.
    """
    truncation = default_truncation(model) if truncation is None else float(truncation)
    if truncation <= 0:
        raise DomainError(f"truncation must be > 0, got {truncation}")
    if panels < 8:
        raise DomainError(f"panels must be >= 8, got {panels}")

    nodes, weights = composite_gauss_legendre(truncation, panels)
    if model.dim == 2:
        marginals = tuple(
            measure_from_logdensity(
                model.marginal_logdensity(axis, nodes, s), nodes, weights, truncation,
                label=f"{model.label}[axis {axis}]",
            )
            for axis in (0, 1)
        )
        return ProductMeasure(marginals=marginals)

    return measure_from_logdensity(
        model.confinement_logdensity(nodes, float(s)), nodes, weights, truncation, label=model.label
    )


def resolve_gibbs_measure(model: ModelSpec, s, truncation: Optional[float] = None, panels: int = 64):
    """gibbs_measure with the truncation radius doubled until the endpoint-mass check passes"""
    radius = default_truncation(model) if truncation is None else float(truncation)
    for attempt in range(MAX_TRUNCATION_DOUBLINGS + 1):
        try:
            return gibbs_measure(model, s, radius, panels)
        except TruncationError as e:
            if attempt == MAX_TRUNCATION_DOUBLINGS:
                raise
            logger.info("Truncation %.4g too small (endpoint mass %.2e), doubling", radius, e.endpoint_mass)
            radius *= 2.0
    raise AssertionError("unreachable")


def moment(mu: GridMeasure, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """mu(f) by quadrature"""
    values = np.broadcast_to(np.asarray(f(mu.nodes), dtype=float), mu.nodes.shape)
    if np.any(np.isnan(values)):
        raise NumericError("integrand is NaN on the quadrature grid")
    return math.fsum(mu.mass * values)


def mean(mu: GridMeasure) -> float:
    return moment(mu, lambda x: x)


def variance(mu: GridMeasure) -> float:
    m = mean(mu)
    return moment(mu, lambda x: (x - m) ** 2)


def quantile(mu: GridMeasure, p):
    """Piecewise-linear inverse CDF; accepts a scalar or an array of probabilities"""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)) or np.any(np.isnan(p_arr)):
        raise DomainError("quantile probabilities must lie in (0, 1)")
    out = np.interp(p_arr, mu.quantile_p, mu.quantile_x)
    return float(out) if out.ndim == 0 else out


def sample(mu: GridMeasure, n: int, seed: int, stream: int = 0) -> np.ndarray:
    """n i.i.d. draws by inverse CDF of counter-based uniforms; reproducible for a given seed"""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    u = uniforms(seed, stream, 0, n)
    return np.interp(u, mu.quantile_p, mu.quantile_x)


def quantile_grid(mu: GridMeasure, n: int) -> np.ndarray:
    """Quantiles at the midpoints (i - 1/2)/n, i = 1..n"""
    return quantile(mu, (np.arange(n) + 0.5) / n)
