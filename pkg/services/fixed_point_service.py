"""
Fixed point service - self-consistency equation, root finding and sigma sweeps
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from services.measure_service import gibbs_measure, moment, resolve_gibbs_measure
from services.model_service import ModelName, ModelSpec, make_model
from utils.errors import DomainError

logger = logging.getLogger(__name__)

ROOT_TOL = 1e-12
CLASSIFY_TOL = 1e-8
DEDUP_TOL = 1e-8
PSI_PRIME_STEP = 1e-5
SIGMA_TOL = 1e-4

STABLE = "stable-candidate"
UNSTABLE = "unstable-candidate"
MARGINAL = "marginal"


@dataclass(frozen=True)
class Root:
    m: float
    psi_prime: float
    classification: str
    residual: float
    condition: Optional[bool] = None


@dataclass(frozen=True)
class SelfConsistencyResult:
    roots: List[Root]
    scan_interval: Tuple[float, float]
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def residuals(self) -> List[float]:
        return [r.residual for r in self.roots]

    @property
    def values(self) -> List[float]:
        return [r.m for r in self.roots]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "scan_interval": list(self.scan_interval),
            "roots": [
                {
                    "m": r.m,
                    "psi_prime": r.psi_prime,
                    "classification": r.classification,
                    "residual": r.residual,
                    "condition": r.condition,
                }
                for r in self.roots
            ],
            **self.extras,
        }


def psi(model: ModelSpec, m: float, truncation: Optional[float] = None, panels: int = 64) -> float:
    """psi(m) = mu_m(S) - m with mu_m the frozen-statistic Gibbs measure"""
    if model.dim != 1:
        raise DomainError("psi is defined for 1D models; use solve_pair for GaussCos2D")
    mu = resolve_gibbs_measure(model, m, truncation, panels)
    return moment(mu, model.stat) - m


def psi_closed_form(model: ModelSpec, m: float) -> float:
    """Gaussian-family closed form e^{-sigma^2/4} cos(beta m) - m"""
    if model.name not in (ModelName.GAUSS_COS_1D, ModelName.OU_BASELINE):
        raise DomainError(f"no closed form for {model.name.value}")
    return math.exp(-model.sigma ** 2 / 4.0) * math.cos(model.beta * m) - m


def psi_prime(model: ModelSpec, m: float, truncation: Optional[float] = None, panels: int = 64) -> float:
    h = PSI_PRIME_STEP
    return (psi(model, m + h, truncation, panels) - psi(model, m - h, truncation, panels)) / (2.0 * h)


def psi_prime_identity(model: ModelSpec, m: float, truncation: Optional[float] = None, panels: int = 64) -> float:
    """-1 + (2 beta / sigma^2) mu_m((S - m)^2), valid for the double-well models at any m"""
    if model.name not in (ModelName.DAWSON, ModelName.SUB_GAUSSIAN):
        raise DomainError(f"psi' identity applies to double-well models, not {model.name.value}")
    mu = resolve_gibbs_measure(model, m, truncation, panels)
    spread = moment(mu, lambda x: (model.stat(x) - m) ** 2)
    return -1.0 + 2.0 * model.beta / model.sigma ** 2 * spread


def classify(psi_prime_value: float) -> str:
    if psi_prime_value < -CLASSIFY_TOL:
        return STABLE
    if psi_prime_value > CLASSIFY_TOL:
        return UNSTABLE
    return MARGINAL


def gauss_cos_condition(model: ModelSpec, m: float) -> bool:
    """beta sin(beta m) > -e^{sigma^2/4}: the perturbed eigenvalue stays negative"""
    return model.beta * math.sin(model.beta * m) > -math.exp(model.sigma ** 2 / 4.0)


def _polish(model: ModelSpec, a: float, b: float, fa: float, truncation, panels) -> float:
    def f(m):
        return psi(model, m, truncation, panels)

    root = bisect(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    value = f(root)
    slope = psi_prime(model, root, truncation, panels)
    if slope != 0.0 and abs(value) > 0.0:
        candidate = root - value / slope
        if a <= candidate <= b and abs(f(candidate)) < abs(value):
            root = candidate
    return root


def find_roots(
    model: ModelSpec,
    interval: Tuple[float, float] = (-3.0, 3.0),
    grid: int = 64,
    truncation: Optional[float] = None,
    panels: int = 64,
) -> SelfConsistencyResult:
    """
    Bracket sign changes of psi on a uniform grid and polish each by bisection + one Newton step.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise DomainError(f"empty interval {interval}")
    if grid < 32:
        raise DomainError(f"grid must be >= 32, got {grid}")

    ms = np.linspace(lo, hi, grid)
    values = np.array([psi(model, m, truncation, panels) for m in ms])

    found: List[float] = []
    for i, (m, v) in enumerate(zip(ms, values)):
        if abs(v) < ROOT_TOL:
            found.append(float(m))
            continue
        if i + 1 < grid:
            w = values[i + 1]
            if abs(w) >= ROOT_TOL and v * w < 0:
                found.append(_polish(model, float(m), float(ms[i + 1]), float(v), truncation, panels))

    found.sort()
    unique: List[float] = []
    for m in found:
        if not unique or abs(m - unique[-1]) > DEDUP_TOL:
            unique.append(m)

    roots = []
    for m in unique:
        slope = psi_prime(model, m, truncation, panels)
        condition = gauss_cos_condition(model, m) if model.name is ModelName.GAUSS_COS_1D else None
        roots.append(
            Root(
                m=m,
                psi_prime=slope,
                classification=classify(slope),
                residual=abs(psi(model, m, truncation, panels)),
                condition=condition,
            )
        )
    logger.info("%s: %d root(s) on [%g, %g]", model.label, len(roots), lo, hi)
    return SelfConsistencyResult(roots=roots, scan_interval=(lo, hi))


def positive_root(result: SelfConsistencyResult) -> Optional[float]:
    positives = [r.m for r in result.roots if r.m > DEDUP_TOL]
    return max(positives) if positives else None


def _regime_indicator(model: ModelSpec, interval, grid, truncation, panels) -> int:
    """
    Root count used for locating sigma_c. For the odd-symmetric double-well families the count is
    read from the sign of psi'(0) (three roots iff psi'(0) > 0), which does not depend on the scan
    grid resolution.
    """
    if model.name in (ModelName.DAWSON, ModelName.SUB_GAUSSIAN):
        return 3 if psi_prime(model, 0.0, truncation, panels) > 0 else 1
    return len(find_roots(model, interval, grid, truncation, panels).roots)


def sweep_sigma(
    family: "str | ModelName",
    beta: float,
    sigma_range: Tuple[float, float],
    steps: int,
    interval: Tuple[float, float] = (-3.0, 3.0),
    grid: int = 64,
    panels: int = 64,
    threads: int = 1,
) -> Dict[str, Any]:
    """
    Root count and positive root m_+(sigma) on a log-uniform sigma grid, with sigma_c refined by
    bisection between the three-root and one-root regimes.

    Returns:
        bifurcation table dict: sigma, num_roots, m_plus lists and sigma_c (None if not bracketed)
    """
    s_lo, s_hi = float(sigma_range[0]), float(sigma_range[1])
    if not (0 < s_lo < s_hi):
        raise DomainError(f"sigma_range must be positive and increasing, got {sigma_range}")
    if steps < 8:
        raise DomainError(f"steps must be >= 8, got {steps}")

    sigmas = np.geomspace(s_lo, s_hi, steps)

    def run(sigma: float) -> Tuple[int, Optional[float]]:
        model = make_model(family, beta, float(sigma))
        result = find_roots(model, interval, grid, None, panels)
        return len(result.roots), positive_root(result)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(run, sigmas))

    counts = [r[0] for r in rows]
    m_plus = [r[1] for r in rows]

    def regime(sigma: float) -> int:
        return _regime_indicator(make_model(family, beta, sigma), interval, grid, None, panels)

    sigma_c = None
    regimes = [regime(float(s)) for s in sigmas]
    for k in range(steps - 1):
        if regimes[k] >= 3 and regimes[k + 1] == 1:
            a, b = float(sigmas[k]), float(sigmas[k + 1])
            while b - a > SIGMA_TOL:
                mid = 0.5 * (a + b)
                if regime(mid) >= 3:
                    a = mid
                else:
                    b = mid
            sigma_c = 0.5 * (a + b)
            break

    if sigma_c is None:
        logger.info("sigma_c not bracketed in [%g, %g]", s_lo, s_hi)

    return {
        "family": ModelName.parse(family).value,
        "beta": beta,
        "sigma": sigmas.tolist(),
        "num_roots": counts,
        "m_plus": m_plus,
        "sigma_c": sigma_c,
        "sigma_c_bracketed": sigma_c is not None,
    }


def pair_map(model: ModelSpec, m, truncation: Optional[float] = None, panels: int = 64) -> np.ndarray:
    """(mu_m(cos pi_1), mu_m(cos pi_2)) for the GaussCos2D product measure"""
    measure = gibbs_measure(model, np.asarray(m, dtype=float), truncation, panels)
    return np.array([moment(marg, np.cos) for marg in measure.marginals])


def _newton_2d(model, m0, truncation, panels, iterations: int = 50) -> Tuple[np.ndarray, float]:
    m = np.asarray(m0, dtype=float)
    h = 1e-7
    for _ in range(iterations):
        r = pair_map(model, m, truncation, panels) - m
        if np.max(np.abs(r)) < ROOT_TOL:
            break
        jac = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            jac[:, j] = (
                (pair_map(model, m + e, truncation, panels) - (m + e))
                - (pair_map(model, m - e, truncation, panels) - (m - e))
            ) / (2 * h)
        m = m - np.linalg.solve(jac, r)
    return m, float(np.max(np.abs(pair_map(model, m, truncation, panels) - m)))


def solve_pair(
    model: ModelSpec,
    initial: Tuple[float, float] = (0.5, 0.5),
    damping: float = 0.5,
    tol: float = ROOT_TOL,
    max_iter: int = 10_000,
    truncation: Optional[float] = None,
    panels: int = 64,
) -> Dict[str, Any]:
    """
    Fixed point of m <- (mu_m(cos pi_1), mu_m(cos pi_2)) by damped iteration, falling back to a
    grid scan + 2D Newton when the iteration does not converge.
    """
    if model.dim != 2:
        raise DomainError("solve_pair needs the 2D model")

    m = np.asarray(initial, dtype=float)
    method = "damped-iteration"
    converged = False
    for it in range(max_iter):
        update = pair_map(model, m, truncation, panels)
        step = damping * (update - m)
        m = m + step
        if np.max(np.abs(pair_map(model, m, truncation, panels) - m)) < tol:
            converged = True
            break

    residual = float(np.max(np.abs(pair_map(model, m, truncation, panels) - m)))
    if not converged:
        method = "grid-newton"
        bound = math.exp(-model.sigma ** 2 / 4.0)
        axis = np.linspace(-bound, bound, 21)
        best = None
        for a in axis:
            for b in axis:
                r = np.max(np.abs(pair_map(model, (a, b), truncation, panels) - np.array([a, b])))
                if best is None or r < best[0]:
                    best = (r, (a, b))
        m, residual = _newton_2d(model, best[1], truncation, panels)
        converged = residual < tol

    product = model.beta ** 2 * math.sin(model.beta * m[0]) * math.sin(model.beta * m[1])
    return {
        "m": m.tolist(),
        "residual": residual,
        "converged": converged,
        "method": method,
        "condition": product <= math.e,
        "sin_product": product,
    }


ROOT_CHOICES = ("stable", "plus", "minus", "zero")


def select_root(result: SelfConsistencyResult, which: str = "stable") -> Root:
    """
    Pick one root: "plus"/"minus" are the largest positive / smallest negative roots, "zero" the
    symmetric root and "stable" the largest stable candidate.
    """
    roots = result.roots
    if which == "plus":
        chosen = [r for r in roots if r.m > DEDUP_TOL][-1:]
    elif which == "minus":
        chosen = [r for r in roots if r.m < -DEDUP_TOL][:1]
    elif which == "zero":
        chosen = [r for r in roots if abs(r.m) <= DEDUP_TOL]
    elif which == "stable":
        chosen = [r for r in roots if r.classification == STABLE][-1:]
    else:
        raise DomainError(f"unknown root choice '{which}', expected one of {ROOT_CHOICES}")
    if not chosen:
        raise DomainError(f"no '{which}' root among {[round(r.m, 10) for r in roots]}")
    return chosen[0]
