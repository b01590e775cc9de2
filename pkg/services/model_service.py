"""
Model service - catalog of distribution-dependent SDE instances
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np

from utils.errors import CatalogError, DomainError

logger = logging.getLogger(__name__)

ArrayFn = Callable[..., Any]


class ModelName(str, enum.Enum):
    DAWSON = "dawson"
    GAUSS_COS_1D = "gausscos1d"
    GAUSS_COS_2D = "gausscos2d"
    SUB_GAUSSIAN = "subgaussian"
    OU_BASELINE = "oubaseline"

    @classmethod
    def parse(cls, name: "str | ModelName") -> "ModelName":
        if isinstance(name, ModelName):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        for member in cls:
            if member.value == key:
                return member
        raise CatalogError(f"Unknown model '{name}'. Known: {', '.join(m.value for m in cls)}")


@dataclass(frozen=True)
class ModelSpec:
    """
    A concrete instance of dX = b(X, mu) dt + sigma dB where b sees mu only through s = mu(S).

    In 1D every callable takes numpy arrays for x/z and a float for s. In 2D x/z have a trailing
    axis of length 2 and s is a length-2 array.
    """
    name: ModelName
    dim: int
    beta: float
    sigma: float
    stat: ArrayFn
    drift: ArrayFn
    dfkernel: ArrayFn
    confinement_logdensity: ArrayFn
    # dfkernel(x, z, s) = grad_weight(x) * kernel_profile(z, s) for every catalog model
    grad_weight: ArrayFn
    kernel_profile: ArrayFn
    drift_dx: ArrayFn
    # 2D only: log-density of the i-th marginal of the product Gibbs measure
    marginal_logdensity: Optional[ArrayFn] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.name.value}(beta={self.beta:g}, sigma={self.sigma:g})"


def u0(x):
    return x / np.cbrt(1.0 + x * x)


def u0_prime(x):
    return (1.0 + x * x / 3.0) / (1.0 + x * x) ** (4.0 / 3.0)


def _log_u0_prime_dx(x):
    return (2.0 * x / 3.0) / (1.0 + x * x / 3.0) - (8.0 * x / 3.0) / (1.0 + x * x)


def _log_u0_prime_dxx(x):
    a = 1.0 + x * x / 3.0
    b = 1.0 + x * x
    return (2.0 / 3.0) * (1.0 - x * x / 3.0) / (a * a) - (8.0 / 3.0) * (1.0 - x * x) / (b * b)


def _ones_like(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _dawson(beta: float, sigma: float) -> ModelSpec:
    c = 2.0 / sigma ** 2

    def drift(x, s):
        return -(x ** 3 - x) - beta * (x - s)

    def drift_dx(x, s):
        return -3.0 * x ** 2 + 1.0 - beta

    def profile(z, s):
        return beta * (z - s)

    def dfkernel(x, z, s):
        return _ones_like(x) * profile(z, s)

    def logdensity(x, s):
        return -c * (x ** 4 / 4.0 - x ** 2 / 2.0 + beta / 2.0 * (x - s) ** 2)

    return ModelSpec(
        name=ModelName.DAWSON, dim=1, beta=beta, sigma=sigma,
        stat=lambda x: np.asarray(x, dtype=float) * 1.0,
        drift=drift, dfkernel=dfkernel, confinement_logdensity=logdensity,
        grad_weight=_ones_like, kernel_profile=profile, drift_dx=drift_dx,
    )


def _gauss_cos(beta: float, sigma: float, name: ModelName) -> ModelSpec:
    var2 = sigma ** 2

    def drift(x, s):
        return -x + beta * s

    def drift_dx(x, s):
        return -_ones_like(x)

    def profile(z, s):
        return beta * (np.cos(z) - s)

    def dfkernel(x, z, s):
        return _ones_like(x) * profile(z, s)

    def logdensity(x, s):
        return -((x - beta * s) ** 2) / var2

    return ModelSpec(
        name=name, dim=1, beta=beta, sigma=sigma,
        stat=np.cos, drift=drift, dfkernel=dfkernel, confinement_logdensity=logdensity,
        grad_weight=_ones_like, kernel_profile=profile, drift_dx=drift_dx,
        extras={"gaussian_variance": sigma ** 2 / 2.0},
    )


def _gauss_cos_2d(beta: float, sigma: float) -> ModelSpec:
    var2 = sigma ** 2

    def stat(x):
        return np.cos(x)

    def drift(x, s):
        s = np.asarray(s, dtype=float)
        return -x + beta * s[::-1]

    def drift_dx(x, s):
        return -_ones_like(x)

    def profile(z, s):
        # component i of the drift sees the statistic of the other coordinate
        s = np.asarray(s, dtype=float)
        return beta * (np.cos(z)[..., ::-1] - s[::-1])

    def dfkernel(x, z, s):
        return _ones_like(x) * profile(z, s)

    def logdensity(x, s):
        s = np.asarray(s, dtype=float)
        return -np.sum((x - beta * s[::-1]) ** 2, axis=-1) / var2

    def marginal_logdensity(axis, x, s):
        s = np.asarray(s, dtype=float)
        return -((x - beta * s[1 - axis]) ** 2) / var2

    return ModelSpec(
        name=ModelName.GAUSS_COS_2D, dim=2, beta=beta, sigma=sigma,
        stat=stat, drift=drift, dfkernel=dfkernel, confinement_logdensity=logdensity,
        grad_weight=_ones_like, kernel_profile=profile, drift_dx=drift_dx,
        marginal_logdensity=marginal_logdensity,
        extras={"gaussian_variance": sigma ** 2 / 2.0},
    )


def _sub_gaussian(beta: float, sigma: float) -> ModelSpec:
    s2 = sigma ** 2

    def inner(u, s):
        return -u ** 3 + (1.0 - beta) * u + beta * s

    def drift(x, s):
        return u0_prime(x) * inner(u0(x), s) + 0.5 * s2 * _log_u0_prime_dx(x)

    def drift_dx(x, s):
        u = u0(x)
        up = u0_prime(x)
        upp = up * _log_u0_prime_dx(x)
        g_prime = -3.0 * u ** 2 + (1.0 - beta)
        return upp * inner(u, s) + up * up * g_prime + 0.5 * s2 * _log_u0_prime_dxx(x)

    def profile(z, s):
        return beta * (u0(z) - s)

    def dfkernel(x, z, s):
        return u0_prime(x) * profile(z, s)

    def logdensity(x, s):
        u = u0(x)
        return (
            -((u * u - 1.0) ** 2) / (2.0 * s2)
            - beta / s2 * (u * u - 2.0 * u * s)
            + np.log(u0_prime(x))
        )

    return ModelSpec(
        name=ModelName.SUB_GAUSSIAN, dim=1, beta=beta, sigma=sigma,
        stat=u0, drift=drift, dfkernel=dfkernel, confinement_logdensity=logdensity,
        grad_weight=u0_prime, kernel_profile=profile, drift_dx=drift_dx,
    )


def make_model(name: "str | ModelName", beta: float, sigma: float) -> ModelSpec:
    """
    Build a catalog model. OUBaseline is GaussCos1D with beta forced to 0.
    """
    model_name = ModelName.parse(name)
    if not np.isfinite(sigma) or sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    if not np.isfinite(beta):
        raise DomainError(f"beta must be finite, got {beta}")
    beta = float(beta)
    sigma = float(sigma)

    if model_name is ModelName.DAWSON:
        return _dawson(beta, sigma)
    if model_name is ModelName.GAUSS_COS_1D:
        return _gauss_cos(beta, sigma, ModelName.GAUSS_COS_1D)
    if model_name is ModelName.OU_BASELINE:
        if beta != 0.0:
            logger.info("OUBaseline ignores beta=%g", beta)
        return _gauss_cos(0.0, sigma, ModelName.OU_BASELINE)
    if model_name is ModelName.GAUSS_COS_2D:
        return _gauss_cos_2d(beta, sigma)
    return _sub_gaussian(beta, sigma)


def audit_dissipativity(model: ModelSpec, radius: float, samples: int, s: Any = 0.0) -> Dict[str, Any]:
    """
    Empirical check of the one-sided Lipschitz bound <grad b v, v> <= K |v|^2 on |x| <= radius.

    Returns:
        report dict with max_directional_derivative, argmax and sign pattern outside |x| > 1
    """
    if radius <= 0 or samples < 10:
        return {"success": False, "error": "radius must be > 0 and samples >= 10"}

    h = 1e-6
    grid = np.linspace(-radius, radius, samples)

    if model.dim == 1:
        deriv = (model.drift(grid + h, s) - model.drift(grid - h, s)) / (2.0 * h)
        idx = int(np.argmax(deriv))
        outside = np.abs(grid) > 1.0
        return {
            "success": True,
            "error": None,
            "max_directional_derivative": float(deriv[idx]),
            "argmax": float(grid[idx]),
            "negative_outside_unit": bool(np.all(deriv[outside] < 0)) if outside.any() else None,
            "max_outside_unit": float(deriv[outside].max()) if outside.any() else None,
        }

    # 2D: symmetric part of the Jacobian on a tensor grid, largest eigenvalue per point
    xx, yy = np.meshgrid(grid, grid, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    jac = np.empty((pts.shape[0], 2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        jac[:, :, j] = (model.drift(pts + e, s) - model.drift(pts - e, s)) / (2.0 * h)
    sym = 0.5 * (jac + np.transpose(jac, (0, 2, 1)))
    top = np.linalg.eigvalsh(sym)[:, -1]
    idx = int(np.argmax(top))
    outside = np.linalg.norm(pts, axis=-1) > 1.0
    return {
        "success": True,
        "error": None,
        "max_directional_derivative": float(top[idx]),
        "argmax": pts[idx].tolist(),
        "negative_outside_unit": bool(np.all(top[outside] < 0)),
        "max_outside_unit": float(top[outside].max()),
    }
