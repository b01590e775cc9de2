"""
Spectral engine - Galerkin discretization of the linearized generator L + A in an orthonormal
polynomial basis of L2(mu) and its eigen report.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg

from config import DEFAULT_PANELS, MAX_TRUNCATION_DOUBLINGS
from messages import (
    LABEL_LAMBDA_P,
    MSG_ASYMMETRIC_GENERATOR,
    MSG_BASIS_DEGRADED,
    MSG_BASIS_TAIL,
    MSG_KERNEL_NOT_CENTERED,
)
from services.measure_service import GridMeasure, ProductMeasure, default_truncation, gibbs_measure
from services.model_service import ModelSpec
from utils.errors import (
    AssemblyError,
    BasisDegradationError,
    DomainError,
    EigensolverError,
    NormalizationError,
    TruncationError,
)

logger = logging.getLogger(__name__)

GRAM_LIMIT = 1e-6
TAIL_LIMIT = 1e-10
ASYMMETRY_LIMIT = 1e-8
KERNEL_MEAN_LIMIT = 1e-8
RANK_RATIO = 1e-10
ZERO_TOL = 1e-8
SIMPLE_GAP = 1e-6
# per-axis basis size cap for tensor-product bases
MAX_TENSOR_AXIS = 12


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal polynomials p_0..p_{K-1} w.r.t. mu, tabulated at the quadrature nodes"""
    mu: GridMeasure
    size: int
    values: np.ndarray
    derivs: np.ndarray
    second_derivs: np.ndarray
    # recurrence x p_k = sqrt_b[k+1] p_{k+1} + a[k] p_k + sqrt_b[k] p_{k-1}
    a: np.ndarray
    sqrt_b: np.ndarray

    def gram(self) -> np.ndarray:
        return (self.values * self.mu.mass) @ self.values.T

    def evaluate(self, x, deriv: int = 0) -> np.ndarray:
        """Basis (or its first/second derivative) at arbitrary points, shape K x len(x)"""
        values, d1, d2 = _run_recurrence(np.atleast_1d(np.asarray(x, dtype=float)), self.a, self.sqrt_b)
        return (values, d1, d2)[deriv]

    def coefficients(self, f) -> np.ndarray:
        """L2(mu) projection coefficients <p_i, f>"""
        fx = np.broadcast_to(np.asarray(f(self.mu.nodes), dtype=float), self.mu.nodes.shape)
        return self.values @ (self.mu.mass * fx)


@dataclass(frozen=True)
class TensorBasis:
    """Products p_a(x_1) q_b(x_2), flattened with index a * K + b"""
    axes: Tuple[OrthoBasis, OrthoBasis]

    @property
    def size(self) -> int:
        return self.axes[0].size * self.axes[1].size

    @property
    def mu(self) -> ProductMeasure:
        return ProductMeasure(marginals=(self.axes[0].mu, self.axes[1].mu))

    def index(self, a: int, b: int) -> int:
        return a * self.axes[1].size + b


Basis = Union[OrthoBasis, TensorBasis]


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    lambda_Q: float
    lambda_P: float
    growth_bound: float
    stable: bool
    zero_residual: float
    zero_gap: float
    zero_simple: bool
    basis_size: int
    lambda_P_label: str = LABEL_LAMBDA_P

    def as_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "lambda_Q": self.lambda_Q,
            "lambda_P": self.lambda_P,
            "lambda_P_label": self.lambda_P_label,
            "growth_bound": self.growth_bound,
            "stable": self.stable,
            "zero_residual": self.zero_residual,
            "zero_gap": self.zero_gap,
            "zero_simple": self.zero_simple,
            "basis_size": self.basis_size,
        }


@dataclass(frozen=True)
class GalerkinSystem:
    basis: Basis
    L: np.ndarray
    A: np.ndarray
    # A = sum_k outer(c[k], r[k]); one term per drift component
    c: np.ndarray
    r: np.ndarray
    s: object


def _run_recurrence(x: np.ndarray, a: np.ndarray, sqrt_b: np.ndarray):
    size = a.size
    values = np.zeros((size, x.size))
    d1 = np.zeros_like(values)
    d2 = np.zeros_like(values)
    values[0] = 1.0
    for k in range(size - 1):
        prev = values[k - 1] if k else 0.0
        prev_d1 = d1[k - 1] if k else 0.0
        prev_d2 = d2[k - 1] if k else 0.0
        shift = x - a[k]
        values[k + 1] = (shift * values[k] - sqrt_b[k] * prev) / sqrt_b[k + 1]
        d1[k + 1] = (values[k] + shift * d1[k] - sqrt_b[k] * prev_d1) / sqrt_b[k + 1]
        d2[k + 1] = (2.0 * d1[k] + shift * d2[k] - sqrt_b[k] * prev_d2) / sqrt_b[k + 1]
    return values, d1, d2


def _stieltjes(nodes: np.ndarray, mass: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Discretized Stieltjes procedure for the recurrence coefficients of mu"""
    a = np.zeros(size)
    sqrt_b = np.zeros(size)
    p_prev = np.zeros_like(nodes)
    p = np.ones_like(nodes)
    for k in range(size):
        a[k] = np.dot(mass, nodes * p * p)
        if k + 1 == size:
            break
        q = (nodes - a[k]) * p - sqrt_b[k] * p_prev
        norm2 = np.dot(mass, q * q)
        if not norm2 > 0:
            raise BasisDegradationError(
                MSG_BASIS_DEGRADED.format(size=size, deviation=float("inf"), limit=GRAM_LIMIT).strip()
            )
        sqrt_b[k + 1] = np.sqrt(norm2)
        p_prev, p = p, q / sqrt_b[k + 1]
    return a, sqrt_b


def build_basis(mu: GridMeasure, size: int) -> OrthoBasis:
    """
    Orthonormal polynomials w.r.t. mu by the three-term recurrence, with first and second
    derivatives from the differentiated recurrence.
    """
    if size < 2:
        raise DomainError(f"basis size must be >= 2, got {size}")
    if size > mu.size // 2:
        raise DomainError(f"basis size {size} too large for a {mu.size}-node grid")

    mass = mu.mass
    a, sqrt_b = _stieltjes(mu.nodes, mass, size)
    values, d1, d2 = _run_recurrence(mu.nodes, a, sqrt_b)

    gram = (values * mass) @ values.T
    deviation = float(np.max(np.abs(gram - np.eye(size))))
    if deviation > GRAM_LIMIT:
        raise BasisDegradationError(
            MSG_BASIS_DEGRADED.format(size=size, deviation=deviation, limit=GRAM_LIMIT).strip()
        )

    near_end = np.abs(mu.nodes) > mu.truncation * 0.9
    tail_mass = float(np.sum(mass[near_end] * values[-1, near_end] ** 2))
    if tail_mass > TAIL_LIMIT:
        raise BasisDegradationError(
            MSG_BASIS_TAIL.format(
                degree=size - 1, tail_mass=tail_mass, truncation=mu.truncation, size=size
            ).strip(),
            tail=True,
        )

    for arr in (values, d1, d2, a, sqrt_b):
        arr.setflags(write=False)
    return OrthoBasis(
        mu=mu, size=size, values=values, derivs=d1, second_derivs=d2, a=a, sqrt_b=sqrt_b
    )


def resolve_basis(
    model: ModelSpec,
    s,
    size: int,
    truncation: Optional[float] = None,
    panels: int = DEFAULT_PANELS,
) -> Basis:
    """
    Gibbs measure of (model, s) plus its basis, doubling the truncation radius while either the
    density or the top basis polynomial keeps mass near the endpoints.
    """
    radius = default_truncation(model) if truncation is None else float(truncation)
    for attempt in range(MAX_TRUNCATION_DOUBLINGS + 1):
        try:
            mu = gibbs_measure(model, s, radius, panels)
            if isinstance(mu, ProductMeasure):
                return TensorBasis(axes=tuple(build_basis(m, size) for m in mu.marginals))
            return build_basis(mu, size)
        except (TruncationError, BasisDegradationError) as e:
            if isinstance(e, BasisDegradationError) and not e.tail:
                raise
            if attempt == MAX_TRUNCATION_DOUBLINGS:
                raise
            logger.info("Truncation %.4g too small for basis size %d, doubling", radius, size)
            radius *= 2.0
    raise AssertionError("unreachable")


def _axis_drift(model: ModelSpec, axis: int, x: np.ndarray, s) -> np.ndarray:
    if model.dim == 1:
        return model.drift(x, s)
    pts = np.zeros((x.size, 2))
    pts[:, axis] = x
    return model.drift(pts, s)[:, axis]


def _dirichlet_form(basis: OrthoBasis, model: ModelSpec, s, axis: int = 0) -> np.ndarray:
    mass = basis.mu.mass
    half_var = 0.5 * model.sigma ** 2

    L = -half_var * (basis.derivs * mass) @ basis.derivs.T
    L = 0.5 * (L + L.T)

    # <p_i, b p_j' + sigma^2/2 p_j''> is symmetric only when mu is the Gibbs measure of the drift
    b = _axis_drift(model, axis, basis.mu.nodes, s)
    generator = (basis.values * mass) @ (b * basis.derivs + half_var * basis.second_derivs).T
    asymmetry = float(np.max(np.abs(generator - generator.T)))
    limit = ASYMMETRY_LIMIT * max(1.0, float(np.max(np.abs(L))))
    if asymmetry > limit:
        raise AssemblyError(
            MSG_ASYMMETRIC_GENERATOR.format(asymmetry=asymmetry, limit=ASYMMETRY_LIMIT, s=float(np.ravel(s)[axis])).strip()
        )
    return L


def assemble_L(basis: Basis, model: ModelSpec, s) -> np.ndarray:
    """
    L[i][j] = -(sigma^2/2) <p_i', p_j'>_mu, symmetric negative semidefinite.
    """
    if isinstance(basis, TensorBasis):
        L1 = _dirichlet_form(basis.axes[0], model, s, axis=0)
        L2 = _dirichlet_form(basis.axes[1], model, s, axis=1)
        return np.kron(L1, np.eye(L2.shape[0])) + np.kron(np.eye(L1.shape[0]), L2)
    return _dirichlet_form(basis, model, s)


def _check_rank(A: np.ndarray, rank: int) -> None:
    sv = scipy.linalg.svdvals(A)
    if sv[0] > 0 and sv.size > rank and sv[rank] > RANK_RATIO * sv[0]:
        raise AssemblyError(f"perturbation has numerical rank > {rank} (sv ratio {sv[rank] / sv[0]:.3e})")


def _check_centered(c0: float, s) -> None:
    if abs(c0) > KERNEL_MEAN_LIMIT:
        raise NormalizationError(
            MSG_KERNEL_NOT_CENTERED.format(mean=c0, limit=KERNEL_MEAN_LIMIT, s=float(np.ravel(s)[0])).strip()
        )


def kernel_factors(basis: Basis, model: ModelSpec, s) -> Tuple[np.ndarray, np.ndarray]:
    """
    Column factors c (kernel profile coefficients) and row functionals r (mu(w p_j')), stacked
    one row per drift component.
    """
    if isinstance(basis, TensorBasis):
        bx, by = basis.axes
        # drift component i sees the statistic of coordinate 1 - i; evaluate on the diagonal
        # so that column i of the profile is a function of the other coordinate only
        diag = np.stack([bx.mu.nodes, bx.mu.nodes], axis=-1)
        profile = model.kernel_profile(diag, s)
        prof0 = by.values @ (by.mu.mass * profile[:, 0])
        prof1 = bx.values @ (bx.mu.mass * profile[:, 1])
        row0 = bx.derivs @ (bx.mu.mass * model.grad_weight(bx.mu.nodes))
        row1 = by.derivs @ (by.mu.mass * model.grad_weight(by.mu.nodes))

        kx, ky = bx.size, by.size
        c = np.zeros((2, basis.size))
        r = np.zeros((2, basis.size))
        for b in range(ky):
            c[0, basis.index(0, b)] = prof0[b]
            r[1, basis.index(0, b)] = row1[b]
        for a in range(kx):
            c[1, basis.index(a, 0)] = prof1[a]
            r[0, basis.index(a, 0)] = row0[a]
        return c, r

    mass = basis.mu.mass
    nodes = basis.mu.nodes
    c = basis.values @ (mass * model.kernel_profile(nodes, s))
    r = basis.derivs @ (mass * model.grad_weight(nodes))
    return c[None, :], r[None, :]


def assemble_Abar(basis: Basis, model: ModelSpec, s) -> np.ndarray:
    """
    Rank-one (rank-two in 2D) matrix A = sum_k c_k r_k^T of the nonlocal perturbation.
    """
    c, r = kernel_factors(basis, model, s)
    c0 = float(np.max(np.abs(c[:, 0])))
    _check_centered(c0, s)
    A = sum(np.outer(ck, rk) for ck, rk in zip(c, r))
    _check_rank(A, c.shape[0])
    return A


def build_system(
    model: ModelSpec,
    s,
    size: int,
    truncation: Optional[float] = None,
    panels: int = DEFAULT_PANELS,
) -> GalerkinSystem:
    if model.dim == 2 and size > MAX_TENSOR_AXIS:
        logger.info("Capping per-axis basis size %d at %d for %s", size, MAX_TENSOR_AXIS, model.label)
        size = MAX_TENSOR_AXIS
    basis = resolve_basis(model, s, size, truncation, panels)
    L = assemble_L(basis, model, s)
    A = assemble_Abar(basis, model, s)
    c, r = kernel_factors(basis, model, s)
    logger.info("Assembled %s at s=%s with %d basis functions", model.label, s, basis.size)
    return GalerkinSystem(basis=basis, L=L, A=A, c=c, r=r, s=s)


def _ordered(eigenvalues: np.ndarray) -> np.ndarray:
    # descending real part, ties by imaginary part
    order = np.lexsort((eigenvalues.imag, -eigenvalues.real))
    return eigenvalues[order]


def spectrum(L: np.ndarray, A: np.ndarray) -> SpectralReport:
    """
    Eigenvalues of L + A with the decay gap lambda_Q, the unperturbed gap lambda_P and a
    numerical simplicity test of the zero eigenvalue.
    """
    L = np.asarray(L, dtype=float)
    A = np.asarray(A, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape != A.shape:
        raise DomainError(f"L and A must be square and of equal size, got {L.shape} and {A.shape}")

    try:
        eigenvalues, left, right = scipy.linalg.eig(L + A, left=True, right=True)
        unperturbed = scipy.linalg.eigvalsh(L)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(f"dense eigensolver failed: {e}") from e

    distance = np.abs(eigenvalues)
    by_distance = np.argsort(distance, kind="stable")
    zero_idx = int(by_distance[0])
    zero_residual = float(distance[zero_idx])
    zero_gap = float(distance[by_distance[1]] - distance[zero_idx]) if distance.size > 1 else np.inf

    # left/right overlap vanishes for a defective (Jordan) zero eigenvalue
    l0, r0 = left[:, zero_idx], right[:, zero_idx]
    overlap = abs(np.vdot(l0, r0)) / (np.linalg.norm(l0) * np.linalg.norm(r0))
    zero_simple = bool(zero_gap > SIMPLE_GAP and overlap > ZERO_TOL)

    nonzero = eigenvalues[distance > ZERO_TOL]
    growth_bound = float(np.max(nonzero.real)) if nonzero.size else -np.inf
    nonzero_l = unperturbed[np.abs(unperturbed) > ZERO_TOL]
    lambda_P = float(max(0.0, -np.max(nonzero_l))) if nonzero_l.size else 0.0

    return SpectralReport(
        eigenvalues=_ordered(eigenvalues),
        lambda_Q=max(0.0, -growth_bound),
        lambda_P=lambda_P,
        growth_bound=growth_bound,
        stable=growth_bound < 0,
        zero_residual=zero_residual,
        zero_gap=zero_gap,
        zero_simple=zero_simple,
        basis_size=L.shape[0],
    )


def secular_function(L: np.ndarray, c: np.ndarray, r: np.ndarray, lam: complex) -> complex:
    """
    1 + r^T (L - lam)^{-1} c. Eigenvalues of L + c r^T outside the spectrum of L are its zeros.
    """
    shifted = np.asarray(L, dtype=complex) - lam * np.eye(L.shape[0])
    return complex(1.0 + np.dot(r, scipy.linalg.solve(shifted, np.asarray(c, dtype=complex))))


def unperturbed_eigenvalues(L: np.ndarray, c: np.ndarray, r: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of L whose eigenvectors are orthogonal to every row functional or profile"""
    values, vectors = scipy.linalg.eigh(L)
    c = np.atleast_2d(c)
    r = np.atleast_2d(r)
    blind_r = np.all(np.abs(r @ vectors) < tol, axis=0)
    blind_c = np.all(np.abs(c @ vectors) < tol, axis=0)
    return values[blind_r | blind_c]


def mode_gap(report: SpectralReport, tol: float = ZERO_TOL) -> float:
    """Distance in real part between the slowest nonzero mode and the next distinct one"""
    values = report.eigenvalues[np.abs(report.eigenvalues) > tol]
    reals = np.sort(np.unique(np.round(values.real / tol) * tol))[::-1]
    return float(reals[0] - reals[1]) if reals.size > 1 else np.inf
