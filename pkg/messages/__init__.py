# Truncation / quadrature diagnostics
MSG_TRUNCATION_TOO_SMALL = """
Stationary density for {model} keeps mass {endpoint_mass:.3e} within {band:.3g} of the
truncation endpoints +/-{truncation:.4g} (limit {limit:.0e}). Enlarge the truncation radius.
"""

MSG_BASIS_DEGRADED = """
Orthonormal basis of size {size} lost orthogonality (max Gram deviation {deviation:.3e},
limit {limit:.0e}). Use a smaller basis size or more quadrature panels.
"""

MSG_BASIS_TAIL = """
Basis polynomial of degree {degree} keeps mass {tail_mass:.3e} near the truncation endpoints
+/-{truncation:.4g}. Enlarge the truncation radius for basis size {size}.
"""

# Galerkin assembly diagnostics
MSG_ASYMMETRIC_GENERATOR = """
Generator matrix is not symmetric in L2(mu): max |L - L^T| = {asymmetry:.3e} (relative limit
{limit:.0e}). The measure is not the Gibbs measure of the frozen drift at s={s:.6g}.
"""

MSG_KERNEL_NOT_CENTERED = """
Interaction kernel profile has mean {mean:.3e} under mu (limit {limit:.0e}); the statistic value
s={s:.6g} is not self-consistent for this measure.
"""

# Semigroup diagnostics
MSG_STIFF = """
Adaptive Runge-Kutta step size underflowed at t={time:.6g} ({detail}). Reduce the basis size or
use the matrix exponential path.
"""

# Particle diagnostics
MSG_DIVERGED = "Particle ensemble diverged at t={time:.6g}: max |x| = {max_abs:.3e}"

MSG_FIT_WINDOW = """
No usable fit window: initial distance {d0:.4g}, noise floor {floor:.4g}, window [{low:.4g}, {high:.4g}]
contains {points} recorded points.
"""

# Report labels
LABEL_LAMBDA_P = "L2-gap proxy"
LABEL_WEIGHTED = "upper bound (comonotone coupling)"
LABEL_BASIN = "basin radius not computable from available constants"
