"""Full GMRES with residual tracing, operator norms in the mass-weighted
L2(Gamma) metric, numerical-range (field-of-values) distance, and the
Elman / Beckermann-Goreinov-Tyrtyshnikov iteration predictors.

Norms and ranges are computed for B = M^{-1/2} A M^{-1/2} (M the diagonal
mass matrix), which represents the operator in the true L2(Gamma) metric; on
the uniform meshes built here M = h I, so cos(beta) coincides with its
Euclidean counterpart and the Elman-type bounds apply verbatim to the traced
Euclidean residuals.  A 'euclidean' metric switch is provided for comparison.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, svds

from .errors import DomainError, NumericalError, PrecisionError, SingularityError
from .assembly import DiscreteOperator

DENSE_CAP = 6000
_DENSE_SVD_MAX = 800


@dataclass
class GmresTrace:
    """Solution plus the per-iteration relative residual history."""

    solution: np.ndarray
    iterations: int
    residuals: np.ndarray  # ||r_j||_2 / ||r_0||_2 for j = 0..iterations
    converged: bool
    tol: float


@dataclass
class RangeEstimate:
    """Numerical-range geometry of a matrix in a given metric."""

    norm: float
    dist: float
    cos_beta: float
    beta: float
    sin_beta: float
    gamma_beta: float
    contains_zero: bool
    metric: str
    angle: float  # maximizing rotation angle of the sweep


@dataclass
class IterationPrediction:
    m_elman: int
    m_bgt: int


def gmres(apply, b, tol: float = 1e-5, maxit: int | None = None) -> GmresTrace:
    """Full (restart-free) GMRES with x0 = 0.

    Arnoldi with modified Gram-Schmidt; the least-squares problem is updated
    by Givens rotations, whose last component gives the residual norm at every
    step without forming the iterate.
    """
    b = np.asarray(b, dtype=complex).ravel()
    n = b.size
    if maxit is None:
        maxit = n
    maxit = min(maxit, n)
    beta0 = np.linalg.norm(b)
    if beta0 == 0.0:
        raise DomainError("gmres right-hand side is zero")
    op = (lambda x: apply @ x) if isinstance(apply, np.ndarray) else apply

    V = np.zeros((maxit + 1, n), dtype=complex)
    H = np.zeros((maxit + 1, maxit), dtype=complex)
    cs = np.zeros(maxit, dtype=complex)
    sn = np.zeros(maxit, dtype=complex)
    g = np.zeros(maxit + 1, dtype=complex)
    V[0] = b / beta0
    g[0] = beta0
    residuals = [1.0]
    m = 0
    for j in range(maxit):
        w = np.asarray(op(V[j]), dtype=complex).ravel()
        for i in range(j + 1):
            H[i, j] = np.vdot(V[i], w)
            w -= H[i, j] * V[i]
        h_sub = np.linalg.norm(w)
        H[j + 1, j] = h_sub

        # previously accumulated rotations
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + np.conj(cs[i]) * H[i + 1, j]
            H[i, j] = t
        # new rotation zeroing H[j+1, j]
        denom = math.hypot(abs(H[j, j]), abs(H[j + 1, j]))
        if denom == 0.0:
            raise NumericalError("Arnoldi breakdown with nonzero residual")
        cs[j] = np.conj(H[j, j]) / denom
        sn[j] = np.conj(H[j + 1, j]) / denom
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]

        m = j + 1
        # |sn| <= 1, so the recursion is nonincreasing in floating point too
        residuals.append(residuals[-1] * abs(sn[j]))
        if residuals[-1] <= tol:
            break
        V[j + 1] = w / max(h_sub, 1e-300)

    y = np.linalg.solve(H[:m, :m], g[:m]) if m else np.zeros(0, dtype=complex)
    x = V[:m].T @ y
    res = np.array(residuals)
    return GmresTrace(solution=x, iterations=m, residuals=res,
                      converged=bool(res[-1] <= tol), tol=float(tol))


def _weighted_matrix(op: DiscreteOperator, metric: str) -> np.ndarray:
    if metric == "euclidean":
        return op.matrix
    if metric != "L2":
        raise DomainError(f"unknown metric '{metric}'")
    d = 1.0 / np.sqrt(op.mass)
    return op.matrix * d[:, None] * d[None, :]


def _sigma_max(B: np.ndarray) -> float:
    n = B.shape[0]
    if n <= _DENSE_SVD_MAX:
        return float(np.linalg.svd(B, compute_uv=False)[0])
    s = svds(B, k=1, return_singular_vectors=False, tol=1e-11)
    return float(s[0])


def operator_norm(op: DiscreteOperator, metric: str = "L2") -> float:
    """Operator norm in the requested metric.

    'L2'       : sigma_max(M^{-1/2} A M^{-1/2}), the discrete L2(Gamma) norm.
    'L2_to_H1' : norm as a map into the discrete H^1 given by
                 ||u||^2 + ||d_s u||^2 with the periodic central-difference
                 stencil D on coefficients: sigma_max of the stacked map
                 [ M^{-1/2} A M^{-1/2} ; M^{1/2} D M^{-1} A M^{-1/2} ].
    'euclidean': sigma_max(A).
    """
    if op.dof > DENSE_CAP:
        raise DomainError(f"dof {op.dof} beyond dense cap {DENSE_CAP}")
    if metric in ("L2", "euclidean"):
        return _sigma_max(_weighted_matrix(op, metric))
    if metric != "L2_to_H1":
        raise DomainError(f"unknown metric '{metric}'")

    n = op.dof
    mass = op.mass
    h_bar = float(mass.mean())
    d_half = np.sqrt(mass)
    d_invh = 1.0 / d_half

    def stencil(v):
        # acts along axis 0; exact adjoint is -stencil (real skew matrix)
        return (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2.0 * h_bar)

    B = _weighted_matrix(op, "L2")
    if n <= _DENSE_SVD_MAX:
        proj = (1.0 / mass)[:, None] * op.matrix * d_invh[None, :]
        row2 = d_half[:, None] * stencil(proj)
        return float(np.linalg.svd(np.vstack([B, row2]), compute_uv=False)[0])

    A = op.matrix

    def mv(x):
        x = np.asarray(x).ravel()
        ax = A @ (d_invh * x)
        top = d_invh * ax
        bot = d_half * stencil(ax / mass)
        return np.concatenate([top, bot])

    def rmv(y):
        y = np.asarray(y).ravel()
        y1, y2 = y[:n], y[n:]
        t = d_invh * y1 - (1.0 / mass) * stencil(d_half * y2)
        return d_invh * (A.conj().T @ t)

    lin = LinearOperator((2 * n, n), matvec=mv, rmatvec=rmv, dtype=complex)
    s = svds(lin, k=1, return_singular_vectors=False, tol=1e-11)
    return float(s[0])


def inverse_norm(op: DiscreteOperator, metric: str = "L2") -> float:
    """1 / sigma_min of the (mass-weighted) matrix."""
    if op.dof > DENSE_CAP:
        raise DomainError(f"dof {op.dof} beyond dense cap {DENSE_CAP}")
    B = _weighted_matrix(op, metric)
    n = B.shape[0]
    if n <= _DENSE_SVD_MAX:
        smin = float(np.linalg.svd(B, compute_uv=False)[-1])
        if smin <= 1e-14 * max(float(np.abs(B).max()), 1.0):
            raise SingularityError("matrix singular to working precision")
        return 1.0 / smin
    lu = lu_factor(B)

    def mv(x):
        return lu_solve(lu, x)

    def rmv(x):
        return lu_solve(lu, x, trans=2)

    lin = LinearOperator((n, n), matvec=mv, rmatvec=rmv, dtype=complex)
    s = svds(lin, k=1, return_singular_vectors=False, tol=1e-11)
    val = float(s[0])
    if not np.isfinite(val):
        raise SingularityError("matrix singular to working precision")
    return val


def _lambda_min_exact(H1, H2, theta, want_vector=False):
    """Smallest eigenvalue of cos(theta) H1 + sin(theta) H2 by a dense
    partial eigensolve (the minimum is poorly separated for CFIE matrices,
    which defeats Lanczos-type iteration)."""
    H = math.cos(theta) * H1 + math.sin(theta) * H2
    if want_vector:
        vals, vecs = sla.eigh(H, subset_by_index=(0, 0))
        return float(vals[0]), vecs[:, 0]
    vals = sla.eigh(H, subset_by_index=(0, 0), eigvals_only=True)
    return float(vals[0])


def _golden_max(f, lo, hi, f_lo_mid, resolution):
    """Golden-section maximization of a unimodal f on [lo, hi]."""
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a_, b_ = lo, hi
    c_ = b_ - gr * (b_ - a_)
    d_ = a_ + gr * (b_ - a_)
    fc, fd = f(c_), f(d_)
    while (b_ - a_) > resolution:
        if fc > fd:
            b_, d_, fd = d_, c_, fc
            c_ = b_ - gr * (b_ - a_)
            fc = f(c_)
        else:
            a_, c_, fc = c_, d_, fd
            d_ = a_ + gr * (b_ - a_)
            fd = f(d_)
    return (c_, fc) if fc > fd else (d_, fd)


def numerical_range_distance(op: DiscreteOperator, metric: str = "L2",
                             n_angles: int = 720,
                             angle_resolution: float = 1e-4) -> RangeEstimate:
    """dist(0, W(B)) via the rotation sweep max_theta lambda_min(Re e^{i theta} B).

    W(B) is convex (Toeplitz-Hausdorff), so the sweep objective p(theta) is
    concave on the arc where it is positive, and its positive arc certifies
    0 outside W.  For small matrices p is evaluated exactly at every sweep
    angle.  For large ones the sweep runs on a Rayleigh-Ritz compression
    (anchored at 8 exact solves): W of a compression is contained in W, so
    the compressed sweep is a pointwise upper bound on p; its maximizer seeds
    an exact uphill walk plus golden-section refinement to angle_resolution,
    and a nonpositive compressed maximum certifies 0 in W.
    """
    B = _weighted_matrix(op, "L2" if metric == "L2" else "euclidean")
    H1 = 0.5 * (B + B.conj().T)
    H2 = 0.5j * (B - B.conj().T)
    n = B.shape[0]
    thetas = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    span = 2 * np.pi / n_angles

    def p_exact(th):
        return _lambda_min_exact(H1, H2, th)

    if n <= 200:
        vals = np.array([p_exact(th) for th in thetas])
        i_best = int(np.argmax(vals))
        best, best_theta = float(vals[i_best]), float(thetas[i_best])
        if best > 0:
            best_theta, best = _golden_max(p_exact, best_theta - span,
                                           best_theta + span, best, angle_resolution)
    else:
        anchors = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
        vecs = []
        for th in anchors:
            _, v = _lambda_min_exact(H1, H2, th, want_vector=True)
            vecs.append(v)
        V = np.stack(vecs, axis=1)
        basis = np.hstack([V, H1 @ V, H2 @ V])
        Q, R = np.linalg.qr(basis)
        keep = np.abs(np.diag(R)) > 1e-10 * np.abs(np.diag(R)).max()
        Q = Q[:, keep]
        P1 = Q.conj().T @ (H1 @ Q)
        P2 = Q.conj().T @ (H2 @ Q)
        stack = (np.cos(thetas)[:, None, None] * P1[None]
                 + np.sin(thetas)[:, None, None] * P2[None])
        coarse = np.linalg.eigvalsh(stack)[:, 0]  # pointwise >= p(theta)
        i_best = int(np.argmax(coarse))
        if coarse[i_best] <= 0.0:
            best, best_theta = float(coarse[i_best]), float(thetas[i_best])
        else:
            # exact uphill walk from the compressed maximizer
            th0 = float(thetas[i_best])
            f0 = p_exact(th0)
            fl, fr = p_exact(th0 - span), p_exact(th0 + span)
            steps = 0
            while fr > f0 and steps < n_angles:
                th0, f0, fl = th0 + span, fr, f0
                fr = p_exact(th0 + span)
                steps += 1
            while fl > f0 and steps < n_angles:
                th0, f0, fr = th0 - span, fl, f0
                fl = p_exact(th0 - span)
                steps += 1
            best_theta, best = th0, f0
            if best <= 0.0:
                # walk stranded outside the true positive arc: grid the
                # compressed-positive arc exactly (it contains the true arc)
                pos = thetas[coarse > 0.0]
                grid = np.linspace(pos.min() - span, pos.max() + span, 33)
                vals = np.array([p_exact(th) for th in grid])
                i2 = int(np.argmax(vals))
                best, best_theta = float(vals[i2]), float(grid[i2])
                span = float(grid[1] - grid[0])
            if best > 0.0:
                best_theta, best = _golden_max(p_exact, best_theta - span,
                                               best_theta + span, best,
                                               angle_resolution)

    norm = _sigma_max(B)
    dist = max(best, 0.0)
    contains_zero = best <= 0.0
    cos_beta = min(dist / norm, 1.0) if norm > 0 else 0.0
    beta = math.acos(cos_beta)
    return RangeEstimate(norm=norm, dist=dist, cos_beta=cos_beta, beta=beta,
                         sin_beta=math.sin(beta), gamma_beta=gamma_of_beta(beta),
                         contains_zero=contains_zero, metric=metric,
                         angle=float(best_theta % (2 * np.pi)))


def gamma_of_beta(beta: float) -> float:
    """gamma_beta = 2 sin(beta / (4 - 2 beta / pi)); < sin(beta) on (0, pi/2)."""
    return 2.0 * math.sin(beta / (4.0 - 2.0 * beta / math.pi))


BGT_PREFACTOR_BASE = 2.0 + 2.0 / math.sqrt(3.0)


def elman_bound(range_est: RangeEstimate, m) -> np.ndarray:
    """sin^m beta (valid residual bound when cos beta > 0)."""
    return range_est.sin_beta ** np.asarray(m, dtype=float)


def bgt_bound(range_est: RangeEstimate, m) -> np.ndarray:
    """(2 + 2/sqrt(3)) (2 + gamma_beta) gamma_beta^m."""
    g = range_est.gamma_beta
    return BGT_PREFACTOR_BASE * (2.0 + g) * g ** np.asarray(m, dtype=float)


def iteration_predictors(range_est: RangeEstimate, eps: float) -> IterationPrediction:
    """Smallest m making each residual bound <= eps, by direct logarithms."""
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0, 1)")
    if range_est.contains_zero or range_est.cos_beta <= 0.0:
        raise PrecisionError("no prediction: cos beta = 0 (0 in the numerical range)")
    sb = range_est.sin_beta
    if sb <= 0.0:
        m_elman = 1
    else:
        m_elman = max(1, math.ceil(math.log(eps) / math.log(sb)))
    g = range_est.gamma_beta
    C = BGT_PREFACTOR_BASE * (2.0 + g)
    if g <= 0.0:
        m_bgt = 1
    else:
        m_bgt = max(1, math.ceil(math.log(eps / C) / math.log(g)))
    return IterationPrediction(m_elman=int(m_elman), m_bgt=int(m_bgt))


def residuals_csv(trace: GmresTrace, path: str) -> str:
    """Residual history as CSV (iteration, relative residual)."""
    with open(path, "w") as f:
        f.write("iteration,relative_residual\n")
        for j, r in enumerate(trace.residuals):
            f.write(f"{j},{r:.17g}\n")
    return path
