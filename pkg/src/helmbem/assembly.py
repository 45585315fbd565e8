"""Galerkin assembly of the Helmholtz layer operators on panel meshes.

Entries are panel-pair double integrals of the single-, double-, and adjoint
double-layer kernels against piecewise constants:

    A_ij = int_{panel i} int_{panel j} K(x, y) ds(y) ds(x).

Far pairs use tensor Gauss of order Q_FAR; pairs closer than NEAR_FACTOR * h
(but not touching) use order Q_NEAR; self and edge-sharing pairs use
singularity subtraction in parameter coordinates: with r = |x(s) - y(t)|,

    K(x(s), y(t)) J(s) J(t) = A(s, t) + ln|s - t| * B(s, t),

where B collects the coefficient of the Bessel-series logarithm (for the SLP,
B = -(1/2pi) J_0(k r) J J; for the DLP/ADLP the analogous J_1 combination) and
A is smooth across the diagonal with a known limit there.  The smooth part is
integrated by tensor Gauss, the log part by an outer Gauss rule and an inner
log-adapted rule (see quadrature.log_singular_nodes).
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import j0, j1, y0, y1

from .errors import AssemblyError, DomainError, SingularityError, UnsupportedError
from .geometry import PanelMesh
from .quadrature import gauss_legendre, log_singular_nodes
from .specfun import EULER_GAMMA_CONST as EULER_GAMMA

Q_FAR = 8
Q_NEAR = 16
Q_SING = 16
NEAR_FACTOR = 2.0

KINDS = ("SLP", "DLP", "ADLP")

# Cap on block size (node pairs held in memory at once) in the far-field loop.
_BLOCK_PAIR_BUDGET = 8_000_000


@dataclass
class DiscreteOperator:
    """Dense Galerkin matrix tagged with its provenance."""

    matrix: np.ndarray
    kind: str
    k: float
    eta: complex | None
    mesh_id: str
    mass: np.ndarray

    @property
    def dof(self) -> int:
        return self.matrix.shape[0]


@dataclass
class DiscreteFunction:
    """Coefficient vector of a p=0 function on a given mesh."""

    coefficients: np.ndarray
    mesh: PanelMesh = field(repr=False)

    def l2_norm(self) -> float:
        return self.mesh.l2_norm(self.coefficients)


def _h0(z):
    return j0(z) + 1j * y0(z)


def _h1(z):
    return j1(z) + 1j * y1(z)


def _far_kernel(kind, k, dx, dy, r, na=None, nb=None):
    """Kernel values on precomputed node geometry (r already guarded > 0)."""
    if kind == "SLP":
        return 0.25j * _h0(k * r)
    if kind == "DLP":
        dot = dx * nb[..., 0] + dy * nb[..., 1]
        return (0.25j * k) * _h1(k * r) * dot / r
    if kind == "ADLP":
        dot = dx * na[..., 0] + dy * na[..., 1]
        return (-0.25j * k) * _h1(k * r) * dot / r
    raise DomainError(f"unknown operator kind '{kind}'")


class _PairGeometry:
    """Curve-level evaluations at arbitrary parameter pairs (s, t)."""

    def __init__(self, mesh, kind, k):
        self.curve = mesh.curve
        self.kind = kind
        self.k = k

    def _common(self, S, T):
        xs = self.curve.point(S)
        xt = self.curve.point(T)
        js = self.curve.jacobian(S)
        jt = self.curve.jacobian(T)
        d = xs - xt
        r = np.sqrt(np.sum(d * d, axis=-1))
        return xs, xt, js, jt, d, r

    def log_coeff(self, S, T):
        """B(s, t): the factor multiplying ln|s - t| in the integrand."""
        xs, xt, js, jt, d, r = self._common(S, T)
        jj = js * jt
        k = self.k
        if self.kind == "SLP":
            return -(0.5 / np.pi) * j0(k * r) * jj
        # J_1(z)/z is entire; this form avoids 0/0 on the diagonal.
        z = k * r
        j1_over_z = np.where(z > 1e-8, j1(np.maximum(z, 1e-300)) / np.maximum(z, 1e-300), 0.5)
        if self.kind == "DLP":
            dot = np.sum(d * self.curve.normal(T), axis=-1)
        else:  # ADLP: note the sign flip of the kernel
            dot = -np.sum(d * self.curve.normal(S), axis=-1)
        return -(k * k / (2 * np.pi)) * j1_over_z * dot * jj

    def smooth_part(self, S, T):
        """A(s, t) = F(s, t) - ln|s - t| B(s, t), diagonal patched."""
        xs, xt, js, jt, d, r = self._common(S, T)
        jj = js * jt
        k = self.k
        delta = np.abs(S - T)
        on_diag = delta < 1e-14 * (1.0 + np.abs(S))
        delta_safe = np.where(on_diag, 1.0, delta)
        r_safe = np.where(on_diag, 1.0, r)
        if self.kind == "SLP":
            F = 0.25j * _h0(k * r_safe) * jj
            B = -(0.5 / np.pi) * j0(k * r_safe) * jj
            A = F - np.log(delta_safe) * B
            diag = ((0.25j - (np.log(0.5 * k) + EULER_GAMMA) / (2 * np.pi))
                    - np.log(js) / (2 * np.pi)) * js * js
            return np.where(on_diag, diag, A)
        if self.kind == "DLP":
            dot = np.sum(d * self.curve.normal(T), axis=-1)
            F = (0.25j * k) * _h1(k * r_safe) * dot / r_safe * jj
        else:
            dot = -np.sum(d * self.curve.normal(S), axis=-1)
            F = (0.25j * k) * _h1(k * r_safe) * dot / r_safe * jj
        z = k * r_safe
        j1_over_z = np.where(z > 1e-8, j1(z) / z, 0.5)
        B = -(k * k / (2 * np.pi)) * j1_over_z * dot * jj
        A = F - np.log(delta_safe) * B
        diag = -self.curve.curvature(S) / (4 * np.pi) * js * js
        return np.where(on_diag, diag + 0j, A)


def _touching_pairs(mesh):
    """(i, j, t_shift) for self and edge-sharing panel pairs."""
    n = mesh.dof
    t0, t1 = mesh.curve.domain
    period = t1 - t0
    pairs = [(i, i, 0.0) for i in range(n)]
    for i in range(n):
        if i + 1 < n:
            pairs.append((i, i + 1, 0.0))
            pairs.append((i + 1, i, 0.0))
    if mesh.curve.closed:
        # wraparound adjacency: shift panel 0 up / panel n-1 down in parameter
        pairs.append((n - 1, 0, period))
        pairs.append((0, n - 1, -period))
    return pairs


def _near_pairs(mesh, touching):
    """Ordered (i, j) pairs with chordal gap < NEAR_FACTOR * h, not touching."""
    n = mesh.dof
    mids = mesh.midpoints
    half = 0.5 * mesh.mass
    cutoff = NEAR_FACTOR * mesh.h
    skip = set((i, j) for i, j, _ in touching)
    out_i, out_j = [], []
    block = max(1, int(2_000_000 // max(n, 1)))
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        d = mids[i0:i1, None, :] - mids[None, :, :]
        gap = np.sqrt(np.sum(d * d, axis=-1)) - half[i0:i1, None] - half[None, :]
        ii, jj = np.nonzero(gap < cutoff)
        for a, b in zip(ii + i0, jj):
            if a != b and (a, b) not in skip:
                out_i.append(a)
                out_j.append(b)
    return np.array(out_i, dtype=int), np.array(out_j, dtype=int)


def _far_field_matrix(kind, mesh, k, threads=1):
    _, pts, nors, wts = mesh.panel_rule(Q_FAR)
    n, q = mesh.dof, Q_FAR
    px = pts[..., 0].ravel()
    py = pts[..., 1].ravel()
    nb = nors.reshape(-1, 2)
    wb = wts.ravel()
    A = np.empty((n, n), dtype=complex)

    rows_per_block = max(1, _BLOCK_PAIR_BUDGET // (n * q * q))

    def do_block(i0):
        i1 = min(i0 + rows_per_block, n)
        sl = slice(i0 * q, i1 * q)
        dx = px[sl][:, None] - px[None, :]
        dy = py[sl][:, None] - py[None, :]
        r = np.sqrt(dx * dx + dy * dy)
        np.maximum(r, 1e-300, out=r)  # self nodes fixed later by the singular path
        vals = _far_kernel(kind, k, dx, dy, r, na=nb[sl][:, None, :], nb=nb[None, :, :])
        vals *= wb[sl][:, None]
        vals *= wb[None, :]
        A[i0:i1] = vals.reshape(i1 - i0, q, n, q).sum(axis=(1, 3))

    starts = range(0, n, rows_per_block)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(do_block, starts))
    else:
        for i0 in starts:
            do_block(i0)
    return A


def _near_corrections(A, kind, mesh, k):
    ii, jj = _near_pairs(mesh, _touching_pairs(mesh))
    if len(ii) == 0:
        return
    gx, gw = gauss_legendre(Q_NEAR)
    lo, span = mesh.breaks[:-1], np.diff(mesh.breaks)
    S = lo[ii, None] + span[ii, None] * gx[None, :]
    T = lo[jj, None] + span[jj, None] * gx[None, :]
    xs = mesh.curve.point(S)
    xt = mesh.curve.point(T)
    ws = span[ii, None] * gw[None, :] * mesh.curve.jacobian(S)
    wt = span[jj, None] * gw[None, :] * mesh.curve.jacobian(T)
    dx = xs[:, :, None, 0] - xt[:, None, :, 0]
    dy = xs[:, :, None, 1] - xt[:, None, :, 1]
    r = np.sqrt(dx * dx + dy * dy)
    na = np.broadcast_to(mesh.curve.normal(S)[:, :, None, :], r.shape + (2,))
    nbv = np.broadcast_to(mesh.curve.normal(T)[:, None, :, :], r.shape + (2,))
    vals = _far_kernel(kind, k, dx, dy, r, na=na, nb=nbv)
    A[ii, jj] = np.einsum("pa,pb,pab->p", ws, wt, vals)


def _log_double_integral(geom, a1, b1, a2, b2):
    """Vectorized  iint ln|s-t| B(s, t) dt ds  over [a1,b1] x [a2,b2] per pair.

    Integrated in difference coordinates v = s - t: for fixed v the s-range is
    [max(a1, a2+v), min(b1, b2+v)] and G(v) = int B(s, s-v) ds is piecewise
    smooth with kinks at v = a1-a2 and v = b1-b2.  Segments starting at v = 0
    carry the log singularity and use the log-adapted rule; the rest use plain
    Gauss.  All interval arrays have shape (P,).
    """
    gxi, gwi = gauss_legendre(Q_SING)
    gxo, gwo = gauss_legendre(24)

    def g_of_v(v, w_v, sign):
        # inner integral over s at difference nodes v (shape (P, nv)); sign
        # +1 means t = s - v (v > 0 side), -1 means t = s + v.
        if sign > 0:
            sl = np.maximum(a1[:, None], a2[:, None] + v)
            sr = np.minimum(b1[:, None], b2[:, None] + v)
        else:
            sl = np.maximum(a1[:, None], a2[:, None] - v)
            sr = np.minimum(b1[:, None], b2[:, None] - v)
        span = np.maximum(sr - sl, 0.0)
        S = sl[..., None] + span[..., None] * gxi
        T = S - sign * v[..., None]
        vals = geom.log_coeff(S, T)
        G = span * np.einsum("pvi,i->pv", vals, gwi)
        return np.sum(w_v * G, axis=1)

    total = np.zeros(a1.shape, dtype=complex)
    for sign in (+1.0, -1.0):
        if sign > 0:
            w_max = b1 - a2
            kinks = np.stack([a1 - a2, b1 - b2], axis=0)
        else:
            w_max = b2 - a1
            kinks = np.stack([a2 - a1, b2 - b1], axis=0)
        w_max = np.maximum(w_max, 0.0)
        k1 = np.clip(np.min(np.maximum(kinks, 0.0), axis=0), 0.0, w_max)
        k2 = np.clip(np.max(np.maximum(kinks, 0.0), axis=0), 0.0, w_max)
        k1 = np.where(k1 > 0.0, k1, w_max)  # no interior kink: one log segment
        k2 = np.maximum(k2, k1)

        active = w_max > 1e-300
        if not np.any(active):
            continue
        # segment [0, k1]: log-singular rule
        v0, w0 = log_singular_nodes(np.maximum(k1, 1e-300))
        seg = g_of_v(v0, w0, sign)
        # segments [k1, k2] and [k2, w_max]: plain Gauss (ln v smooth there)
        for lo_s, hi_s in ((k1, k2), (k2, w_max)):
            ln = hi_s - lo_s
            has = ln > 1e-300
            if not np.any(has):
                continue
            v = lo_s[:, None] + ln[:, None] * gxo
            w_v = ln[:, None] * gwo * np.log(np.maximum(v, 1e-300))
            seg = seg + np.where(has, g_of_v(v, w_v, sign), 0.0)
        total += np.where(active, seg, 0.0)
    return total


def _touching_corrections(A, kind, mesh, k):
    pairs = _touching_pairs(mesh)
    geom = _PairGeometry(mesh, kind, k)
    lo, span = mesh.breaks[:-1], np.diff(mesh.breaks)
    gx, gw = gauss_legendre(Q_SING)

    pi = np.array([p[0] for p in pairs])
    pj = np.array([p[1] for p in pairs])
    shift = np.array([p[2] for p in pairs])

    a1 = lo[pi]
    b1 = a1 + span[pi]
    a2 = lo[pj] + shift
    b2 = a2 + span[pj]

    # smooth part: tensor Gauss
    S = a1[:, None] + span[pi][:, None] * gx[None, :]
    T = a2[:, None] + span[pj][:, None] * gx[None, :]
    WS = span[pi][:, None] * gw[None, :]
    WT = span[pj][:, None] * gw[None, :]
    Asm = geom.smooth_part(S[:, :, None], T[:, None, :])
    entries = np.einsum("pa,pb,pab->p", WS, WT, Asm)

    entries = entries + _log_double_integral(geom, a1, b1, a2, b2)

    bad = ~np.isfinite(entries)
    if np.any(bad):
        b = int(np.nonzero(bad)[0][0])
        raise AssemblyError(f"singular quadrature failed for panel pair ({pi[b]}, {pj[b]})")
    A[pi, pj] = entries


def assemble(kind: str, mesh: PanelMesh, k: float, threads: int = 1) -> DiscreteOperator:
    """Galerkin matrix of the SLP / DLP / ADLP operator on the mesh."""
    if kind not in KINDS:
        raise DomainError(f"unknown operator kind '{kind}' (expected one of {KINDS})")
    if k <= 0:
        raise DomainError("wavenumber must be positive")
    A = _far_field_matrix(kind, mesh, k, threads=threads)
    _near_corrections(A, kind, mesh, k)
    _touching_corrections(A, kind, mesh, k)
    return DiscreteOperator(matrix=A, kind=kind, k=float(k), eta=None,
                            mesh_id=mesh.mesh_id, mass=mesh.mass.copy())


def identity_scaled(mesh: PanelMesh, factor: complex = 0.5) -> DiscreteOperator:
    """factor * mass matrix: the Galerkin matrix of factor * I on p=0."""
    return DiscreteOperator(matrix=np.diag(factor * mesh.mass).astype(complex),
                            kind="identity-scaled", k=0.0, eta=None,
                            mesh_id=mesh.mesh_id, mass=mesh.mass.copy())


def combined_direct(mesh: PanelMesh, k: float, eta: complex, threads: int = 1,
                    slp: DiscreteOperator | None = None,
                    adlp: DiscreteOperator | None = None) -> DiscreteOperator:
    """Direct combined operator  (1/2) I + D'_k - i eta S_k  (Galerkin matrix)."""
    slp = slp if slp is not None else assemble("SLP", mesh, k, threads)
    adlp = adlp if adlp is not None else assemble("ADLP", mesh, k, threads)
    m = np.diag(0.5 * mesh.mass) + adlp.matrix - 1j * eta * slp.matrix
    return DiscreteOperator(matrix=m, kind="CFIE_direct", k=float(k), eta=complex(eta),
                            mesh_id=mesh.mesh_id, mass=mesh.mass.copy())


def combined_indirect(mesh: PanelMesh, k: float, eta: complex, threads: int = 1,
                      slp: DiscreteOperator | None = None,
                      dlp: DiscreteOperator | None = None) -> DiscreteOperator:
    """Indirect combined operator  (1/2) I + D_k - i eta S_k."""
    slp = slp if slp is not None else assemble("SLP", mesh, k, threads)
    dlp = dlp if dlp is not None else assemble("DLP", mesh, k, threads)
    m = np.diag(0.5 * mesh.mass) + dlp.matrix - 1j * eta * slp.matrix
    return DiscreteOperator(matrix=m, kind="CFIE_indirect", k=float(k), eta=complex(eta),
                            mesh_id=mesh.mesh_id, mass=mesh.mass.copy())


def rhs_direct_planewave(mesh: PanelMesh, k: float, eta: complex, direction) -> DiscreteFunction:
    """Panel integrals of f(x) = (ik <a, n(x)> - i eta) exp(ik <x, a>)."""
    a = _unit(direction)
    _, pts, nors, wts = mesh.panel_rule(Q_NEAR)
    phase = np.exp(1j * k * (pts[..., 0] * a[0] + pts[..., 1] * a[1]))
    dn = nors[..., 0] * a[0] + nors[..., 1] * a[1]
    vals = (1j * k * dn - 1j * eta) * phase
    return DiscreteFunction(np.sum(wts * vals, axis=1), mesh)


def rhs_indirect_planewave(mesh: PanelMesh, k: float, direction) -> DiscreteFunction:
    """Panel integrals of -exp(ik <x, a>) (indirect right-hand side)."""
    a = _unit(direction)
    _, pts, _, wts = mesh.panel_rule(Q_NEAR)
    phase = np.exp(1j * k * (pts[..., 0] * a[0] + pts[..., 1] * a[1]))
    return DiscreteFunction(-np.sum(wts * phase, axis=1), mesh)


def _unit(direction):
    a = np.asarray(direction, dtype=float)
    if a.shape != (2,) or abs(np.linalg.norm(a) - 1.0) > 1e-12:
        raise DomainError("direction must be a 2-D unit vector")
    return a


def tangential_derivative_matrix(mesh: PanelMesh):
    """Periodic central-difference arc-length derivative on p=0 coefficients.

    Second-order stencil (c_{j+1} - c_{j-1}) / (2h); the discrete surrogate for
    the H^1(Gamma) seminorm used by the norm studies.
    """
    if not mesh.curve.closed:
        raise UnsupportedError("tangential derivative stencil needs a closed uniform mesh")
    n = mesh.dof
    h = mesh.length / n
    idx = np.arange(n)
    rows = np.concatenate([idx, idx])
    cols = np.concatenate([(idx + 1) % n, (idx - 1) % n])
    vals = np.concatenate([np.full(n, 0.5 / h), np.full(n, -0.5 / h)])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def exterior_field(mesh: PanelMesh, density: DiscreteFunction, k: float, points,
                   incident=None):
    """Evaluate u(x) = u_inc(x) - SL[density](x) at points off the boundary.

    Without `incident`, returns the single-layer potential SL[density] alone.
    Points must keep distance >= h from the curve (near-singular evaluation is
    not implemented).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _, qx, _, qw = mesh.panel_rule(Q_NEAR)
    src = qx.reshape(-1, 2)
    w = (qw * density.coefficients[:, None]).ravel()
    dx = pts[:, 0][:, None] - src[None, :, 0]
    dy = pts[:, 1][:, None] - src[None, :, 1]
    r = np.sqrt(dx * dx + dy * dy)
    if np.min(r) < mesh.h * (1 - 1e-12):
        raise SingularityError("evaluation point closer than h to the boundary")
    sl = (0.25j * _h0(k * r)) @ w
    if incident is None:
        return sl
    a = _unit(incident)
    u_inc = np.exp(1j * k * (pts[:, 0] * a[0] + pts[:, 1] * a[1]))
    return u_inc - sl


def dump_operator(op: DiscreteOperator, path_base: str) -> tuple:
    """Write <base>.bin (row-major complex doubles) and <base>.json sidecar."""
    bin_path = f"{path_base}.bin"
    json_path = f"{path_base}.json"
    np.ascontiguousarray(op.matrix, dtype=np.complex128).tofile(bin_path)
    sidecar = {
        "kind": op.kind,
        "k": op.k,
        "eta": None if op.eta is None else [op.eta.real, op.eta.imag],
        "dof": op.dof,
        "h": float(op.mass.max()),
        "mesh_id": op.mesh_id,
    }
    with open(json_path, "w") as f:
        json.dump(sidecar, f, indent=1)
    return bin_path, json_path
