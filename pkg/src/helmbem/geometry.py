"""Parametrized 2-D boundaries and panel meshes.

Curves are given by a smooth map t -> R^2 on [0, T] (closed or open arc); the
outward normal is the tangent rotated by -pi/2, which is the exterior normal
for counterclockwise closed curves.  Meshes partition the curve into panels of
equal arc length (piecewise-constant Galerkin space, p = 0), so the mass
matrix is diagonal with the panel arc lengths on the diagonal.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DomainError
from .quadrature import gauss_legendre

DOF_CAP = 6000

# Fine-table resolution for the arc-length parametrization: 64 Gauss points
# per panel candidate, in 4-point groups.
_FINE_SUBDIV_PER_PANEL = 16
_FINE_RULE = 4


@dataclass(frozen=True)
class ParamCurve:
    """A regular parametrized curve with derivatives up to second order."""

    kind: str
    domain: tuple
    closed: bool
    _point: callable = field(repr=False)
    _deriv: callable = field(repr=False)
    _deriv2: callable = field(repr=False)

    def point(self, t):
        return self._point(np.asarray(t, dtype=float))

    def derivative(self, t):
        return self._deriv(np.asarray(t, dtype=float))

    def jacobian(self, t):
        d = self.derivative(t)
        return np.sqrt(np.sum(d * d, axis=-1))

    def normal(self, t):
        """Outward unit normal: derivative rotated by -pi/2, normalized."""
        d = self.derivative(t)
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def curvature(self, t):
        d = self.derivative(t)
        d2 = self._deriv2(np.asarray(t, dtype=float))
        num = d[..., 0] * d2[..., 1] - d[..., 1] * d2[..., 0]
        return num / self.jacobian(t) ** 3


def _make(kind, domain, closed, p, d, d2):
    def pt(t):
        return np.stack(p(t), axis=-1)

    def dv(t):
        return np.stack(d(t), axis=-1)

    def dv2(t):
        return np.stack(d2(t), axis=-1)

    return ParamCurve(kind=kind, domain=tuple(domain), closed=closed,
                      _point=pt, _deriv=dv, _deriv2=dv2)


def curve_length(curve: ParamCurve, subdiv: int = 1024) -> float:
    """Arc length by dense composite Gauss (machine precision for smooth maps)."""
    t0, t1 = curve.domain
    gx, gw = gauss_legendre(8)
    edges = np.linspace(t0, t1, subdiv + 1)
    dt = (t1 - t0) / subdiv
    params = edges[:-1, None] + dt * gx[None, :]
    return float(dt * np.sum(curve.jacobian(params) @ gw))


def circle(radius: float = 1.0) -> ParamCurve:
    a = float(radius)
    if a <= 0:
        raise DomainError("circle radius must be positive")
    return _make(
        f"circle(a={a:g})", (0.0, 2 * np.pi), True,
        lambda t: (a * np.cos(t), a * np.sin(t)),
        lambda t: (-a * np.sin(t), a * np.cos(t)),
        lambda t: (-a * np.cos(t), -a * np.sin(t)),
    )


def ellipse(a1: float = 3.0, a2: float = 1.0) -> ParamCurve:
    a1, a2 = float(a1), float(a2)
    if a1 <= 0 or a2 <= 0:
        raise DomainError("ellipse semi-axes must be positive")
    return _make(
        f"ellipse(a1={a1:g},a2={a2:g})", (0.0, 2 * np.pi), True,
        lambda t: (a1 * np.cos(t), a2 * np.sin(t)),
        lambda t: (-a1 * np.sin(t), a2 * np.cos(t)),
        lambda t: (-a1 * np.cos(t), -a2 * np.sin(t)),
    )


def kite() -> ParamCurve:
    """The standard kite: smooth, nonconvex, nontrapping."""
    return _make(
        "kite", (0.0, 2 * np.pi), True,
        lambda t: (np.cos(t) + 0.65 * np.cos(2 * t) - 0.65, 1.5 * np.sin(t)),
        lambda t: (-np.sin(t) - 1.3 * np.sin(2 * t), 1.5 * np.cos(t)),
        lambda t: (-np.cos(t) - 2.6 * np.cos(2 * t), -1.5 * np.sin(t)),
    )


def segment() -> ParamCurve:
    """Flat open arc {(x, 0) : |x| < 1), parametrized over [-1, 1]."""
    z = lambda t: np.zeros_like(t)
    return _make(
        "segment", (-1.0, 1.0), False,
        lambda t: (t, z(t)),
        lambda t: (np.ones_like(t), z(t)),
        lambda t: (z(t), z(t)),
    )


def parabola_arc() -> ParamCurve:
    """Open arc {(x, x^2) : |x| < 1}, parametrized over [-1, 1]."""
    z = lambda t: np.zeros_like(t)
    return _make(
        "parabola", (-1.0, 1.0), False,
        lambda t: (t, t * t),
        lambda t: (np.ones_like(t), 2.0 * t),
        lambda t: (z(t), 2.0 * np.ones_like(t)),
    )


_CURVE_FACTORIES = {
    "circle": circle,
    "ellipse": ellipse,
    "kite": kite,
    "segment": segment,
    "parabola": parabola_arc,
}


def make_curve(name: str, **params) -> ParamCurve:
    """Curve by configuration name ('circle' | 'ellipse' | 'kite' | 'segment' | 'parabola')."""
    try:
        factory = _CURVE_FACTORIES[name]
    except KeyError:
        raise DomainError(f"unknown geometry '{name}'") from None
    return factory(**params)


class PanelMesh:
    """Partition of a curve into equal-arc-length panels with quadrature data.

    Attributes
    ----------
    curve : ParamCurve
    breaks : (dof+1,) parameter values of panel edges
    mass : (dof,) panel arc lengths (diagonal of the p=0 mass matrix)
    h : max panel arc length
    dof : number of panels
    mid_params, midpoints, mid_normals : arc-length panel midpoints
    """

    def __init__(self, curve: ParamCurve, n_panels: int):
        if n_panels < 2:
            raise DomainError("need at least 2 panels")
        if n_panels > DOF_CAP:
            raise CapacityError(f"dof {n_panels} exceeds cap {DOF_CAP}")
        self.curve = curve
        self.dof = int(n_panels)
        t0, t1 = curve.domain
        self._t0, self._t1 = t0, t1

        # Fine cumulative arc-length table, then invert for equal-arc breaks.
        m = max(_FINE_SUBDIV_PER_PANEL * n_panels, 256)
        gx, gw = gauss_legendre(_FINE_RULE)
        edges = np.linspace(t0, t1, m + 1)
        dt = (t1 - t0) / m
        params = edges[:-1, None] + dt * gx[None, :]
        jac = curve.jacobian(params)
        inc = dt * (jac @ gw)
        cum = np.concatenate([[0.0], np.cumsum(inc)])
        self.length = cum[-1]

        if jac.std() < 1e-12 * jac.mean():
            # Constant-speed curve (circle, segment): uniform breaks, exactly.
            self.breaks = np.linspace(t0, t1, n_panels + 1)
            self.mid_params = 0.5 * (self.breaks[:-1] + self.breaks[1:])
        else:
            targets = self.length * np.arange(1, n_panels) / n_panels
            inner = self._invert_arclength(edges, cum, targets, curve)
            self.breaks = np.concatenate([[t0], inner, [t1]])
            mid_targets = self.length * (np.arange(n_panels) + 0.5) / n_panels
            self.mid_params = self._invert_arclength(edges, cum, mid_targets, curve)

        self.midpoints = curve.point(self.mid_params)
        self.mid_normals = curve.normal(self.mid_params)

        # Panel arc lengths by 24-point Gauss (the p=0 mass matrix diagonal).
        p24, w24 = self._panel_rule_raw(24)
        self.mass = np.sum(w24 * curve.jacobian(p24), axis=1)
        self.h = float(self.mass.max())
        self._rules = {}

    @staticmethod
    def _invert_arclength(edges, cum, targets, curve):
        t = np.interp(targets, cum, edges)
        for _ in range(3):  # Newton refinement on s(t) = target
            s = np.interp(t, edges, cum)
            t = t - (s - targets) / curve.jacobian(t)
        return t

    def _panel_rule_raw(self, q):
        gx, gw = gauss_legendre(q)
        lo = self.breaks[:-1, None]
        span = np.diff(self.breaks)[:, None]
        return lo + span * gx[None, :], span * gw[None, :]

    def panel_rule(self, q: int):
        """Per-panel Gauss data: (params, points, normals, weights) with
        weights including the arc-length jacobian, shapes (dof, q[, 2])."""
        if q not in self._rules:
            params, pw = self._panel_rule_raw(q)
            points = self.curve.point(params)
            normals = self.curve.normal(params)
            weights = pw * self.curve.jacobian(params)
            self._rules[q] = (params, points, normals, weights)
        return self._rules[q]

    @property
    def mesh_id(self) -> str:
        return f"{self.curve.kind}:dof={self.dof}:h={self.h:.6e}"

    def shape_regularity(self) -> float:
        return float(self.mass.max() / self.mass.min())

    def integrate(self, values, q: int):
        """Panel-wise integrals of values sampled on the panel_rule(q) grid."""
        w = self.panel_rule(q)[3]
        return np.sum(w * values, axis=-1)

    def l2_norm(self, coeffs) -> float:
        """L2(Gamma) norm of a p=0 function from its coefficient vector."""
        return float(np.sqrt(np.sum(self.mass * np.abs(coeffs) ** 2)))


def build_mesh(curve: ParamCurve, k: float, ppw: float) -> PanelMesh:
    """Mesh with h <= 2*pi/(ppw*k), i.e. at least ppw points per wavelength."""
    if k <= 0:
        raise DomainError("wavenumber must be positive")
    if ppw < 2:
        raise DomainError("need at least 2 points per wavelength")
    h_target = 2 * np.pi / (ppw * k)
    n = int(np.ceil(curve_length(curve) / h_target - 1e-9))
    return PanelMesh(curve, max(n, 2))


def build_mesh_n(curve: ParamCurve, n_panels: int) -> PanelMesh:
    return PanelMesh(curve, n_panels)


def best_approx_error(mesh: PanelMesh, f) -> float:
    """L2(Gamma) distance from f to the piecewise-constant space.

    The L2 projection onto p=0 is the panel mean, so per panel the squared
    error is  int |f|^2 - |int f|^2 / L.  f is a callable on points (.., 2).
    """
    q = 24
    _, points, _, weights = mesh.panel_rule(q)
    vals = np.asarray(f(points))
    sq = np.sum(weights * np.abs(vals) ** 2, axis=1)
    mean_int = np.sum(weights * vals, axis=1)
    per_panel = sq - np.abs(mean_int) ** 2 / mesh.mass
    return float(np.sqrt(np.sum(np.maximum(per_panel, 0.0))))
