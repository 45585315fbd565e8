"""Quasimode sharpness probes on a flat segment and a parabola arc.

The probe density is an oscillatory cutoff u = e^{ik x1} chi(.) glancing
along the arc; applying the single-layer operator (or its x1-derivative) and
measuring over a window U downstream of the support exhibits the k-exponents
of the operator-norm lower bounds:

    flat:      ||S_k u|| / ||u||  ~  k^{-1/2},   derivative  ~  k^{+1/2}
    parabola:  ||S_k u|| / ||u||  ~  k^{-2/3},   derivative  ~  k^{+1/3}

All integrals are non-singular (the window is separated from the support by
the margin M); quadrature is composite Gauss refined until the ratio moves by
less than RATIO_RTOL.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PrecisionError
from .quadrature import composite_gauss
from .specfun import green_2d

RATIO_RTOL = 1e-3
_MAX_REFINE = 7
_SRC_PPW = 20.0  # points per wavelength on the support, before refinement

THEORY_SLOPES = {
    ("segment", False): -0.5,
    ("segment", True): +0.5,
    ("parabola", False): -2.0 / 3.0,
    ("parabola", True): +1.0 / 3.0,
}


def bump(t):
    """Smooth cutoff: 1 on [-1, 1], 0 outside (-2, 2), C-infinity.

    Built from the standard exp(-1/x) partition step on the shoulders; the
    exact shape does not affect the fitted exponents.
    """
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros(t.shape)
    out[t <= 1.0] = 1.0
    mid = (t > 1.0) & (t < 2.0)
    u = t[mid] - 1.0
    b1 = np.exp(-1.0 / (1.0 - u))
    b0 = np.exp(-1.0 / u)
    out[mid] = b1 / (b0 + b1)
    return out


@dataclass(frozen=True)
class QuasimodeProbe:
    """Geometry, cutoff scaling, and measurement window of one probe."""

    geometry: str
    epsilon: float
    M: float
    k: float
    gamma1: float = field(init=False)
    gamma2: float = field(init=False)
    support: tuple = field(init=False)
    window: tuple = field(init=False)

    def __post_init__(self):
        if self.geometry not in ("segment", "parabola"):
            raise DomainError("probe geometry must be 'segment' or 'parabola'")
        if self.k < 8.0:
            raise DomainError("probe needs k >= 8")
        if self.geometry == "segment":
            g1, g2 = 0.0, 0.5
            half = 2.0 * self.epsilon
            u_lo = self.M * self.epsilon
            u_hi = 2.0 * self.M * self.epsilon
        else:
            g1, g2 = 1.0 / 3.0, 2.0 / 3.0
            scale = self.epsilon * self.k ** (-1.0 / 3.0)
            half = 2.0 * scale
            u_lo = self.M * scale
            u_hi = 2.0 * self.M * scale
        if u_hi >= 1.0 or half >= 1.0:
            raise DomainError("support/window exceed the arc (reduce epsilon or M)")
        # the |x''| cutoff exponent gamma2 is vacuous in 2-D (no x'' variable)
        object.__setattr__(self, "gamma1", g1)
        object.__setattr__(self, "gamma2", g2)
        object.__setattr__(self, "support", (-half, half))
        object.__setattr__(self, "window", (u_lo, u_hi))

    def cutoff_arg(self, x1):
        if self.geometry == "segment":
            return x1 / self.epsilon
        return x1 * self.k ** (1.0 / 3.0) / self.epsilon

    def curve_point(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.geometry == "segment":
            return np.stack([x1, np.zeros_like(x1)], axis=-1)
        return np.stack([x1, x1 * x1], axis=-1)

    def arc_jacobian(self, x1):
        if self.geometry == "segment":
            return np.ones_like(np.asarray(x1, dtype=float))
        return np.sqrt(1.0 + 4.0 * np.asarray(x1, dtype=float) ** 2)


def _apply_once(probe: QuasimodeProbe, derivative: bool, n_src: int, n_tgt: int):
    k = probe.k
    ys, wy = composite_gauss(*probe.support, n_src, 12)
    u = np.exp(1j * k * ys) * bump(probe.cutoff_arg(ys))
    jac_y = probe.arc_jacobian(ys)
    u_norm = math.sqrt(float(np.sum(wy * jac_y * np.abs(u) ** 2)))

    xs, wx = composite_gauss(*probe.window, n_tgt, 12)
    X = probe.curve_point(xs)
    Y = probe.curve_point(ys)
    d = X[:, None, :] - Y[None, :, :]
    r = np.sqrt(np.sum(d * d, axis=-1))
    if derivative:
        # d/dx1 of (i/4) H_0(kr) with fixed direction e1 (analytic kernel derivative)
        from scipy.special import j1, y1
        kern = (-0.25j * k) * (j1(k * r) + 1j * y1(k * r)) * d[..., 0] / r
    else:
        kern = green_2d(k, r)
    vals = kern @ (wy * jac_y * u)
    out_norm = math.sqrt(float(np.sum(wx * probe.arc_jacobian(xs) * np.abs(vals) ** 2)))
    return out_norm / u_norm


def apply_slp_probe(probe: QuasimodeProbe, derivative: bool = False) -> dict:
    """Measured ratio ||S_k u||_{L2(U)} / ||u||_{L2(Gamma)} (or the
    x1-derivative variant), with quadrature refined to RATIO_RTOL."""
    supp_len = probe.support[1] - probe.support[0]
    n_src = max(16, int(math.ceil(_SRC_PPW * probe.k * supp_len / (2 * math.pi) / 12.0)))
    n_tgt = max(8, n_src // 2)  # >= 64 evaluation points in the window
    ratio = _apply_once(probe, derivative, n_src, n_tgt)
    for _ in range(_MAX_REFINE):
        n_src *= 2
        n_tgt *= 2
        nxt = _apply_once(probe, derivative, n_src, n_tgt)
        drift = abs(nxt - ratio) / abs(nxt)
        ratio = nxt
        if drift < RATIO_RTOL:
            return {"ratio": ratio, "n_src_panels": n_src, "n_tgt_panels": n_tgt,
                    "geometry": probe.geometry, "k": probe.k,
                    "derivative": bool(derivative)}
    raise PrecisionError("probe quadrature did not stabilize under refinement")


def probe_exponent_fit(geometry: str, derivative: bool, k_list,
                       epsilon: float = 0.1, M: float = 4.0) -> dict:
    """OLS fit of log(ratio) against log(k) over a geometric k list."""
    ks = [float(k) for k in k_list]
    if len(ks) < 4:
        raise DomainError("need at least 4 wavenumbers for an exponent fit")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise DomainError("k_list must be strictly increasing")
    ratios = []
    for k in ks:
        probe = QuasimodeProbe(geometry=geometry, epsilon=epsilon, M=M, k=k)
        ratios.append(apply_slp_probe(probe, derivative)["ratio"])
    x = np.log(np.array(ks))
    y = np.log(np.array(ratios))
    slope, stderr, intercept = _ols(x, y)
    return {"geometry": geometry, "derivative": bool(derivative),
            "k_list": ks, "ratios": ratios, "slope": slope,
            "stderr": stderr, "intercept": intercept,
            "theory": THEORY_SLOPES[(geometry, bool(derivative))]}


def _ols(x, y):
    n = len(x)
    xb, yb = x.mean(), y.mean()
    sxx = float(np.sum((x - xb) ** 2))
    slope = float(np.sum((x - xb) * (y - yb)) / sxx)
    intercept = float(yb - slope * xb)
    if n > 2:
        resid = y - (intercept + slope * x)
        stderr = math.sqrt(float(np.sum(resid**2)) / (n - 2) / sxx)
    else:
        stderr = 0.0
    return slope, stderr, intercept


def probe_sweep_csv(fits, path: str) -> str:
    """CSV of (k, ratio, geometry, derivative) rows across one or more fits."""
    with open(path, "w") as f:
        f.write("k,ratio,geometry,derivative\n")
        for fit in fits:
            for k, ratio in zip(fit["k_list"], fit["ratios"]):
                f.write(f"{k:.17g},{ratio:.17g},{fit['geometry']},{int(fit['derivative'])}\n")
    return path
