"""Closed-form circle machinery: Mie reference solution, operator mode
eigenvalues, and the exterior Dirichlet-to-Neumann symbol.

The boundary integral operators diagonalize in the Fourier basis on a circle.
Mode eigenvalues here are *quadrature-defined*: the kernel is integrated
against e^{in\theta} with a spectrally-accurate periodic rule (trapezoid for
the smooth part, the Martensen/Kussmaul weights for the ln(4 sin^2(t/2))
part), which makes the table immune to sign/2pi convention drift.  The closed
forms ((i pi a/2) J_n H_n for the single layer, etc.) are asserted against the
table in the test suite, not used to build it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import hankel1, j0, j1, jv, y0, y1

from .errors import CapacityError, DomainError, PrecisionError
from .specfun import EULER_GAMMA_CONST, hankel_h1

_TABLE_CACHE = {}
_TABLE_CACHE_MAX = 8


def n_modes_for(k: float, a: float = 1.0) -> int:
    """Mode cap: ka plus a tail covering the Hankel transition region."""
    ka = k * a
    return int(np.ceil(ka + 20.0 * ka ** (1.0 / 3.0) + 40.0))


def _kress_weights(m: int):
    """Weights R_j on the 2m-point trapezoid grid t_j = pi j / m for
    int_0^{2pi} ln(4 sin^2(t/2)) f(t) dt."""
    j = np.arange(2 * m)
    tj = np.pi * j / m
    ell = np.arange(1, m)
    R = -(2 * np.pi / m) * (np.cos(np.outer(tj, ell)) / ell).sum(axis=1)
    R -= (np.pi / m**2) * np.cos(m * tj)
    return tj, R


@dataclass(frozen=True)
class ModeTable:
    """Per-mode data for the circle of radius a at wavenumber k.

    Arrays are indexed by n = 0..n_max; negative orders follow by the
    conjugate-mode symmetry entry(-n) = entry(n).
    """

    k: float
    a: float
    n_max: int
    slp: np.ndarray
    dlp: np.ndarray
    dtn: np.ndarray

    def eigenvalue(self, kind: str, n: int) -> complex:
        arr = {"SLP": self.slp, "DLP": self.dlp}.get(kind)
        if arr is None:
            raise DomainError(f"no mode eigenvalues for kind '{kind}'")
        if abs(n) > self.n_max:
            raise CapacityError(f"|n|={abs(n)} beyond table cap {self.n_max}")
        return complex(arr[abs(n)])

    def dtn_value(self, n: int) -> complex:
        if abs(n) > self.n_max:
            raise CapacityError(f"|n|={abs(n)} beyond table cap {self.n_max}")
        return complex(self.dtn[abs(n)])

    def cfie_values(self, eta: complex) -> np.ndarray:
        """1/2 + lambda_n^{D'} - i eta lambda_n^S for n = 0..n_max
        (D' = D on the circle)."""
        return 0.5 + self.dlp - 1j * eta * self.slp


def mode_table(k: float, a: float = 1.0) -> ModeTable:
    """Build (and cache) the mode table by periodic quadrature + FFT."""
    key = (float(k), float(a))
    hit = _TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    if k <= 0 or a <= 0:
        raise DomainError("k and a must be positive")
    n_max = n_modes_for(k, a)
    m = n_max + int(np.ceil(k * a)) + 64
    tj, R = _kress_weights(m)
    r = 2.0 * a * np.abs(np.sin(0.5 * tj))
    z = k * r
    z_safe = z.copy()
    z_safe[0] = 1.0  # keeps Y_0/Y_1 finite at t=0; those values are patched
    log_term = np.log(4.0 * np.sin(0.5 * tj) ** 2 + (tj == 0))

    # SLP kernel split: Phi = ln(4 sin^2(t/2)) * c1 + c2
    c1_s = -(1.0 / (4 * np.pi)) * j0(z)
    c2_s = 0.25j * (j0(z_safe) + 1j * y0(z_safe)) - log_term * c1_s
    c2_s[0] = 0.25j - (np.log(0.5 * k * a) + EULER_GAMMA_CONST) / (2 * np.pi)

    # DLP kernel on the circle: (ik/4) H_1(kr) <x-y, n(y)>/r with
    # <x-y, n(y)> = -r^2/(2a); log coefficient k r J_1(kr) / (8 pi a).
    c1_d = z * j1(z) / (8 * np.pi * a)
    c2_d = (0.25j * k) * (j1(z_safe) + 1j * y1(z_safe)) * (-r / (2 * a)) - log_term * c1_d
    c2_d[0] = -1.0 / (4 * np.pi * a)

    trap_w = np.pi / m
    # lambda_n = a * sum_j [R_j c1_j + trap_w c2_j] e^{i n t_j}; the sum over
    # the 2m-grid against e^{+i n t_j} is 2m * ifft evaluated at index n.
    lam_s = a * 2 * m * np.fft.ifft(R * c1_s + trap_w * c2_s)
    lam_d = a * 2 * m * np.fft.ifft(R * c1_d + trap_w * c2_d)

    dtn = np.empty(n_max + 1, dtype=complex)
    for n in range(n_max + 1):
        dtn[n] = dtn_ratio(n, k * a) / a  # DtN of the radius-a circle
    table = ModeTable(k=float(k), a=float(a), n_max=n_max,
                      slp=lam_s[: n_max + 1].copy(), dlp=lam_d[: n_max + 1].copy(),
                      dtn=dtn)
    if len(_TABLE_CACHE) >= _TABLE_CACHE_MAX:
        _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
    _TABLE_CACHE[key] = table
    return table


def circle_mode_eigenvalue(kind: str, n: int, k: float, a: float = 1.0) -> complex:
    """Quadrature-defined eigenvalue of the operator on e^{in theta}."""
    table = mode_table(k, a)
    lam = table.eigenvalue(kind, n)
    if not np.isfinite(lam):
        raise PrecisionError(f"mode quadrature failed for {kind}, n={n}")
    return lam


def mie_normal_derivative(k: float, a: float, theta_list) -> np.ndarray:
    """Normal derivative of the total field for the sound-soft circle.

    Plane wave incidence from direction (1, 0):

        v(theta) = -(2i/(pi a)) sum_n i^n e^{in theta} / H_n^(1)(ka),

    truncated at n_modes_for(k, a) where the terms are below 1e-12 relative.
    """
    if k <= 0 or a <= 0:
        raise DomainError("k and a must be positive")
    theta = np.asarray(theta_list, dtype=float)
    ka = k * a
    n_max = n_modes_for(k, a)
    inv_h = np.zeros(n_max + 1, dtype=complex)
    for n in range(n_max + 1):
        h = hankel1(n, ka)
        if not np.isfinite(h.real) or not np.isfinite(h.imag):
            break  # |H_n| overflowed: the remaining terms are zero
        inv_h[n] = 1.0 / h
    scale = np.abs(inv_h).max()
    if np.abs(inv_h[n_max]) > 1e-11 * scale:
        raise PrecisionError("Mie series truncation tail above 1e-10")
    i_pow = 1j ** np.arange(n_max + 1)
    acc = np.full(theta.shape, i_pow[0] * inv_h[0], dtype=complex)
    for n in range(1, n_max + 1):
        if inv_h[n] == 0.0:
            break
        acc += 2.0 * i_pow[n] * inv_h[n] * np.cos(n * theta)
    return -(2j / (np.pi * a)) * acc


def mie_boundary_trace_terms(k: float, a: float, theta_list):
    """Incident and scattered traces on r = a from the Mie coefficients,
    summed independently (their sum vanishes for the sound-soft circle)."""
    theta = np.asarray(theta_list, dtype=float)
    ka = k * a
    n_max = n_modes_for(k, a)
    ui = np.zeros(theta.shape, dtype=complex)
    us = np.zeros(theta.shape, dtype=complex)
    for n in range(n_max + 1):
        jn = jv(n, ka)
        h = hankel1(n, ka)
        mode = np.cos(n * theta) * (2.0 if n else 1.0)
        ui += (1j**n) * jn * mode
        if np.isfinite(h.real) and np.isfinite(h.imag):
            us += (1j**n) * ((-jn / h) * h) * mode
        else:
            us += (1j**n) * (-jn) * mode
    return ui, us


def dtn_ratio(n: int, k: float) -> complex:
    """Exterior DtN symbol on the unit circle: k H_n'(k) / H_n(k)."""
    hv = hankel_h1(n, k)
    return k * hv.derivative / hv.value


def eta_sign_mode_comparison(k: float, fraction: float) -> dict:
    """Share of modes |n| <= fraction*k whose DtN value is closer to +ik
    than to -ik (each |n| counted once; the symbol is even in n)."""
    if not 0.0 < fraction < 1.0:
        raise DomainError("fraction must lie in (0, 1)")
    n_top = int(np.floor(fraction * k))
    closer = 0
    worst = 0.0
    for n in range(n_top + 1):
        ratio = dtn_ratio(n, k)
        d_plus = abs(ratio - 1j * k)
        d_minus = abs(ratio + 1j * k)
        if d_plus < d_minus:
            closer += 1
        worst = max(worst, d_plus / k)
    count = n_top + 1
    return {
        "k": float(k),
        "fraction": float(fraction),
        "modes": count,
        "share": closer / count,
        "max_relerr_ik": worst,
    }


def mode_table_csv(table: ModeTable, path: str) -> str:
    """Export the table as CSV over n = -n_max..n_max."""
    with open(path, "w") as f:
        f.write("n,slp_re,slp_im,dlp_re,dlp_im,dtn_re,dtn_im\n")
        for n in range(-table.n_max, table.n_max + 1):
            s = table.eigenvalue("SLP", n)
            d = table.eigenvalue("DLP", n)
            t = table.dtn_value(n)
            f.write(f"{n},{s.real:.17g},{s.imag:.17g},{d.real:.17g},"
                    f"{d.imag:.17g},{t.real:.17g},{t.imag:.17g}\n")
    return path
