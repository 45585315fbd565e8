"""Cylindrical Bessel/Hankel functions and the 2-D Helmholtz kernels.

Backed by scipy.special (cephes/amos) behind small wrappers that pin down the
conventions used everywhere else: integer orders with the symmetry
``C_{-n} = (-1)^n C_n``, Hankel derivatives via the recurrence
``H'_n = H_{n-1} - (n/x) H_n``, and the fundamental solution

    Phi_k(x, y) = (i/4) H_0^(1)(k |x - y|)

with its normal-derivative kernels.  All functions accept scalars or numpy
arrays in the argument and broadcast.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .errors import CapacityError, DomainError, SingularityError

# Order cap: supports wavenumbers up to k_max = 600 (the dof cap of the
# assembly module at ten points per wavelength on the unit circle).
K_MAX = 600.0
N_MAX = int(np.ceil(2 * K_MAX)) + 200

EULER_GAMMA_CONST = 0.5772156649015328606


@dataclass(frozen=True)
class HankelValue:
    """H_n^(1)(x) together with its derivative."""

    order: int
    argument: float
    value: complex
    derivative: complex


def _check_order_arg(n, x):
    n = int(n)
    if abs(n) > N_MAX:
        raise CapacityError(f"order |{n}| exceeds cap {N_MAX}")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or not np.all(np.isfinite(x)):
        raise DomainError("argument must be positive and finite")
    return n, x


def bessel_j(n: int, x):
    """Bessel function J_n(x), integer order, x > 0."""
    n, x = _check_order_arg(n, x)
    sign = -1.0 if (n < 0 and n % 2) else 1.0
    out = sign * sp.jv(abs(n), x)
    return out if out.ndim else float(out)


def bessel_y(n: int, x):
    """Bessel function Y_n(x), integer order, x > 0."""
    n, x = _check_order_arg(n, x)
    sign = -1.0 if (n < 0 and n % 2) else 1.0
    out = sign * sp.yv(abs(n), x)
    return out if out.ndim else float(out)


def hankel_h1(n: int, x) -> HankelValue:
    """H_n^(1)(x) = J_n(x) + i Y_n(x) with its derivative.

    The derivative is evaluated through ``H'_n = H_{n-1} - (n/x) H_n`` so the
    Wronskian J_n H'_n - J'_n H_n = 2i/(pi x) holds to roundoff.
    """
    n, x = _check_order_arg(n, x)
    m = abs(n)
    h = sp.jv(m, x) + 1j * sp.yv(m, x)
    h_prev = sp.jv(m - 1, x) + 1j * sp.yv(m - 1, x)
    dh = h_prev - (m / x) * h
    if n < 0 and n % 2:
        h, dh = -h, -dh
    if h.ndim:
        raise DomainError("hankel_h1 takes a scalar argument")
    return HankelValue(order=n, argument=float(x), value=complex(h), derivative=complex(dh))


def green_2d(k: float, r):
    """Fundamental solution (i/4) H_0^(1)(k r); depends only on k*r."""
    if k <= 0.0:
        raise DomainError("wavenumber must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r == 0.0):
        raise SingularityError("green_2d at r = 0; use the singular quadrature path")
    if np.any(r < 0.0):
        raise DomainError("distance must be nonnegative")
    z = k * r
    out = 0.25j * (sp.j0(z) + 1j * sp.y0(z))
    return out if out.ndim else complex(out)


def _h1_fast(z):
    """H_1^(1)(z) for positive array z (cephes j1/y1, ~3x faster than amos)."""
    return sp.j1(z) + 1j * sp.y1(z)


def dlp_kernel_2d(k: float, x, y, n_y):
    """Double-layer kernel dPhi_k/dn(y) = (ik/4) H_1(kr) <x-y, n_y> / r.

    x, y: points with trailing axis 2; n_y: unit normal(s) at y.
    """
    if k <= 0.0:
        raise DomainError("wavenumber must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_y = np.asarray(n_y, dtype=float)
    d = x - y
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0.0):
        raise SingularityError("dlp_kernel_2d at x = y")
    dot = np.sum(d * n_y, axis=-1)
    out = (0.25j * k) * _h1_fast(k * r) * dot / r
    return out if np.ndim(out) else complex(out)


def adlp_kernel_2d(k: float, x, y, n_x):
    """Adjoint double-layer kernel dPhi_k/dn(x) = -(ik/4) H_1(kr) <x-y, n_x> / r.

    Satisfies adlp_kernel_2d(k, x, y, n) == dlp_kernel_2d(k, y, x, n).
    """
    if k <= 0.0:
        raise DomainError("wavenumber must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_x = np.asarray(n_x, dtype=float)
    d = x - y
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0.0):
        raise SingularityError("adlp_kernel_2d at x = y")
    dot = np.sum(d * n_x, axis=-1)
    out = (-0.25j * k) * _h1_fast(k * r) * dot / r
    return out if np.ndim(out) else complex(out)


def green_3d_stub(k: float, r):
    """3-D fundamental solution exp(ikr)/(4 pi r). Documented stub only:
    nothing else in the package consumes it."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise SingularityError("green_3d at r = 0")
    return np.exp(1j * k * r) / (4.0 * np.pi * r)
