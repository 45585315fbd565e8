"""Special-function layer: series oracles, Wronskian, kernel identities."""

import math

import numpy as np
import pytest

from helmbem import specfun
from helmbem.errors import CapacityError, DomainError, SingularityError

EULER_GAMMA = 0.5772156649015328606


# ---------------------------------------------------------------------------
# independent power-series oracles (small argument)
# ---------------------------------------------------------------------------

def j_series(n, x, terms=40):
    total = 0.0
    for m in range(terms):
        total += (-1) ** m * (0.5 * x) ** (n + 2 * m) / (
            math.factorial(m) * math.factorial(n + m))
    return total


def _harmonic(m):
    return sum(1.0 / j for j in range(1, m + 1))


def y0_series(x, terms=40):
    s = 0.0
    for m in range(1, terms):
        s += (-1) ** (m + 1) * _harmonic(m) * (0.25 * x * x) ** m / math.factorial(m) ** 2
    return (2 / math.pi) * ((math.log(0.5 * x) + EULER_GAMMA) * j_series(0, x) + s)


def y1_series(x, terms=40):
    s = 0.0
    for m in range(terms):
        s += ((-1) ** m * (_harmonic(m) + _harmonic(m + 1))
              * (0.5 * x) ** (2 * m + 1) / (math.factorial(m) * math.factorial(m + 1)))
    return ((2 / math.pi) * (math.log(0.5 * x) + EULER_GAMMA) * j_series(1, x)
            - 2 / (math.pi * x) - s / math.pi)


def test_bessel_j_series_oracle():
    # frozen values computed from the power series at x = 1
    assert j_series(0, 1.0) == pytest.approx(0.7651976866, abs=1e-10)
    assert j_series(1, 1.0) == pytest.approx(0.4400505857, abs=1e-10)
    assert specfun.bessel_j(0, 1.0) == pytest.approx(j_series(0, 1.0), rel=1e-12)
    assert specfun.bessel_j(1, 1.0) == pytest.approx(j_series(1, 1.0), rel=1e-12)
    for n in (0, 1, 2, 5, 9):
        for x in (0.3, 1.0, 2.5, 5.0):
            assert specfun.bessel_j(n, x) == pytest.approx(j_series(n, x), rel=1e-10)


def test_bessel_j_small_argument_limit():
    assert specfun.bessel_j(0, 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_bessel_y_series_oracle():
    assert specfun.bessel_y(0, 1.0) == pytest.approx(y0_series(1.0), rel=1e-10)
    assert specfun.bessel_y(1, 1.0) == pytest.approx(y1_series(1.0), rel=1e-10)
    assert specfun.bessel_y(1, 2.7) == pytest.approx(y1_series(2.7), rel=1e-10)


def test_hankel_value_at_one():
    h = specfun.hankel_h1(0, 1.0)
    assert h.value.real == pytest.approx(0.7651976866, abs=1e-9)
    assert h.value.imag == pytest.approx(0.0882569642, abs=1e-9)
    assert h.value.imag == pytest.approx(y0_series(1.0), rel=1e-9)


def test_hankel_wronskian_forced():
    # J_3 H_3' - J_3' H_3 = 2i/(pi x) at x = 5
    x = 5.0
    h = specfun.hankel_h1(3, x)
    jp = specfun.bessel_j(2, x) - (3 / x) * specfun.bessel_j(3, x)
    w = specfun.bessel_j(3, x) * h.derivative - jp * h.value
    assert w == pytest.approx(2j / (math.pi * x), abs=1e-12)
    assert abs(w - 2j / (5 * math.pi)) < 1e-12
    assert (2 / (5 * math.pi)) == pytest.approx(0.1273239545, abs=1e-10)


@pytest.mark.parametrize("x", [0.5, 1.0, 5.0, 20.0, 100.0])
def test_wronskian_sweep(x):
    for n in range(0, 51):
        h = specfun.hankel_h1(n, x)
        jn = specfun.bessel_j(n, x)
        jp = specfun.bessel_j(n - 1, x) - (n / x) * jn
        w = jn * h.derivative - jp * h.value
        assert abs(w - 2j / (math.pi * x)) <= 1e-9


def test_negative_order_symmetry():
    for n in (1, 2, 5):
        for x in (0.7, 3.0):
            a = specfun.hankel_h1(-n, x)
            b = specfun.hankel_h1(n, x)
            assert a.value == pytest.approx((-1) ** n * b.value, rel=1e-14)


def test_green_values_and_invariances():
    g = specfun.green_2d(1.0, 1.0)
    # (i/4) H_0(1) from the series oracles
    ref = 0.25j * (j_series(0, 1.0) + 1j * y0_series(1.0))
    assert g == pytest.approx(ref, rel=1e-10)
    assert g.real == pytest.approx(-0.0220642410, abs=1e-9)
    assert g.imag == pytest.approx(0.1912994217, abs=1e-9)
    # depends on k, r only through k*r
    assert specfun.green_2d(2.0, 0.5) == pytest.approx(g, rel=1e-15)
    # symmetric in the two points by construction (distance only)
    assert specfun.green_2d(3.0, 1.7) == specfun.green_2d(3.0, 1.7)


def test_green_helmholtz_residual():
    step = 1e-4
    for k in (1.0, 10.0):
        for r in (0.5, 1.0, 2.0):
            x = np.array([r, 0.0])
            y = np.zeros(2)

            def phi(p):
                return specfun.green_2d(k, np.hypot(*(p - y)))

            lap = (phi(x + [step, 0]) + phi(x - [step, 0]) + phi(x + [0, step])
                   + phi(x - [0, step]) - 4 * phi(x)) / step**2
            resid = lap + k * k * phi(x)
            assert abs(resid) <= 1e-4 * abs(phi(x))


@pytest.mark.parametrize("x", [50.0, 80.0, 120.0, 300.0])
def test_hankel_large_argument_asymptotics(x):
    h = specfun.hankel_h1(0, x).value
    lead = math.sqrt(2 / (math.pi * x)) * np.exp(1j * (x - math.pi / 4))
    assert abs(h - lead) <= 0.2 / x**1.5


def test_dtn_asymptotics_hook():
    k = 200.0
    h = specfun.hankel_h1(2, k)
    ratio = k * h.derivative / h.value
    assert abs(ratio / (1j * k) - 1.0) <= 0.05


def test_dlp_kernel_matches_finite_differences():
    rng = np.random.default_rng(7)
    k = 3.0
    delta = 1e-6
    for _ in range(6):
        x = rng.uniform(-1, 1, 2)
        y = x + rng.uniform(0.3, 1.5) * _unit(rng.uniform(0, 2 * np.pi))
        n_y = _unit(rng.uniform(0, 2 * np.pi))
        fd = (specfun.green_2d(k, np.linalg.norm(x - (y + delta * n_y)))
              - specfun.green_2d(k, np.linalg.norm(x - (y - delta * n_y)))) / (2 * delta)
        got = specfun.dlp_kernel_2d(k, x, y, n_y)
        assert abs(got - fd) <= 1e-6 * abs(got)


def test_adlp_kernel_matches_finite_differences():
    rng = np.random.default_rng(11)
    k = 2.0
    delta = 1e-6
    for _ in range(6):
        x = rng.uniform(-1, 1, 2)
        y = x + rng.uniform(0.4, 1.2) * _unit(rng.uniform(0, 2 * np.pi))
        n_x = _unit(rng.uniform(0, 2 * np.pi))
        fd = (specfun.green_2d(k, np.linalg.norm((x + delta * n_x) - y))
              - specfun.green_2d(k, np.linalg.norm((x - delta * n_x) - y))) / (2 * delta)
        got = specfun.adlp_kernel_2d(k, x, y, n_x)
        assert abs(got - fd) <= 1e-6 * abs(got)


def _unit(angle):
    return np.array([math.cos(angle), math.sin(angle)])


def test_dlp_specific_value():
    # k=1, x=(2,0), y=(1,0), n_y=(1,0): kernel = (i/4) H_1(1)
    got = specfun.dlp_kernel_2d(1.0, (2.0, 0.0), (1.0, 0.0), (1.0, 0.0))
    assert got == pytest.approx(0.25j * (0.4400505857 - 0.7812128213j), abs=1e-9)


def test_dlp_tangential_zero():
    assert specfun.dlp_kernel_2d(2.0, (1.0, 0.0), (0.0, 0.0), (0.0, 1.0)) == 0.0
    assert specfun.adlp_kernel_2d(2.0, (1.0, 0.0), (0.0, 0.0), (0.0, 1.0)) == 0.0


def test_adlp_transpose_relation():
    rng = np.random.default_rng(3)
    for _ in range(3):
        x = rng.uniform(-1, 1, 2)
        y = x + np.array([0.9, -0.3])
        n = _unit(rng.uniform(0, 2 * np.pi))
        assert specfun.adlp_kernel_2d(4.0, x, y, n) == pytest.approx(
            specfun.dlp_kernel_2d(4.0, y, x, n), rel=1e-14)


def test_domain_and_capacity_errors():
    with pytest.raises(DomainError):
        specfun.bessel_j(0, -1.0)
    with pytest.raises(DomainError):
        specfun.bessel_j(0, 0.0)
    with pytest.raises(CapacityError):
        specfun.bessel_j(specfun.N_MAX + 1, 1.0)
    with pytest.raises(SingularityError):
        specfun.green_2d(1.0, 0.0)
    with pytest.raises(SingularityError):
        specfun.dlp_kernel_2d(1.0, (1.0, 1.0), (1.0, 1.0), (1.0, 0.0))
    with pytest.raises(DomainError):
        specfun.green_2d(-1.0, 1.0)
