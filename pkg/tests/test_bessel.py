import math

import numpy as np
import pytest
from scipy import special

from shtk.operators import (BesselError, bessel_heat_kernel, bessel_i,
                            bessel_i_asymptotic, bessel_i_reduced,
                            bessel_i_series, bessel_ive, bessel_riesz_kernel_1d,
                            bessel_riesz_kernel_hd, bracket,
                            riesz_principal_constant)
from shtk.operators.bessel import Z_STAR


def paired(kernel, x, y):
    """Kernel values at the matched pairs (x[i], y[i])."""
    return np.array([kernel(x[i:i + 1], y[i:i + 1])[0, 0] for i in range(len(x))])


# ---------------------------------------------------------------- I_nu


def test_bracket_values():
    assert bracket(0.3, 0) == 1.0
    # [nu, 1] = (4 nu^2 - 1) / 4
    assert bracket(1.5, 1) == pytest.approx((4 * 2.25 - 1) / 4)
    # half-integer orders terminate
    assert bracket(0.5, 1) == 0.0


def test_small_argument_limit():
    got = bessel_i_reduced(0.5, 1e-4)
    assert got == pytest.approx(1 / (2 ** 0.5 * math.gamma(1.5)), rel=1e-6)


@pytest.mark.parametrize("z", [0.5, 2.0, 8.0, 30.0])
def test_half_order_closed_form(z):
    assert bessel_i(0.5, z) == pytest.approx(
        math.sqrt(2 / (math.pi * z)) * math.sinh(z), rel=1e-10)
    assert bessel_i(-0.5, z) == pytest.approx(
        math.sqrt(2 / (math.pi * z)) * math.cosh(z), rel=1e-10)


def test_large_argument_leading_term():
    z = 50.0
    ratio = bessel_i(1.5, z) / (math.exp(z) / math.sqrt(2 * math.pi * z))
    # the expansion of I_{3/2} stops after one correction: 1 - [1.5, 1]/(2z)
    assert ratio == pytest.approx(1 - bracket(1.5, 1) / (2 * z), rel=1e-12)
    assert abs(ratio - 1) <= 2.0 / z


@pytest.mark.parametrize("nu", [-0.4, 0.0, 0.5, 1.5, 3.0])
def test_branches_agree_on_crossover_band(nu):
    z = np.linspace(Z_STAR - 5, Z_STAR + 5, 21)
    s = bessel_i_series(nu, z)
    a = bessel_i_asymptotic(nu, z)
    assert np.max(np.abs(s - a) / np.abs(s)) < 1e-8


@pytest.mark.parametrize("nu", [-0.7, -0.2, 0.0, 0.3, 1.0, 2.5, 6.0])
def test_scaled_bessel_matches_reference(nu):
    z = np.geomspace(1e-3, 400, 60)
    assert np.allclose(bessel_ive(nu, z), special.ive(nu, z), rtol=1e-9, atol=0)


def test_domain_errors():
    with pytest.raises(BesselError):
        bessel_i(0.5, 0.0)
    with pytest.raises(BesselError):
        bessel_i(-1.0, 1.0)
    with pytest.raises(BesselError):
        bessel_heat_kernel(1.0, 0.0, 1.0, 1.0)


# ---------------------------------------------------------------- heat kernel


def test_heat_kernel_symmetry_and_positivity():
    rng = np.random.default_rng(0)
    t, x, y = rng.uniform(0.05, 3, (3, 20))
    for lam in (0.2, 1.0, 2.5):
        w1 = bessel_heat_kernel(lam, t, x, y)
        assert np.all(w1 > 0)
        assert np.allclose(w1, bessel_heat_kernel(lam, t, y, x), rtol=1e-13)


def test_heat_kernel_matches_definition():
    rng = np.random.default_rng(1)
    t, x, y = rng.uniform(0.1, 2, (3, 10))
    lam = 0.8
    ref = ((x * y) ** (0.5 - lam) / (2 * t) * np.exp(-(x ** 2 + y ** 2) / (4 * t))
           * special.iv(lam - 0.5, x * y / (2 * t)))
    assert np.allclose(bessel_heat_kernel(lam, t, x, y), ref, rtol=1e-10)


def test_heat_kernel_lambda_zero_is_reflected_gauss():
    pts = [(0.3, 0.5, 0.7), (1.0, 1.0, 2.0), (0.2, 2.0, 0.1), (5.0, 0.4, 3.0),
           (0.05, 1.5, 1.4)]
    for t, x, y in pts:
        ref = (math.exp(-(x - y) ** 2 / (4 * t)) + math.exp(-(x + y) ** 2 / (4 * t))) \
            / math.sqrt(4 * math.pi * t)
        assert bessel_heat_kernel(0.0, t, x, y) == pytest.approx(ref, rel=1e-10)


def test_heat_kernel_decays_for_large_t():
    vals = bessel_heat_kernel(1.0, np.array([1e2, 1e4, 1e6]), 1.0, 2.0)
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-8


# ---------------------------------------------------------------- Riesz kernel, 1-D


@pytest.mark.parametrize("lam", [0.5, 1.0, 1.5])
def test_riesz_1d_near_diagonal(lam):
    x, y = 1.0, 1.01
    r = bessel_riesz_kernel_1d(lam, [x], [y])[0, 0]
    assert r * math.pi * (x * y) ** lam * (y - x) == pytest.approx(1.0, abs=0.1)


def test_riesz_1d_antisymmetric_near_diagonal():
    rng = np.random.default_rng(2)
    x = rng.uniform(0.2, 2, 20)
    y = x * (1 + rng.uniform(0.005, 0.05, 20))
    kern = lambda a, b: bessel_riesz_kernel_1d(0.7, a, b)
    r_xy = paired(kern, x, y)
    r_yx = paired(kern, y, x)
    assert np.all(np.sign(r_xy) == -np.sign(r_yx))


@pytest.mark.parametrize("lam", [0.3, 1.0, 2.0])
def test_riesz_1d_off_diagonal_floor(lam):
    x = np.geomspace(0.01, 2, 15)
    y = 4 * x
    r = np.diag(bessel_riesz_kernel_1d(lam, x, y))
    fit = r / (x * y ** (-2 * lam - 2))
    assert np.all(fit > 0)
    # the fitted floor is scale free: the kernel is homogeneous of degree -2 lam - 1
    assert fit.max() / fit.min() < 1 + 1e-5


# ---------------------------------------------------------------- Riesz kernel, half-space


def _pairs(n, rng, count):
    y = np.column_stack([rng.uniform(-1, 1, (count, n)),
                         rng.uniform(0.5, 2.0, count)])
    return y


def _budget(n, lam, j, x, y):
    d = np.linalg.norm(x - y, axis=1)
    xl, yl = x[:, -1], y[:, -1]
    dj = np.abs(x[:, j - 1] - y[:, j - 1])
    return dj / ((xl * yl) ** (lam + 1) * d ** n)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("lam", [0.5, 1.0])
@pytest.mark.parametrize("scale", [0.1, 0.01])
def test_riesz_hd_principal_term(n, lam, scale):
    rng = np.random.default_rng(10 * n + int(4 * lam))
    y = _pairs(n, rng, 20)
    step = rng.normal(size=(20, n + 1))
    step /= np.linalg.norm(step, axis=1)[:, None]
    x = y + scale * y[:, -1:] * step
    j = 1
    r = paired(lambda a, b: bessel_riesz_kernel_hd(n, lam, j, a, b), x, y)
    d = np.linalg.norm(x - y, axis=1)
    principal = (riesz_principal_constant(n) * (y[:, j - 1] - x[:, j - 1])
                 / ((x[:, -1] * y[:, -1]) ** lam * d ** (n + 2)))
    assert np.max(np.abs(r - principal) / _budget(n, lam, j, x, y)) <= 0.02


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("lam", [0.5, 1.0])
def test_riesz_hd_sign_constancy_region(n, lam):
    rng = np.random.default_rng(100 + n)
    y = _pairs(n, rng, 100)
    x = y.copy()
    x[:, :n] += rng.uniform(-1, 1, (100, n)) * y[:, -1:]
    x[:, -1] = rng.uniform(0.01, 0.25, 100) * y[:, -1]
    r = paired(lambda a, b: bessel_riesz_kernel_hd(n, lam, 1, a, b), x, y)
    assert np.all(np.sign(r * (y[:, 0] - x[:, 0])) == 1)


def test_riesz_hd_coordinate_swap():
    rng = np.random.default_rng(5)
    y = _pairs(2, rng, 10)
    x = y + rng.uniform(-0.3, 0.3, y.shape)
    x[:, -1] = np.abs(x[:, -1]) + 0.1
    sw = [1, 0, 2]
    r1 = bessel_riesz_kernel_hd(2, 0.7, 1, x, y)
    r2 = bessel_riesz_kernel_hd(2, 0.7, 2, x[:, sw], y[:, sw])
    assert r1.shape == (10, 10)
    assert np.allclose(r1, r2, rtol=1e-6)


def test_principal_constant_one_dimensional_case():
    assert riesz_principal_constant(0) == pytest.approx(1 / math.pi)
