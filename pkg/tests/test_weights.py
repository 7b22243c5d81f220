import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shtk.space import BallFamily, ball, generate, upper_dimension
from shtk.weights import (Weight, WeightError, ainfty_constant,
                          ainfty_level_set_check, ap_constant, bloom_root,
                          bloom_weight, parse_weight, power_weight,
                          reverse_holder_check, weighted_measure)

from conftest import point_space, uniform_grid


def all_balls(sp):
    out = []
    for c in range(sp.n):
        for r in np.unique(sp.dist[c]):
            out.append(np.flatnonzero(sp.dist[c] <= r))
    return out


def brute_ap(sp, w, p):
    best = 0.0
    for m in all_balls(sp):
        mu = sp.masses[m]
        a = np.sum(w[m] * mu) / mu.sum()
        b = np.sum(w[m] ** (-1 / (p - 1)) * mu) / mu.sum()
        best = max(best, a * b ** (p - 1))
    return best


def test_ap_unit_weight_is_one(line64):
    assert ap_constant(line64, np.ones(64), 2) == 1.0


def test_ap_p2_symmetric_under_inverse(line64):
    w = power_weight(line64, 0.5).values
    assert ap_constant(line64, w, 2) == pytest.approx(ap_constant(line64, 1 / w, 2))


def test_ap_eight_point_grid_brute_force():
    sp = uniform_grid(8)
    w = sp.coords[:, 0] + 0.1
    assert ap_constant(sp, w, 2) == pytest.approx(brute_ap(sp, w, 2), rel=1e-12)
    assert ap_constant(sp, w, 3) == pytest.approx(brute_ap(sp, w, 3), rel=1e-12)


def test_ap_rejects_p_one(line64):
    with pytest.raises(WeightError):
        ap_constant(line64, np.ones(64), 1.0)


def test_ainfty_examples(line64):
    assert ainfty_constant(line64, np.full(64, 3.0)) == pytest.approx(1.0, abs=1e-12)
    sp = point_space([0.0, 1.0], [0.5, 0.5])
    fam = BallFamily.from_balls(sp, [ball(sp, 0, 2.0)])
    assert ainfty_constant(sp, np.array([1.0, 4.0]), fam) == pytest.approx(1.25)


def test_ainfty_subfamily_monotone(line64):
    w = power_weight(line64, -0.5).values
    full = BallFamily.all(line64)
    sub = full.subfamily(np.arange(0, len(full), 7))
    assert ainfty_constant(line64, w, sub) <= ainfty_constant(line64, w, full)


def test_bloom_examples(line64):
    l1 = power_weight(line64, 0.4)
    assert np.allclose(bloom_weight(l1, l1, 2).values, 1.0)
    assert np.allclose(bloom_weight(l1, np.ones(64), 2).values, np.sqrt(l1.values))
    nu = bloom_weight(l1, power_weight(line64, -0.4), 2)
    assert np.allclose(nu.values, power_weight(line64, 0.4).values)
    assert np.allclose(bloom_root(l1, power_weight(line64, -0.4), 2, 2).values,
                       power_weight(line64, 0.2).values)


def test_reverse_holder_examples():
    sp = uniform_grid(16)
    assert reverse_holder_check(sp, np.ones(16), 0.5) == 1.0
    singles = BallFamily.from_radii(sp, np.arange(16), np.full(16, 1e-9))
    w = sp.coords[:, 0] + 0.1
    assert reverse_holder_check(sp, w, 0.5, singles) == pytest.approx(1.0)
    best = 0.0
    for m in all_balls(sp):
        mu = sp.masses[m]
        lhs = np.sum(w[m] * mu) / mu.sum()
        rhs = (np.sum(np.sqrt(w[m]) * mu) / mu.sum()) ** 2
        best = max(best, lhs / rhs)
    assert reverse_holder_check(sp, w, 0.5) == pytest.approx(best, rel=1e-12)


def test_weighted_measure_examples(line64):
    assert weighted_measure(line64, np.ones(64), []) == 0.0
    idx = np.arange(0, 64, 3)
    assert weighted_measure(line64, np.ones(64), idx) == pytest.approx(
        line64.masses[idx].sum())
    w = np.random.default_rng(0).uniform(0.5, 2, 64)
    assert weighted_measure(line64, w, idx) == pytest.approx(
        np.sum(w[idx] * line64.masses[idx]))


def test_level_set_examples(line64):
    assert ainfty_level_set_check(line64, np.ones(64))[0] == 1.0
    sp = point_space([0.0, 1.0], [0.5, 0.5])
    fam = BallFamily.from_balls(sp, [ball(sp, 0, 2.0)])
    gamma, _ = ainfty_level_set_check(sp, np.array([1.0, 3.0]), fam)
    assert gamma == pytest.approx(1.5)
    w = np.linspace(1, 2, 64)
    g, frac = ainfty_level_set_check(line64, w, gammas=[0.5, 0.8, 0.9, 1.0])
    assert 0.5 <= g <= 1.0 and frac[0.5] == 1.0


def test_weight_validation(line64):
    with pytest.raises(WeightError):
        Weight([1.0, -1.0])
    with pytest.raises(WeightError):
        parse_weight(line64, "bogus")
    assert np.allclose(parse_weight(line64, "pow:0.4").values,
                       np.abs(line64.coords[:, 0]) ** 0.4)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.01, 100.0), st.floats(1.2, 4.0))
def test_ap_properties(a, c, p):
    sp = generate("line", 32)
    w = power_weight(sp, a).values
    val = ap_constant(sp, w, p)
    assert val >= 1.0
    assert ap_constant(sp, c * w, p) == pytest.approx(val, rel=1e-9)
    assert ap_constant(sp, w, p + 0.5) <= val * (1 + 1e-12)


def test_weighted_doubling_with_fitted_dimension():
    sp = generate("line", 128)
    n, cfit = upper_dimension(sp)
    rng = np.random.default_rng(0)
    for a in (-0.5, 0.4):
        w = power_weight(sp, a).values
        p = 2.0
        apw = ap_constant(sp, w, p)
        worst = 0.0
        for _ in range(200):
            x = int(rng.integers(sp.n))
            r = float(rng.uniform(2 * sp.min_gap, 0.3))
            lam = float(rng.uniform(1, 4))
            small = np.sum((w * sp.masses)[sp.dist[x] < r])
            big = np.sum((w * sp.masses)[sp.dist[x] < lam * r])
            worst = max(worst, big / (lam ** (n * p) * apw * small))
        # the measured constant replaces the implicit one of the inequality
        assert worst <= cfit ** p
