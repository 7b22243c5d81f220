import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shtk.bmo import (BMOError, atom_check, best_constant_deviation, bmo_norm,
                      check_testsets, duality_pairing, lower_bound_ratio,
                      make_atom, median, median_admissible, oscillation,
                      pi_product, testsets)
from shtk.operators import DiscreteOperator, make_kernel
from shtk.space import ball, generate, random_cloud
from shtk.weights import power_weight

from conftest import point_space, uniform_grid


def all_balls(sp):
    out = []
    for c in range(sp.n):
        for r in np.unique(sp.dist[c]):
            out.append(np.flatnonzero(sp.dist[c] <= r))
    return out


# ---------------------------------------------------------------- oscillation


def test_oscillation_examples():
    sp = point_space([0.0, 1.0], [0.5, 0.5])
    assert oscillation(sp, np.full(2, 4.0), [0, 1]) == 0.0
    assert oscillation(sp, np.array([0.0, 1.0]), [0, 1]) == pytest.approx(0.5)
    assert oscillation(sp, np.array([0.0, 1.0]), []) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(-100, 100))
def test_oscillation_shift_and_sandwich(seed, c):
    sp = random_cloud(24, seed=seed % 1000)
    rng = np.random.default_rng(seed)
    b = rng.normal(size=24)
    B = np.flatnonzero(sp.dist[int(rng.integers(24))] < rng.uniform(0.05, 1.0))
    if B.size == 0:
        return
    om = oscillation(sp, b, B)
    assert oscillation(sp, b + c, B) == pytest.approx(om, abs=1e-9)
    best = best_constant_deviation(sp, b, B)
    assert best <= om * (1 + 1e-12) + 1e-15
    assert om <= 2 * best * (1 + 1e-12) + 1e-15


# ---------------------------------------------------------------- BMO


def test_bmo_constant_and_unweighted_reduction(line64):
    assert bmo_norm(line64, np.full(64, -2.0)) == 0.0
    b = np.sin(5 * line64.coords[:, 0])
    val, B = bmo_norm(line64, b, return_ball=True)
    assert val == pytest.approx(oscillation(line64, b, B), rel=1e-12)


def test_bmo_eight_point_step_brute_force():
    sp = uniform_grid(8)
    b = (sp.coords[:, 0] > 0.5).astype(float)
    w = power_weight(sp, 0.5).values
    best = 0.0
    for B in all_balls(sp):
        mu = sp.masses[B]
        dev = np.sum(np.abs(b[B] - np.sum(b[B] * mu) / mu.sum()) * mu)
        best = max(best, dev / np.sum(w[B] * mu))
    assert bmo_norm(sp, b, w) == pytest.approx(best, rel=1e-12)


def test_bmo_random_matches_brute_force():
    sp = random_cloud(20, seed=4)
    b = np.random.default_rng(4).normal(size=20)
    best = max(oscillation(sp, b, B) for B in all_balls(sp))
    assert bmo_norm(sp, b) == pytest.approx(best, rel=1e-12)


# ---------------------------------------------------------------- medians


def test_median_examples():
    sp3 = point_space([0.0, 1.0, 2.0])
    assert median(sp3, np.full(3, 2.5), [0, 1, 2]) == 2.5
    assert median(sp3, np.array([0.0, 1.0, 2.0]), [0, 1, 2]) == 1.0
    sp2 = point_space([0.0, 1.0])
    assert median(sp2, np.array([0.0, 1.0]), [0, 1]) == 0.0
    assert median_admissible(sp2, np.array([0.0, 1.0]), [0, 1], 1.0)
    with pytest.raises(BMOError):
        median(sp2, np.zeros(2), [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=12),
       st.integers(0, 10**6))
def test_median_admissible_and_smallest(vals, seed):
    n = len(vals)
    masses = np.random.default_rng(seed).uniform(0.1, 1.0, n)
    sp = point_space(np.arange(n, dtype=float), masses)
    b = np.array(vals, dtype=float)
    v = median(sp, b, np.arange(n))
    assert median_admissible(sp, b, np.arange(n), v)
    assert not any(median_admissible(sp, b, np.arange(n), u)
                   for u in np.unique(b) if u < v)


# ---------------------------------------------------------------- test sets


def test_testsets_constant_b():
    sp = uniform_grid(16)
    B, Bt = np.arange(4), np.arange(10, 14)
    sets = testsets(sp, np.ones(16), B, Bt)
    assert np.array_equal(sets.E1, B) and np.array_equal(sets.E2, B)
    assert np.array_equal(sets.F1, Bt) and np.array_equal(sets.F2, Bt)


def test_testsets_increasing_b():
    sp = uniform_grid(16)
    b = sp.coords[:, 0]
    B, Bt = np.arange(4), np.arange(10, 14)
    sets = testsets(sp, b, B, Bt)
    assert np.array_equal(sets.E2, B) and sets.E1.size == 0
    assert set(sets.F1) <= set(Bt)
    assert all(check_testsets(sp, b, B, Bt, sets).values())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_testsets_properties_exhaustive(seed):
    sp = random_cloud(32, seed=seed % 997)
    rng = np.random.default_rng(seed)
    b = rng.integers(-3, 4, 32).astype(float)
    B = np.flatnonzero(sp.dist[int(rng.integers(32))] < rng.uniform(0.1, 0.8))
    Bt = np.flatnonzero(sp.dist[int(rng.integers(32))] < rng.uniform(0.1, 0.8))
    if B.size == 0 or Bt.size == 0:
        return
    sets = testsets(sp, b, B, Bt)
    rep = check_testsets(sp, b, B, Bt, sets)
    assert all(rep.values()), rep
    assert sets.slack <= sp.masses[Bt].max() + 1e-15


# ---------------------------------------------------------------- lower bound


@pytest.fixture(scope="module")
def hilbert128():
    sp = generate("line", 128)
    return DiscreteOperator(make_kernel("hilbert"), sp)


def test_lower_bound_examples(hilbert128):
    op = hilbert128
    res = lower_bound_ratio(op, np.full(128, 3.0), 1, 2.0, center=40, radius=0.05)
    assert res["ok"] and res["L"] == 0.0 and res["omega_m"] == 0.0
    assert res["R_bound"] == pytest.approx(1.0)
    with pytest.raises(BMOError):
        lower_bound_ratio(op, np.ones(128), 1, 1.0, center=0, radius=0.1)


def test_lower_bound_step_hilbert(hilbert128):
    op = hilbert128
    sp = op.space
    b = (sp.coords[:, 0] > 0).astype(float)
    ratios = []
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = int(rng.integers(128))
        res = lower_bound_ratio(op, b, 1, 2.0, center=x,
                                radius=float(rng.uniform(0.05, 0.2)))
        if res["ok"] and res["omega_m"] > 0:
            assert res["L"] > 0
            ratios.append(res["omega_m"] / res["L"])
    assert ratios and np.isfinite(max(ratios))


# ---------------------------------------------------------------- atoms


def test_atom_two_point():
    sp = point_space([0.0, 1.0], [0.5, 0.5])
    a = make_atom(sp, [0, 1], np.array([1.0, -1.0]))
    assert np.allclose(a.values, [1.0, -1.0])
    assert atom_check(sp, a)
    a2 = make_atom(sp, [0, 1], np.array([3.0, 1.0]))
    assert np.allclose(a2.values, [1.0, -1.0])
    with pytest.raises(BMOError):
        make_atom(sp, [0, 1], np.array([2.0, 2.0]))
    with pytest.raises(BMOError):
        make_atom(sp, [0], np.array([1.0, 1.0]))


def test_atom_weighted_norm(line64):
    w = power_weight(line64, 0.3)
    B = ball(line64, 10, 0.2).members
    raw = np.zeros(64)
    raw[B] = np.random.default_rng(2).normal(size=B.size)
    a = make_atom(line64, B, raw, w)
    assert atom_check(line64, a)
    mu = line64.masses
    wB = np.sum(w.values[B] * mu[B])
    assert np.sqrt(np.sum(a.values ** 2 * w.values * mu)) == pytest.approx(wB ** -0.5)
    bad = a.values.copy()
    bad[(B.max() + 1) % 64] = 1.0
    assert not atom_check(line64, bad, w.values, B)


def test_duality_pairing(line64):
    rng = np.random.default_rng(5)
    B = ball(line64, 30, 0.1).members
    raw = np.zeros(64)
    raw[B] = rng.normal(size=B.size)
    a = make_atom(line64, B, raw)
    assert abs(duality_pairing(line64, np.full(64, 7.0), a)) < 1e-12
    g1, g2 = rng.normal(size=(2, 64))
    assert duality_pairing(line64, 2 * g1 - g2, a) == pytest.approx(
        2 * duality_pairing(line64, g1, a) - duality_pairing(line64, g2, a))
    sp = point_space([0.0, 1.0], [0.5, 0.5])
    a2 = make_atom(sp, [0, 1], np.array([1.0, -1.0]))
    assert duality_pairing(sp, np.array([1.0, -1.0]), a2) == pytest.approx(1.0)


def test_duality_battery_fitted_constant(line64):
    rng = np.random.default_rng(6)
    ratios = []
    for i in range(30):
        w = power_weight(line64, float(rng.uniform(-0.5, 0.5)))
        B = ball(line64, int(rng.integers(64)), float(rng.uniform(0.05, 0.5))).members
        raw = np.zeros(64)
        raw[B] = rng.normal(size=B.size)
        a = make_atom(line64, B, raw, w)
        g = rng.normal(size=64).cumsum()
        ratios.append(abs(duality_pairing(line64, g, a)) / bmo_norm(line64, g, w))
    assert np.isfinite(max(ratios)) and max(ratios) < 100


# ---------------------------------------------------------------- Pi


def test_pi_product(line64):
    rng = np.random.default_rng(8)
    op = DiscreteOperator(make_kernel("hilbert"), line64)
    mu = line64.masses
    g, h = rng.normal(size=(2, 64))
    assert abs(np.sum(pi_product(op, g, g) * mu)) < 1e-12
    val = np.sum(pi_product(op, g, h) * mu)
    assert abs(val) <= 1e-10 * np.linalg.norm(g) * np.linalg.norm(h)
    zero = DiscreteOperator(make_kernel("zero"), line64)
    assert np.all(pi_product(zero, g, h) == 0)
    cs = DiscreteOperator(make_kernel("cauchy"), line64)
    assert abs(np.sum(pi_product(cs, g, h) * mu)) <= 1e-10 * np.linalg.norm(g) * np.linalg.norm(h)
