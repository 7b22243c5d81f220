"""Acceptance criteria, each at its stated tolerance."""

import math
import time

import numpy as np
import pytest

from shtk.bmo import (bmo_norm, check_testsets, duality_pairing, make_atom,
                      pi_product, testsets)
from shtk.dyadic import (build_adjacent_systems, build_dyadic_system,
                         verify_system)
from shtk.haar import (build_haar, conditional_expectation, expand,
                       reconstruct, square_function, weighted_haar)
from shtk.harness import ExperimentConfig, domination_experiment, equivalence_experiment
from shtk.operators import (DiscreteOperator, bessel_i_asymptotic,
                            bessel_i_reduced, bessel_i_series,
                            bessel_riesz_kernel_1d, bessel_riesz_kernel_hd,
                            make_kernel, nondegeneracy_check,
                            riesz_principal_constant)
from shtk.operators.bessel import Z_STAR
from shtk.space import ball, generate
from shtk.sparse import (SparseFamily, augment_family, carleson_constant,
                         sparse_operator_matrix, sparsify, sparsity_check)
from shtk.weights import power_weight

from conftest import record

pytestmark = pytest.mark.slow

MODELS_1 = [("grid1d", {}), ("grid2d", {}), ("halfline", {"lam": 0.7}),
            ("heisenberg", {})]


def test_ac1_dyadic_structure():
    bad = []
    t_big = 0.0
    for model, kw in MODELS_1:
        for n in (64, 256, 1024):
            t = time.perf_counter()
            rep = verify_system(build_dyadic_system(generate(model, n, **kw)))
            if n == 1024:
                t_big += time.perf_counter() - t
            keys = ("partition", "nesting", "unique_ancestor", "sandwich", "all_ok")
            if not all(rep[k] for k in keys):
                bad.append((model, n, {k: rep[k] for k in keys}))
    ok = not bad and t_big < 60
    record("AC1", ok, f"12 systems verified, failures={bad}, n=1024 time {t_big:.1f}s (< 60s)")
    assert ok


def test_ac2_adjacent_coverage():
    details, ok = [], True
    for model in ("grid1d", "grid2d", "heisenberg"):
        adj = build_adjacent_systems(generate(model, 256), delta=0.25, T=3)
        rep = adj.report()
        good = rep["T"] == 3 and rep["coverage"] >= 0.95 and np.isfinite(rep["C_adj"])
        good &= len(rep["failures"]) == min(50, round((1 - rep["coverage"]) * rep["sampled"]))
        ok &= good
        details.append(f"{model}: coverage {rep['coverage']:.3f}, C_adj {rep['C_adj']:.1f}, "
                       f"{len(adj.failures)} failures")
    record("AC2", ok, "; ".join(details))
    assert ok


def _haar_errors(sp, seed):
    basis = build_haar(build_dyadic_system(sp))
    mu = sp.masses
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(sp.n)
    gram = np.abs(basis.gram() - np.eye(len(basis))).max()
    canc = max(abs(row @ mu) for fn, row in zip(basis.functions, basis.matrix) if fn.eps > 0)
    rt = np.abs(reconstruct(basis, expand(basis, f)) - f).max()
    e0 = conditional_expectation(basis.system, f, basis.system.k_min)
    pars = abs(np.sum(square_function(basis, f) ** 2 * mu)
               - (np.sum(f ** 2 * mu) - np.sum(e0 ** 2 * mu)))
    w = power_weight(sp, 0.4).values if sp.metric != "halfline" else sp.coords[:, 0] ** 0.3
    wh = weighted_haar(basis, w)
    m = wh.mask
    recon = wh.C[:, None] * wh.vectors + wh.D[:, None] * wh.tails
    whe = np.abs(recon[m] - basis.matrix[m]).max()
    return gram, canc, rt, pars, whe


def test_ac3_haar_suite():
    limits = (1e-10, 1e-12, 1e-10, 1e-10, 1e-10)
    worst = np.zeros(5)
    for i, (model, n, kw) in enumerate([("line", 512, {}), ("grid2d", 256, {}),
                                        ("halfline", 512, {"lam": 0.7}),
                                        ("heisenberg", 216, {})]):
        worst = np.maximum(worst, _haar_errors(generate(model, n, **kw), i))
    ok = bool(np.all(worst <= limits))
    names = ("gram", "cancellation", "round trip", "Parseval", "weighted identity")
    record("AC3", ok, ", ".join(f"{k} {v:.1e}" for k, v in zip(names, worst)))
    assert ok


def test_ac4_sparse_suite():
    rng = np.random.default_rng(44)
    systems = build_adjacent_systems(generate("line", 256)).systems
    systems.append(build_dyadic_system(generate("grid2d", 256)))
    wit_fail, adj_err, aug_fail, families = 0, 0.0, 0, 0
    for s in systems:
        mu = s.space.masses
        for _ in range(50):
            size = int(rng.integers(1, 60))
            fam = SparseFamily(s, rng.choice(len(s.cubes), size, replace=False))
            lam = carleson_constant(fam)
            out = sparsify(fam, lam)
            families += 1
            used = np.zeros(s.space.n, dtype=int)
            atom = mu.max()
            for q in out:
                w = np.asarray(out.witnesses[q], dtype=int)
                used[w] += 1
                if not np.all(np.isin(w, s.cubes[q].members)):
                    wit_fail += 1
                if mu[w].sum() < s.cubes[q].measure / lam - atom - 1e-12:
                    wit_fail += 1
            wit_fail += int(used.max() > 1)
            A = sparse_operator_matrix(fam)
            f, g = rng.standard_normal((2, s.space.n))
            adj_err = max(adj_err, abs(np.sum(A @ f * g * mu) - np.sum(f * (A @ g) * mu)))
    s = systems[0]
    base = sparsify(SparseFamily(s, rng.choice(len(s.cubes), 30, replace=False)), 1e9)
    fits = []
    for i in range(20):
        b = rng.standard_normal(s.space.n) * (1 + i % 3) + np.where(i % 2, 0.0, np.arange(s.space.n) / 50)
        aug = augment_family(SparseFamily(s, base.cubes), b)
        fits.append(aug.C)
        aug_fail += int(not np.isfinite(aug.C) or not set(base.cubes) <= set(aug.family.cubes))
    ok = wit_fail == 0 and adj_err <= 1e-10 and aug_fail == 0
    record("AC4", ok, f"{families} families, witness failures {wit_fail}, "
                      f"self-adjointness {adj_err:.1e}, augmentation C max {max(fits):.2f} "
                      f"({aug_fail} failures of 20)")
    assert ok


AC5_CASES = [("hilbert", {}, "line", {}), ("cauchy", {"profile": "sawtooth:1"}, "line", {}),
             ("bessel1d", {"lam": 0.7}, "halfline", {"lam": 0.7})]


def test_ac5_domination_certificate():
    ok, details = True, []
    for op, params, model, space in AC5_CASES:
        for m in (1, 2):
            cfg = ExperimentConfig("domination", n=256, op=op, op_params=params,
                                   model=model, space=space, m=m, pairs=20, spread=10.0)
            res = domination_experiment(cfg)
            ok &= res["passed"]
            r = res["results"]
            details.append(f"{op} m={m}: C* in [{r['C_star_min']:.2f}, {r['C_star_max']:.2f}] "
                           f"spread {r['spread']:.2f}")
    record("AC5", ok, "; ".join(details))
    assert ok


AC6_CASES = [
    ("hilbert", "line", {}, {}),
    ("cauchy", "line", {}, {"profile": "sawtooth:1"}),
    ("cs", "heisenberg", {}, {"n": 1}),
    ("szego", "omega", {"k": 1}, {"k": 1}),
    ("szego", "omega", {"k": 2}, {"k": 2}),
    ("bessel1d", "halfline", {"lam": -0.3}, {"lam": -0.3}),
    ("bessel1d", "halfline", {"lam": 0.7}, {"lam": 0.7}),
    ("bessel1d", "halfline", {"lam": 1.5}, {"lam": 1.5}),
    ("bessel-hd", "halfspace", {"lam": 1.0, "dim": 2}, {"n": 1, "lam": 1.0, "j": 1}),
    ("bessel-hd", "halfspace", {"lam": 1.0, "dim": 2}, {"n": 1, "lam": 1.0, "j": 2}),
]


def test_ac6_nondegeneracy():
    ok, details = True, []
    for op, model, skw, kkw in AC6_CASES:
        o = DiscreteOperator(make_kernel(op, **kkw), generate(model, 256, **skw))
        nd = nondegeneracy_check(o, n_samples=100)
        good = nd["pass_fraction"] >= 0.95 and np.isfinite(nd["c0"])
        ok &= good
        details.append(f"{o.name} {nd['pass_fraction']:.2f} c0={nd['c0']:.3g}")
    record("AC6", ok, "; ".join(details))
    assert ok


def test_ac7_kernel_analytics():
    band = np.linspace(Z_STAR - 5, Z_STAR + 5, 41)
    branch = max(np.max(np.abs(bessel_i_series(nu, band) - bessel_i_asymptotic(nu, band))
                        / bessel_i_series(nu, band))
                 for nu in (-0.4, 0.0, 0.5, 1.5, 3.0))
    limit = max(abs(bessel_i_reduced(nu, 1e-6) * 2 ** nu * math.gamma(nu + 1) - 1)
                for nu in (-0.4, 0.0, 0.5, 1.5, 3.0))
    diag = max(abs(bessel_riesz_kernel_1d(lam, [1.0], [1.01])[0, 0] * np.pi
                   * 1.01 ** lam * 0.01 - 1) for lam in (0.5, 1.0, 1.5))
    rng = np.random.default_rng(7)
    lemma = 0.0
    for n in (1, 2):
        for lam in (0.5, 1.0):
            y = np.column_stack([rng.uniform(-1, 1, (20, n)), rng.uniform(0.5, 2.0, 20)])
            step = rng.standard_normal((20, n + 1))
            step /= np.linalg.norm(step, axis=1)[:, None]
            x = y + 0.01 * y[:, -1:] * step
            r = np.array([bessel_riesz_kernel_hd(n, lam, 1, x[i:i + 1], y[i:i + 1])[0, 0]
                          for i in range(20)])
            d = np.linalg.norm(x - y, axis=1)
            xl, yl = x[:, -1], y[:, -1]
            principal = (riesz_principal_constant(n) * (y[:, 0] - x[:, 0])
                         / ((xl * yl) ** lam * d ** (n + 2)))
            budget = np.abs(x[:, 0] - y[:, 0]) / ((xl * yl) ** (lam + 1) * d ** n)
            lemma = max(lemma, float(np.max(np.abs(r - principal) / budget)))
    ok = branch <= 1e-8 and limit <= 1e-6 and diag <= 0.1 and lemma <= 1.0
    record("AC7", ok, f"branch {branch:.1e}, small-z limit {limit:.1e}, "
                      f"diagonal {diag:.3f}, principal term {lemma:.3f} of budget")
    assert ok


def test_ac8_equivalence_band():
    ok, details = True, []
    t0 = time.perf_counter()
    for lam1, lam2 in (("1", "1"), ("pow:0.4", "pow:-0.4")):
        for m in (1, 2):
            cfg = ExperimentConfig("equivalence", n=1024, p=2.0, m=m, lam1=lam1,
                                   lam2=lam2, band=50.0)
            res = equivalence_experiment(cfg)
            r = res["results"]
            good = res["passed"] and r["band"] <= 50 and r["constant_zero"]
            ok &= good
            details.append(f"({lam1},{lam2}) m={m}: band {r['band']:.2f}, "
                           f"constant b zero {r['constant_zero']}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    record("AC8", ok, "; ".join(details) + f"; {elapsed:.0f}s (< 600s)")
    assert ok


PI_CASES = [("hilbert", "line", {}, {}), ("cauchy", "line", {}, {"profile": "sawtooth:1"}),
            ("cs", "heisenberg", {}, {"n": 1}), ("szego", "omega", {"k": 1}, {"k": 1}),
            ("szego", "omega", {"k": 2}, {"k": 2}),
            ("bessel1d", "halfline", {"lam": 0.7}, {"lam": 0.7}),
            ("bessel-hd", "halfspace", {"lam": 1.0, "dim": 2}, {"n": 1, "lam": 1.0, "j": 1})]


def test_ac9_duality_and_pi():
    sp = generate("line", 128)
    rng = np.random.default_rng(9)
    w = power_weight(sp, 0.3)
    atoms = []
    for _ in range(50):
        B = ball(sp, int(rng.integers(sp.n)), float(rng.uniform(0.02, 0.8))).members
        raw = np.zeros(sp.n)
        raw[B] = rng.standard_normal(B.size)
        atoms.append(make_atom(sp, B, raw, w))
    gs = [rng.standard_normal(sp.n).cumsum() * (1 + i) for i in range(5)]
    gs += [np.sin(np.pi * (i + 1) * sp.coords[:, 0]) for i in range(3)]
    gs += [np.log(np.abs(sp.coords[:, 0]) + 1e-3), (sp.coords[:, 0] > 0.1).astype(float)]
    ratios = np.array([[abs(duality_pairing(sp, g, a)) / bmo_norm(sp, g, w) for g in gs]
                       for a in atoms])
    c_fit = float(ratios.max())
    pi_worst = 0.0
    for op, model, skw, kkw in PI_CASES:
        s = generate(model, 64, **skw)
        o = DiscreteOperator(make_kernel(op, **kkw), s)
        for _ in range(3):
            g, h = rng.standard_normal((2, s.n))
            val = abs(np.sum(pi_product(o, g, h) * s.masses))
            pi_worst = max(pi_worst, val / (np.linalg.norm(g) * np.linalg.norm(h)))
    ok = np.isfinite(c_fit) and bool(np.all(ratios <= c_fit)) and pi_worst <= 1e-10
    record("AC9", ok, f"50 atoms x 10 g: C_fit {c_fit:.3f}; Pi integral {pi_worst:.1e} "
                      f"over {len(PI_CASES)} kernels")
    assert ok


AC10_MODELS = [("line", {}), ("grid2d", {}), ("halfline", {"lam": 0.7}),
               ("heisenberg", {}), ("omega", {"k": 2})]


def test_ac10_median_testsets():
    bad = []
    for model, kw in AC10_MODELS:
        sp = generate(model, 64, **kw)
        rng = np.random.default_rng(10)
        for t in range(100):
            b = (rng.integers(-3, 4, sp.n).astype(float) if t % 2 else
                 rng.standard_normal(sp.n))
            x, y = rng.integers(sp.n, size=2)
            rx, ry = rng.uniform(0.1, 1.0, 2) * sp.dist.max()
            B = np.flatnonzero(sp.dist[x] < rx)
            Bt = np.flatnonzero(sp.dist[y] < ry)
            sets = testsets(sp, b, B, Bt)
            rep = check_testsets(sp, b, B, Bt, sets)
            if not all(rep.values()):
                bad.append((model, t, rep))
    ok = not bad
    record("AC10", ok, f"{100 * len(AC10_MODELS)} triples over {len(AC10_MODELS)} models, "
                       f"failures {bad[:3]}")
    assert ok
