"""Sparse and Carleson families of dyadic cubes, sparse operators, the
oscillation augmentation and the sparse domination of iterated commutators.

Containment between cubes is taken in the tree: P is inside Q when P lies in
the subtree of Q.  On a finite system a cube with a single child has the
same points as that child, and the two are still different cubes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic import quasi_constant
from .operators.apply import (binomial, commutator, enlargement_constant,
                              local_grand_maximal)


class SparseError(ValueError):
    pass


@dataclass
class SparseFamily:
    system: object
    cubes: list
    witnesses: dict = field(default=None, repr=False)
    eta: float = None
    Lam: float = None

    def __post_init__(self):
        self.cubes = sorted(set(int(c) for c in self.cubes))

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    @property
    def space(self):
        return self.system.space

    def to_dict(self):
        out = {"system": self.system.system, "cubes": self.cubes,
               "eta": self.eta, "Lambda": self.Lam}
        if self.witnesses is not None:
            out["witnesses"] = {str(c): w.tolist()
                                for c, w in self.witnesses.items()}
        return out


def _mu(space, idx):
    return float(space.masses[idx].sum())


def _packing(family):
    """Per cube Q of the system, sum of mu(P) over family cubes P inside Q."""
    sysm = family.system
    acc = np.zeros(len(sysm.cubes))
    inside = np.zeros(len(sysm.cubes), dtype=bool)
    inside[family.cubes] = True
    # cubes are stored level by level, so a reverse sweep sees children first
    for lev in reversed(sysm.levels):
        for ci in lev:
            cube = sysm.cubes[ci]
            if inside[ci]:
                acc[ci] += cube.measure
            if cube.parent >= 0:
                acc[cube.parent] += acc[ci]
    return acc


def carleson_constant(family):
    """max over cubes Q of sum_{P in family, P inside Q} mu(P) / mu(Q)."""
    if len(family) == 0:
        return 0.0
    sysm = family.system
    acc = _packing(family)
    meas = np.array([c.measure for c in sysm.cubes])
    return float(np.max(acc / meas))


def sparsify(family, Lam):
    """Disjoint witnesses E_Q with mu(E_Q) >= mu(Q)/Lam up to one atom.

    Cubes are handled deepest first.  Each E_Q grows from the center of Q
    through the points not used by deeper witnesses, in order of distance,
    and stops before exceeding the target mu(Q)/Lam; a final pass tops up
    any witness still short by adding one free point of its cube.
    """
    sysm = family.system
    sp = sysm.space
    if len(family) == 0:
        return SparseFamily(sysm, [], {}, None, Lam)
    acc = _packing(family)
    meas = np.array([c.measure for c in sysm.cubes])
    ratio = acc / meas
    bad = np.flatnonzero(ratio > Lam * (1 + 1e-12))
    if bad.size:
        ci = int(bad[np.argmax(ratio[bad])])
        raise SparseError(f"family is not {Lam}-Carleson: cube {ci} packs "
                          f"{ratio[ci]:.6g} times its measure")
    used = np.zeros(sp.n, dtype=bool)
    wit = {}
    order = sorted(family.cubes, key=lambda c: (-sysm.cubes[c].k, c))
    for ci in order:
        cube = sysm.cubes[ci]
        target = cube.measure / Lam
        free = cube.members[~used[cube.members]]
        free = free[np.argsort(sp.dist[cube.center, free], kind="stable")]
        cum = np.cumsum(sp.masses[free])
        take = int(np.searchsorted(cum, target * (1 + 1e-12), side="right"))
        wit[ci] = free[:take]
        used[wit[ci]] = True
    for ci in order:
        cube = sysm.cubes[ci]
        target = cube.measure / Lam
        if _mu(sp, wit[ci]) >= target * (1 - 1e-12):
            continue
        free = cube.members[~used[cube.members]]
        if free.size == 0:
            continue
        y = free[np.argmin(sp.dist[cube.center, free])]
        wit[ci] = np.append(wit[ci], y)
        used[y] = True
    eta = min(_mu(sp, w) / sysm.cubes[c].measure for c, w in wit.items())
    return SparseFamily(sysm, family.cubes, wit, eta, Lam)


def sparsity_check(family):
    """(eta, max overlap) from the witnesses."""
    if family.witnesses is None:
        raise SparseError("family has no witnesses")
    if len(family) == 0:
        raise SparseError("sparsity of an empty family is undefined")
    sysm = family.system
    sp = sysm.space
    count = np.zeros(sp.n, dtype=int)
    eta = np.inf
    for ci in family.cubes:
        w = np.asarray(family.witnesses.get(ci, []), dtype=int)
        if not np.all(np.isin(w, sysm.cubes[ci].members)):
            raise SparseError(f"witness of cube {ci} leaves the cube")
        count[w] += 1
        eta = min(eta, _mu(sp, w) / sysm.cubes[ci].measure)
    return float(eta), int(count.max())


def sparse_operator_matrix(family):
    """Matrix of f -> sum_Q (avg_Q f) 1_Q."""
    sp = family.space
    A = np.zeros((sp.n, sp.n))
    for ci in family.cubes:
        cube = family.system.cubes[ci]
        m = cube.members
        A[np.ix_(m, m)] += sp.masses[m][None, :] / cube.measure
    return A


def sparse_operator_apply(family, f):
    sp = family.space
    f = np.asarray(f)
    out = np.zeros(sp.n, dtype=np.result_type(f, float))
    for ci in family.cubes:
        cube = family.system.cubes[ci]
        m = cube.members
        out[m] += np.sum(f[m] * sp.masses[m]) / cube.measure
    return out


def cube_average(system, ci, v):
    cube = system.cubes[ci]
    m = cube.members
    return np.sum(np.asarray(v)[m] * system.space.masses[m]) / cube.measure


def cube_oscillation(system, ci, b):
    cube = system.cubes[ci]
    m = cube.members
    bq = cube_average(system, ci, b)
    return float(np.sum(np.abs(b[m] - bq) * system.space.masses[m]) / cube.measure)


def local_dyadic_maximal(system, ci, f):
    """Max of |f|-averages over the dyadic subcubes of cube ci; 0 outside it."""
    sp = system.space
    g = np.abs(np.asarray(f))
    out = np.zeros(sp.n)
    for p in system.descendants(ci):
        m = system.cubes[p].members
        avg = np.sum(g[m] * sp.masses[m]) / system.cubes[p].measure
        out[m] = np.maximum(out[m], avg)
    return out


def weak_type_ratio(values, masses, norm):
    """sup_lambda lambda mu{v > lambda} / norm for a finite sample."""
    if norm <= 0:
        return 0.0
    order = np.argsort(-values, kind="stable")
    v = values[order]
    cum = np.cumsum(masses[order])
    return float(np.max(v * cum) / norm)


def stopping_cubes(system, ci, bad, height):
    """Maximal strict subcubes P of ci with mu(P and bad) > height mu(P)."""
    sp = system.space
    bad = np.asarray(bad, dtype=bool)
    out = []
    stack = list(system.cubes[ci].children)
    while stack:
        p = stack.pop()
        cube = system.cubes[p]
        hit = sp.masses[cube.members][bad[cube.members]].sum()
        if hit == 0:
            continue
        if hit > height * cube.measure:
            out.append(p)
        else:
            stack.extend(cube.children)
    return sorted(out)


@dataclass
class Augmentation:
    family: SparseFamily
    C: float
    weak_constant: float
    local_families: dict = field(repr=False)


def augment_family(family, b):
    """Augmented family with |b - b_Q| <= C sum_{R inside Q} Omega(b,R) 1_R.

    For each Q of the input family the stopping-time family F(Q) is grown:
    a cube P contributes E = {M_P^d(b - b_P) > 4 C_mu0 C Omega(b,P)} and
    its maximal subcubes with more than 1/(2 C_mu0) of their mass in E
    are processed next.  C is the measured weak-(1,1) ratio of the local
    dyadic maximal function (at least 1).  Cubes of F(Q) lying inside a
    strictly smaller cube of the input family are dropped, and the fitted C
    is the smallest constant making the bound hold at every point of every
    cube of the result.
    """
    sysm = family.system
    sp = sysm.space
    b = np.asarray(b, dtype=float)
    c_mu0 = sysm.C_mu0
    mass = sp.masses

    # calibrate C on every cube the stopping time can reach
    weak = 0.0
    reach = set()
    for q in family.cubes:
        reach.update(sysm.descendants(q))
    maxima = {}
    for p in sorted(reach):
        cube = sysm.cubes[p]
        g = np.zeros(sp.n)
        g[cube.members] = b[cube.members] - cube_average(sysm, p, b)
        M = local_dyadic_maximal(sysm, p, g)
        maxima[p] = M
        norm = float(np.sum(np.abs(g) * mass))
        weak = max(weak, weak_type_ratio(M[cube.members], mass[cube.members],
                                         norm))
    C = max(weak, 1.0)

    local = {}
    for q in family.cubes:
        queue = [q]
        visited = []
        while queue:
            p = queue.pop()
            visited.append(p)
            cube = sysm.cubes[p]
            omega = cube_oscillation(sysm, p, b)
            E = np.zeros(sp.n, dtype=bool)
            E[cube.members] = maxima[p][cube.members] > 4 * c_mu0 * C * omega
            if E.any():
                queue.extend(stopping_cubes(sysm, p, E, 1.0 / (2 * c_mu0)))
        local[q] = sorted(set(visited))

    members = set(family.cubes)
    kept = set()
    for q, fq in local.items():
        smaller = [r for r in members if r != q and sysm.is_descendant(r, q)]
        for p in fq:
            if not any(sysm.is_descendant(p, r) for r in smaller):
                kept.add(p)
    aug = SparseFamily(sysm, sorted(kept | members))
    return Augmentation(aug, fit_oscillation_bound(aug, b), C, local)


def fit_oscillation_bound(family, b):
    """Smallest C with |b - b_Q| <= C sum_{R inside Q} Omega(b,R) 1_R on every Q."""
    sysm = family.system
    b = np.asarray(b, dtype=float)
    osc = {r: cube_oscillation(sysm, r, b) for r in family.cubes}
    worst = 0.0
    for q in family.cubes:
        cube = sysm.cubes[q]
        rhs = np.zeros(sysm.space.n)
        for r in family.cubes:
            if sysm.is_descendant(r, q):
                rhs[sysm.cubes[r].members] += osc[r]
        lhs = np.abs(b[cube.members] - cube_average(sysm, q, b))
        rr = rhs[cube.members]
        tiny = 1e-13 * (np.abs(b).max() + 1.0)
        if np.any((lhs > tiny) & (rr <= 0)):
            return float("inf")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lhs > tiny, lhs / rr, 0.0)
        worst = max(worst, float(ratio.max(initial=0.0)))
    return worst


# ---------------------------------------------------------------- domination sums


def domination_sum(family, b, m, k, f):
    """sum_Q |b(x) - b_Q|^{m-k} (avg_Q |b - b_Q|^k |f|) 1_Q(x), with 0^0 = 1."""
    if not 0 <= k <= m:
        raise SparseError("need 0 <= k <= m")
    sysm = family.system
    sp = sysm.space
    b = np.asarray(b, dtype=float)
    af = np.abs(np.asarray(f))
    out = np.zeros(sp.n)
    for ci in family.cubes:
        cube = sysm.cubes[ci]
        mm = cube.members
        bq = np.sum(b[mm] * sp.masses[mm]) / cube.measure
        dev = np.abs(b[mm] - bq)
        avg = np.sum(dev ** k * af[mm] * sp.masses[mm]) / cube.measure
        out[mm] += dev ** (m - k) * avg
    return out


def commutator_bound(families, b, m, f):
    """sum_t sum_k C(m,k) domination_sum(S_t, b, m, k, f)."""
    out = np.zeros(len(np.asarray(b)))
    for fam in families:
        for k in range(m + 1):
            out += binomial(m, k) * domination_sum(fam, b, m, k, f)
    return out


# ---------------------------------------------------------------- domination


@dataclass
class Domination:
    families: list
    C_star: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    enlargement: float = 0.0
    j_tilde: int = 0
    alphas: list = field(default_factory=list, repr=False)
    visited: int = 0
    failure: dict = None

    def report(self):
        return {
            "C_star": self.C_star,
            "enlargement": self.enlargement,
            "j_tilde": self.j_tilde,
            "alpha_max": max(self.alphas) if self.alphas else 0.0,
            "cubes_visited": self.visited,
            "families": [{"system": f.system.system, "cubes": f.cubes,
                          "size": len(f), "Lambda": carleson_constant(f)}
                         for f in self.families],
            "failure": self.failure,
        }


def _ball_points(space, center, radius):
    return np.flatnonzero(space.dist[center] < radius)


def _enclosing_cube(systems, points):
    """Smallest cube over all systems containing every point of ``points``."""
    best = None
    for t, sysm in enumerate(systems):
        for l in range(len(sysm.levels) - 1, -1, -1):
            labs = sysm.labels[l, points]
            if np.all(labs == labs[0]):
                cube = sysm.cubes[int(labs[0])]
                key = (cube.measure, -cube.k, t)
                if best is None or key < best[0]:
                    best = (key, t, int(labs[0]))
                break
    return best[1], best[2]


def _threshold(values, masses, budget):
    """Smallest alpha among the values with mu{v > alpha} <= budget."""
    vals, inv = np.unique(values, return_inverse=True)
    mass_at = np.bincount(inv.ravel(), weights=masses, minlength=vals.size)
    # above[i] = mu{v > vals[i]}
    above = np.concatenate([np.cumsum(mass_at[::-1])[::-1][1:], [0.0]])
    ok = np.flatnonzero(above <= budget)
    return float(vals[ok[0]]) if ok.size else 0.0


def dominate_commutator(op, b, m, f, adjacent, enlargement=None,
                        max_cubes=100000):
    """Sparse families S_t and the fitted constant of the commutator domination.

    Follows the stopping-time construction on the first system, starting
    from its root: for each cube Q with ball B(Q) = B(x_Q, A1 delta^k) and
    enlarged ball C B(Q), the cube R_Q is the smallest cube of any system
    containing C B(Q).  E collects the points of Q where some
    |b - b_{R_Q}|^k |f| or local grand maximal function of
    (b - b_{R_Q})^k f 1_{C B(Q)} exceeds alpha times the average of
    |b - b_{R_Q}|^k |f| over C B(Q), with alpha the smallest level keeping
    mu(E) <= mu(Q) / (4 C_mu0).  The maximal subcubes with more than
    1/(2 C_mu0) of their mass in E are processed next.  S_t collects the
    cubes R_Q found in system t, and C* = max |T_b^m f| / RHS with RHS
    the domination sum at constant 1.
    """
    systems = adjacent.systems if hasattr(adjacent, "systems") else list(adjacent)
    sp = op.space
    b = np.asarray(b, dtype=float)
    f = np.asarray(f)
    base = systems[0]
    a0 = quasi_constant(sp)
    c_adj = getattr(adjacent, "C_adj", 1.0)
    j_tilde, c_enl = enlargement_constant(a0, c_adj)
    if enlargement is not None:
        c_enl = float(enlargement)
    c_mu0 = base.C_mu0
    mass = sp.masses

    chosen = {t: set() for t in range(len(systems))}
    alphas = []
    queue = [r.index for r in base.roots()]
    visited = 0
    while queue and visited < max_cubes:
        q = queue.pop()
        visited += 1
        cube = base.cubes[q]
        radius = base.A1_ball * base.delta ** cube.k
        ball = _ball_points(sp, cube.center, radius)
        big = _ball_points(sp, cube.center, c_enl * radius)
        t, rq = _enclosing_cube(systems, big)
        chosen[t].add(rq)
        b_r = cube_average(systems[t], rq, b)
        dev = b - b_r
        mu_big = mass[big].sum()
        crit = np.zeros(sp.n)
        for k in range(m + 1):
            h = np.abs(dev) ** k * np.abs(f)
            avg = np.sum(h[big] * mass[big]) / mu_big
            if avg <= 0:
                continue
            g = np.zeros(sp.n, dtype=np.result_type(f, float))
            g[big] = dev[big] ** k * f[big]
            M = local_grand_maximal(op, g, ball, c_enl)
            crit = np.maximum(crit, np.maximum(h, M) / avg)
        vals = crit[cube.members]
        alpha = _threshold(vals, mass[cube.members],
                           cube.measure / (4 * c_mu0))
        alphas.append(alpha)
        E = np.zeros(sp.n, dtype=bool)
        E[cube.members] = vals > alpha
        if E.any():
            queue.extend(stopping_cubes(base, q, E, 1.0 / (2 * c_mu0)))

    fams = [SparseFamily(systems[t], sorted(chosen[t]))
            for t in range(len(systems)) if chosen[t]]
    if m >= 1 and np.ptp(b) == 0:
        # exact zero; the binomial route would leave roundoff
        lhs = np.zeros(sp.n)
    else:
        lhs = np.abs(commutator(op, b, m, f, form="binomial"))
    rhs = commutator_bound(fams, b, m, f)
    tiny = 1e-12 * (lhs.max(initial=0.0) + 1e-300)
    failure = None
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs > tiny, lhs / rhs, 0.0)
    if np.any((lhs > tiny) & (rhs <= 0)):
        x = int(np.flatnonzero((lhs > tiny) & (rhs <= 0))[0])
        failure = {"point": x, "lhs": float(lhs[x])}
        c_star = float("inf")
    else:
        c_star = float(ratio.max(initial=0.0))
    return Domination(fams, c_star, lhs, rhs, c_enl, j_tilde, alphas,
                      visited, failure)


__all__ = [
    "SparseFamily", "SparseError", "carleson_constant", "sparsify",
    "sparsity_check", "sparse_operator_apply", "sparse_operator_matrix",
    "local_dyadic_maximal", "augment_family", "fit_oscillation_bound",
    "domination_sum", "commutator_bound", "dominate_commutator",
    "stopping_cubes", "cube_average", "cube_oscillation", "Augmentation",
    "Domination", "weak_type_ratio",
]
