"""Systems of dyadic cubes and adjacent systems on a finite space.

Cubes are built from nested greedy nets: generation-k centers are
delta^k-separated and delta^k-covering, every finer center is attached to its
nearest coarser center, and cubes are assembled bottom-up.  The structural
properties are then verified on the finished tree with the constants that were
actually achieved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .space import Space, SpaceError, quasi_triangle_constant


class ConstructionError(RuntimeError):
    """A structural property failed after assembly."""


@dataclass
class Cube:
    index: int
    system: int
    k: int
    center: int
    members: np.ndarray = field(repr=False)
    parent: int = -1
    children: list = field(default_factory=list)
    inner: float = 0.0
    outer: float = 0.0
    measure: float = 0.0

    def __len__(self):
        return len(self.members)


def _level_range(space, delta, k_min, k_max):
    if not 0 < delta < 1:
        raise SpaceError("delta must lie in (0, 1)")
    if k_min is None:
        # coarsest level: delta^k exceeds the diameter, so one center covers
        k_min = 0
        diam = space.diameter
        while delta ** k_min <= diam:
            k_min -= 1
        while delta ** (k_min + 1) > diam:
            k_min += 1
    if k_max is None:
        # finest level: delta^k at most the minimum gap, so all points are centers
        k_max = k_min
        gap = space.min_gap
        if np.isfinite(gap):
            while delta ** k_max > gap:
                k_max += 1
    if k_max < k_min:
        raise SpaceError("k_max < k_min")
    return int(k_min), int(k_max)


def greedy_order(space, seed):
    """Candidate order for the nets: the seed first, then by distance from it.

    Ties in distance go to the smaller id.  Anchoring the scan at the seed
    makes rotated seeds give genuinely shifted lattices.
    """
    seed = int(seed) % space.n
    return space.order[seed]


def build_nets(space, delta=0.25, k_min=None, k_max=None, seed=0,
               order=None):
    """Nested greedy nets; returns ``{k: centers}`` with centers sorted by id."""
    if space.n == 0:
        raise SpaceError("empty space")
    k_min, k_max = _level_range(space, delta, k_min, k_max)
    cand = greedy_order(space, seed) if order is None else np.asarray(order)
    nets = {}
    chosen = []
    mindist = np.full(space.n, np.inf)
    for k in range(k_min, k_max + 1):
        sep = delta ** k
        for c in cand:
            if mindist[c] >= sep:
                chosen.append(int(c))
                np.minimum(mindist, space.dist[c], out=mindist)
        nets[k] = np.array(sorted(chosen), dtype=np.int64)
    return nets


def _nearest(space, points, centers):
    """Index into ``centers`` of the nearest center; ties go to the smaller id."""
    d = space.dist[np.ix_(points, centers)]
    # centers are sorted by id, so argmin picks the smallest id on ties
    return np.argmin(d, axis=1)


class DyadicSystem:
    """A leveled partition tree on a Space."""

    def __init__(self, space, delta, k_min, k_max, seed, nets, system=0):
        self.space = space
        self.delta = float(delta)
        self.k_min = k_min
        self.k_max = k_max
        self.seed = int(seed)
        self.system = system
        self.nets = nets
        self.cubes = []
        self.levels = []
        self.labels = np.zeros((k_max - k_min + 1, space.n), dtype=np.int64)
        self._assemble()
        self._measure_constants()

    @property
    def generations(self):
        return range(self.k_min, self.k_max + 1)

    def level(self, k):
        if not self.k_min <= k <= self.k_max:
            raise IndexError(f"generation {k} outside [{self.k_min}, {self.k_max}]")
        return k - self.k_min

    def cubes_at(self, k):
        return [self.cubes[i] for i in self.levels[self.level(k)]]

    def _assemble(self):
        sp = self.space
        nlev = self.k_max - self.k_min + 1
        # owner[l][p]: position within nets[k] of the center owning point p
        fine = self.nets[self.k_max]
        owner = _nearest(sp, np.arange(sp.n), fine)
        point_center = fine[owner]
        per_level = [None] * nlev
        per_level[-1] = point_center
        for l in range(nlev - 2, -1, -1):
            k = self.k_min + l
            finer = self.nets[k + 1]
            coarse = self.nets[k]
            up = coarse[_nearest(sp, finer, coarse)]
            lookup = dict(zip(finer.tolist(), up.tolist()))
            per_level[l] = np.array([lookup[c] for c in per_level[l + 1]],
                                    dtype=np.int64)
        # create cubes level by level, ordered by center id
        for l in range(nlev):
            k = self.k_min + l
            lev = []
            for c in self.nets[k]:
                members = np.flatnonzero(per_level[l] == c)
                if members.size == 0:
                    raise ConstructionError(f"empty cube at k={k}, center {c}")
                cube = Cube(len(self.cubes), self.system, k, int(c), members)
                cube.measure = float(sp.masses[members].sum())
                lev.append(cube.index)
                self.cubes.append(cube)
                self.labels[l, members] = cube.index
            self.levels.append(lev)
        for l in range(1, nlev):
            for ci in self.levels[l]:
                cube = self.cubes[ci]
                parent = int(self.labels[l - 1, cube.center])
                cube.parent = parent
                self.cubes[parent].children.append(ci)

    def _measure_constants(self):
        sp = self.space
        a_rat, A_rat = np.inf, 0.0
        for cube in self.cubes:
            scale = self.delta ** cube.k
            row = sp.dist[cube.center]
            outside = np.ones(sp.n, dtype=bool)
            outside[cube.members] = False
            cube.inner = float(row[outside].min()) if outside.any() else np.inf
            cube.outer = float(row[cube.members].max())
            a_rat = min(a_rat, cube.inner / scale)
            A_rat = max(A_rat, cube.outer / scale)
        if not np.isfinite(a_rat):
            # every cube is the whole space; any inner radius works
            a_rat = 1.0
        self.a1 = float(a_rat)
        self.A1 = float(A_rat) if A_rat > 0 else self.a1
        ratios = [self.cubes[c.parent].measure / c.measure
                  for c in self.cubes if c.parent >= 0]
        self.C_mu0 = float(max(ratios)) if ratios else 1.0
        self.M = max((len(c.children) for c in self.cubes), default=0)
        self.A1_ball = self._ball_factor()

    def _ball_factor(self):
        """Smallest factor A >= A1 on a 5% grid making B(child) inside B(parent)."""
        A = self.A1
        for _ in range(200):
            if _ball_monotone(self, A):
                return A
            A *= 1.05
        return np.inf

    def locate(self, point, k):
        if not 0 <= int(point) < self.space.n:
            raise SpaceError(f"unknown point {point}")
        return self.cubes[int(self.labels[self.level(k), int(point)])]

    def roots(self):
        return self.cubes_at(self.k_min)

    def descendants(self, ci, include_self=True):
        out = [ci] if include_self else []
        stack = list(self.cubes[ci].children)
        while stack:
            c = stack.pop()
            out.append(c)
            stack.extend(self.cubes[c].children)
        return out

    def ancestors(self, ci, include_self=True):
        out = [ci] if include_self else []
        p = self.cubes[ci].parent
        while p >= 0:
            out.append(p)
            p = self.cubes[p].parent
        return out

    def is_descendant(self, p, q):
        """True when cube p lies in the subtree of cube q (p == q allowed)."""
        cp, cq = self.cubes[p], self.cubes[q]
        if cp.k < cq.k:
            return False
        return int(self.labels[self.level(cq.k), cp.center]) == q

    def to_dict(self):
        return {
            "system": self.system,
            "delta": self.delta,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "seed": self.seed,
            "constants": {"a1": self.a1, "A1": self.A1,
                          "A1_ball": self.A1_ball, "C_mu0": self.C_mu0,
                          "M": self.M},
            "generations": [
                {"k": self.k_min + l,
                 "cubes": [{"id": c.index, "center": c.center,
                            "parent": c.parent,
                            "members": c.members.tolist()}
                           for c in (self.cubes[i] for i in lev)]}
                for l, lev in enumerate(self.levels)
            ],
        }


def build_dyadic_system(space, delta=0.25, k_min=None, k_max=None, seed=0,
                        system=0, check=True):
    k_min, k_max = _level_range(space, delta, k_min, k_max)
    nets = build_nets(space, delta, k_min, k_max, seed)
    sysm = DyadicSystem(space, delta, k_min, k_max, seed, nets, system)
    if check:
        report = verify_system(sysm)
        for key in ("partition", "nesting", "unique_ancestor", "sandwich",
                    "net_separated", "net_covering", "centers_inside"):
            if not report[key]:
                raise ConstructionError(f"property {key!r} failed")
    return sysm


# ---------------------------------------------------------------- verification


def _ball_monotone(system, A):
    sp = system.space
    for cube in system.cubes:
        if cube.parent < 0:
            continue
        par = system.cubes[cube.parent]
        child_ball = sp.dist[cube.center] < A * system.delta ** cube.k
        parent_ball = sp.dist[par.center] < A * system.delta ** par.k
        if np.any(child_ball & ~parent_ball):
            return False
    return True


def verify_system(system):
    """Boolean per structural property plus the achieved constants."""
    sp = system.space
    n = sp.n
    rep = {}
    part = True
    for l, lev in enumerate(system.levels):
        allm = np.concatenate([system.cubes[i].members for i in lev])
        if allm.size != n or not np.array_equal(np.sort(allm), np.arange(n)):
            part = False
            break
        for i in lev:
            if not np.array_equal(np.sort(system.cubes[i].members),
                                  np.flatnonzero(system.labels[l] == i)):
                part = False
                break
        if not part:
            break
    rep["partition"] = part

    nest, uniq = True, True
    for cube in system.cubes:
        if cube.k == system.k_min:
            continue
        l_up = system.level(cube.k - 1)
        owners = np.unique(system.labels[l_up, cube.members])
        if owners.size != 1:
            uniq = False
        if cube.parent < 0 or not np.all(
                np.isin(cube.members, system.cubes[cube.parent].members)):
            nest = False
    rep["nesting"] = nest
    rep["unique_ancestor"] = uniq

    inside, sandwich = True, True
    for cube in system.cubes:
        if not np.any(cube.members == cube.center):
            inside = False
        scale = system.delta ** cube.k
        # compare ratios exactly as the constants were measured
        row = sp.dist[cube.center] / scale
        inner = np.flatnonzero(row < system.a1)
        if not np.all(np.isin(inner, cube.members)):
            sandwich = False
        if np.any(row[cube.members] > system.A1):
            sandwich = False
    rep["centers_inside"] = inside
    rep["sandwich"] = sandwich and system.a1 > 0

    sep, cover = True, True
    for k, centers in system.nets.items():
        d = sp.dist[np.ix_(centers, centers)]
        if centers.size > 1:
            off = d[~np.eye(centers.size, dtype=bool)]
            if off.min() < system.delta ** k:
                sep = False
        if np.any(sp.dist[:, centers].min(axis=1) >= system.delta ** k):
            cover = False
    rep["net_separated"] = sep
    rep["net_covering"] = cover
    rep["ball_monotone"] = bool(np.isfinite(system.A1_ball))

    # geometric bound on the child count: finer centers inside the outer ball
    geo = 0
    for cube in system.cubes:
        if cube.k == system.k_max:
            continue
        finer = system.nets[cube.k + 1]
        ball = sp.dist[cube.center, finer] <= system.A1 * system.delta ** cube.k
        geo = max(geo, int(ball.sum()))
    rep["M"] = system.M
    rep["M_geometric_bound"] = geo
    rep["bounded_children"] = system.M <= max(geo, 1)
    rep["a1"] = system.a1
    rep["A1"] = system.A1
    rep["A1_ball"] = system.A1_ball
    rep["C_mu0"] = system.C_mu0
    ratios_ok = all(system.cubes[c.parent].measure <= system.C_mu0 * c.measure
                    * (1 + 1e-12) for c in system.cubes if c.parent >= 0)
    rep["measure_ratio"] = ratios_ok
    rep["all_ok"] = all(rep[k] for k in (
        "partition", "nesting", "unique_ancestor", "sandwich", "centers_inside",
        "net_separated", "net_covering", "bounded_children", "measure_ratio"))
    return rep


def locate(system, point, k):
    return system.locate(point, k)


# ---------------------------------------------------------------- adjacent systems


@dataclass
class AdjacentSystems:
    systems: list
    coverage: float
    C_adj: float
    sampled: int
    failures: list
    center_ok: float
    factors: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.systems)

    def report(self):
        return {"T": len(self.systems), "coverage": self.coverage,
                "C_adj": self.C_adj, "sampled": self.sampled,
                "center_condition": self.center_ok,
                "failures": self.failures[:50]}


def default_seeds(space, T):
    return [int(round(t * space.n / T)) % space.n for t in range(T)]


def cover_ball(systems, x, r, k):
    """Best (system, cube, factor) with B(x,r) inside a generation-k cube.

    ``factor`` is max d(x, y)/r over the cube, i.e. the smallest C with
    Q inside the closed ball of radius C r.  Returns None when no system
    covers the ball.
    """
    sp = systems[0].space
    members = np.flatnonzero(sp.dist[x] < r)
    best = None
    for t, sysm in enumerate(systems):
        if not sysm.k_min <= k <= sysm.k_max:
            continue
        l = sysm.level(k)
        q = sysm.labels[l, x]
        if np.all(sysm.labels[l, members] == q):
            cube = sysm.cubes[q]
            factor = float(sp.dist[x, cube.members].max() / r)
            if best is None or factor < best[2]:
                best = (t, cube, factor)
    return best


def ball_samples(systems, per_level=4, max_centers=None, seed=0):
    """Balls B(x, r) with delta^{k+3} < r <= delta^{k+2}, k over all generations."""
    sp = systems[0].space
    delta = systems[0].delta
    k_min = min(s.k_min for s in systems)
    k_max = max(s.k_max for s in systems)
    centers = np.arange(sp.n)
    if max_centers is not None and sp.n > max_centers:
        rng = np.random.default_rng(seed)
        centers = np.sort(rng.choice(sp.n, max_centers, replace=False))
    fracs = np.linspace(0.0, 1.0, per_level + 1)[1:]
    out = []
    for k in range(k_min, k_max + 1):
        for f in fracs:
            r = delta ** (k + 3 - f)
            out.extend((int(x), float(r), k) for x in centers)
    return out


def build_adjacent_systems(space, delta=0.25, T=3, seeds=None, k_min=None,
                           k_max=None, per_level=4, max_centers=256,
                           sample_seed=0):
    if T < 1:
        raise SpaceError("need at least one system")
    seeds = default_seeds(space, T) if seeds is None else list(seeds)
    if len(set(seeds)) != len(seeds):
        raise SpaceError("seeds must be distinct")
    k_min, k_max = _level_range(space, delta, k_min, k_max)
    systems = [build_dyadic_system(space, delta, k_min, k_max, s, system=t)
               for t, s in enumerate(seeds)]
    samples = ball_samples(systems, per_level, max_centers, sample_seed)
    covered, failures, factors, near = 0, [], [], 0
    for x, r, k in samples:
        hit = cover_ball(systems, x, r, k)
        if hit is None:
            failures.append({"x": x, "r": r, "k": k})
            continue
        covered += 1
        t, cube, factor = hit
        factors.append(factor)
        if space.dist[x, cube.center] < 2 * _a0_cached(space) * delta ** k:
            near += 1
    total = max(len(samples), 1)
    C_adj = float(max(factors)) if factors else 1.0
    C_adj = max(C_adj, 1.0)
    return AdjacentSystems(systems, covered / total if samples else 1.0, C_adj,
                           len(samples), failures,
                           near / max(covered, 1), np.asarray(factors))


def _a0_cached(space):
    a0 = getattr(space, "_a0", None)
    if a0 is None:
        a0 = (quasi_triangle_constant(space, max_points=1500)
              if space.n > 1 else 1.0)
        space._a0 = a0
    return a0


def quasi_constant(space):
    """Cached quasi-triangle constant of a space."""
    return _a0_cached(space)


def save_systems(systems, path, space=None):
    data = {"systems": [s.to_dict() for s in systems]}
    if space is not None:
        data["space"] = space.to_dict()
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_systems(path):
    """Rebuild the space and systems stored by :func:`save_systems`."""
    with open(path) as fh:
        data = json.load(fh)
    space = Space.from_dict(data["space"])
    out = []
    for s in data["systems"]:
        out.append(build_dyadic_system(space, s["delta"], s["k_min"],
                                       s["k_max"], s["seed"],
                                       system=s["system"]))
    return space, out
