"""Finite spaces of homogeneous type.

A :class:`Space` is a weighted point cloud with a quasi-metric taken from a
closed list of model geometries.  The full distance table is computed once at
construction; every other module queries it.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

METRICS = ("euclidean", "halfline", "halfspace", "heisenberg", "omega")


class SpaceError(ValueError):
    pass


# ---------------------------------------------------------------- metrics


def _euclidean_table(coords):
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def heisenberg_coords_split(coords):
    """Split (x_1..x_n, y_1..y_n, t) rows into complex z and real t."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    n = (coords.shape[1] - 1) // 2
    z = coords[:, :n] + 1j * coords[:, n:2 * n]
    return z, coords[:, 2 * n]


def heisenberg_difference(cx, cy):
    """Group element y^{-1} o x for all pairs, as (zeta, t) arrays.

    The law is [z,t] o [z',t'] = [z+z', t+t'+2 Im sum z_j conj(z'_j)] and
    [z,t]^{-1} = [-z,-t].
    """
    zx, tx = heisenberg_coords_split(cx)
    zy, ty = heisenberg_coords_split(cy)
    zeta = zx[:, None, :] - zy[None, :, :]
    cross = np.sum(zx[:, None, :] * np.conj(zy[None, :, :]), axis=-1).imag
    t = tx[:, None] - ty[None, :] + 2.0 * cross
    return zeta, t


def _heisenberg_table(coords):
    zeta, t = heisenberg_difference(coords, coords)
    mod = np.sqrt(np.sum(np.abs(zeta) ** 2, axis=-1))
    return np.maximum(mod, np.sqrt(np.abs(t)))


def omega_quantity(k, cx, cy):
    """The complex quantity A(zeta, omega) and z*conj(w) for all pairs.

    Rows of ``cx``/``cy`` are (Re z, Im z, t) parametrizing the boundary of
    Omega_k.  A = (i/2)(s - t) + (|z|^{2k} + |w|^{2k})/2.
    """
    cx = np.atleast_2d(np.asarray(cx, dtype=float))
    cy = np.atleast_2d(np.asarray(cy, dtype=float))
    z = cx[:, 0] + 1j * cx[:, 1]
    w = cy[:, 0] + 1j * cy[:, 1]
    t = cx[:, 2]
    s = cy[:, 2]
    a = 0.5j * (s[None, :] - t[:, None]) + 0.5 * (
        np.abs(z[:, None]) ** (2 * k) + np.abs(w[None, :]) ** (2 * k))
    return a, z[:, None] * np.conj(w[None, :])


def omega_root(a, k):
    """Principal k-th root; Re a >= 0 on the boundary so no cut is crossed."""
    return np.power(a, 1.0 / k) if k > 1 else a


def omega_distance(k, cx, cy):
    a, zw = omega_quantity(k, cx, cy)
    d = np.sqrt(np.abs(omega_root(a, k) - zw))
    # the root leaves roundoff on coincident points; its square root is ~1e-8
    same = np.all(np.atleast_2d(cx)[:, None, :] == np.atleast_2d(cy)[None, :, :],
                  axis=-1)
    return np.where(same, 0.0, d)


def distance_table(metric, coords, params=None):
    params = params or {}
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if metric in ("euclidean", "halfline", "halfspace"):
        d = _euclidean_table(coords)
    elif metric == "heisenberg":
        d = _heisenberg_table(coords)
    elif metric == "omega":
        d = omega_distance(int(params.get("k", 1)), coords, coords)
    else:
        raise SpaceError(f"unknown metric {metric!r}")
    # mirror the upper triangle so symmetry is exact after rounding
    upper = np.triu(d, 1)
    return upper + upper.T


# ---------------------------------------------------------------- space


class Space:
    """Finite quasi-metric measure space.

    Points are addressed by their row index ``0..n-1``; ``labels`` keeps the
    external ids for file round trips.
    """

    def __init__(self, coords, masses=None, metric="euclidean", params=None,
                 model=None, labels=None):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        n = coords.shape[0]
        if n == 0:
            raise SpaceError("empty space")
        if metric not in METRICS:
            raise SpaceError(f"unknown metric {metric!r}")
        if masses is None:
            masses = np.full(n, 1.0 / n)
        masses = np.asarray(masses, dtype=float)
        if masses.shape != (n,):
            raise SpaceError("one mass per point required")
        if not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise SpaceError("masses must be finite and strictly positive")
        self.coords = coords
        self.masses = masses
        self.metric = metric
        self.params = dict(params or {})
        self.model = model or metric
        self.labels = (np.arange(n) if labels is None
                       else np.asarray(labels))
        self.dist = distance_table(metric, coords, self.params)
        off = self.dist[~np.eye(n, dtype=bool)]
        if n > 1 and np.min(off) <= 0:
            raise SpaceError("distinct points at distance zero")
        if not np.all(np.isfinite(self.dist)):
            raise SpaceError("non-finite distance")
        self._order = None
        self._sorted = None

    @property
    def n(self):
        return self.coords.shape[0]

    def __len__(self):
        return self.n

    @property
    def order(self):
        """Per-row argsort of the distance table (stable, so ties go by id)."""
        if self._order is None:
            self._order = np.argsort(self.dist, axis=1, kind="stable")
            self._sorted = np.take_along_axis(self.dist, self._order, axis=1)
        return self._order

    @property
    def sorted_dist(self):
        self.order
        return self._sorted

    @property
    def diameter(self):
        return float(self.dist.max())

    @property
    def min_gap(self):
        if self.n < 2:
            return np.inf
        return float(self.sorted_dist[:, 1].min())

    @property
    def total_mass(self):
        return float(self.masses.sum())

    def fingerprint(self):
        h = hashlib.sha1()
        h.update(self.metric.encode())
        h.update(json.dumps(self.params, sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.coords).tobytes())
        h.update(np.ascontiguousarray(self.masses).tobytes())
        return h.hexdigest()[:16]

    def origin_distance(self):
        """Distance of each point to the model's origin (for power weights)."""
        if self.metric == "halfline":
            return np.abs(self.coords[:, 0])
        if self.metric == "halfspace":
            return self.coords[:, -1]
        if self.metric == "heisenberg":
            z, t = heisenberg_coords_split(self.coords)
            return np.maximum(np.sqrt(np.sum(np.abs(z) ** 2, axis=1)),
                              np.sqrt(np.abs(t)))
        if self.metric == "omega":
            zero = np.zeros((1, 3))
            return omega_distance(int(self.params.get("k", 1)),
                                  self.coords, zero)[:, 0]
        return np.sqrt(np.sum(self.coords ** 2, axis=1))

    def to_dict(self):
        return {
            "metric": self.metric,
            "model": self.model,
            "params": self.params,
            "points": [
                {"id": int(i) if np.issubdtype(type(i), np.integer) else str(i),
                 "coords": [float(c) for c in row], "mass": float(m)}
                for i, row, m in zip(self.labels.tolist(), self.coords,
                                     self.masses)
            ],
        }

    @classmethod
    def from_dict(cls, data):
        pts = data["points"]
        coords = [p["coords"] for p in pts]
        masses = None
        if all("mass" in p for p in pts):
            masses = [p["mass"] for p in pts]
        labels = [p.get("id", i) for i, p in enumerate(pts)]
        return cls(coords, masses, metric=data.get("metric", "euclidean"),
                   params=data.get("params"), model=data.get("model"),
                   labels=labels)


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.members)

    def __contains__(self, i):
        return bool(np.any(self.members == i))


def _check_id(space, i):
    if not (0 <= int(i) < space.n):
        raise SpaceError(f"unknown point id {i}")
    return int(i)


def ball(space, center, r):
    """Open ball {y : d(center, y) < r}."""
    c = _check_id(space, center)
    if r < 0:
        raise SpaceError("negative radius")
    members = np.flatnonzero(space.dist[c] < r)
    return Ball(c, float(r), members)


def measure(space, points):
    idx = np.asarray(points, dtype=int).ravel()
    if idx.size == 0:
        return 0.0
    return float(space.masses[idx].sum())


@njit(cache=True)
def _triangle_scan(d):
    n = d.shape[0]
    worst = 0.0
    for x in range(n):
        for y in range(x + 1, n):
            best = np.inf
            for z in range(n):
                s = d[x, z] + d[z, y]
                if s < best:
                    best = s
            r = d[x, y] / best
            if r > worst:
                worst = r
    return worst


def quasi_triangle_constant(space, max_points=None, seed=0):
    """Tightest A_0 over all triples: max d(x,y) / (d(x,z) + d(z,y)).

    Exhaustive by default.  With ``max_points`` set and exceeded, the scan runs
    on a seeded random subset and the result is a lower bound.
    """
    if space.n < 2:
        raise SpaceError("need at least two points")
    d = space.dist
    if max_points is not None and space.n > max_points:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(space.n, max_points, replace=False))
        d = d[np.ix_(idx, idx)]
    return float(_triangle_scan(np.ascontiguousarray(d)))


def ball_measures(space, radius):
    """mu(B(x, radius)) for every center x."""
    return (space.dist < radius).astype(float) @ space.masses


def doubling_constant(space, radii):
    """max over centers and grid radii of mu(B(x,2r)) / mu(B(x,r))."""
    best = 1.0
    for r in np.asarray(radii, dtype=float).ravel():
        small = ball_measures(space, r)
        big = ball_measures(space, 2 * r)
        ok = small > 0
        if np.any(ok):
            best = max(best, float(np.max(big[ok] / small[ok])))
    return best


def default_radii(space, lam_max=4.0, count=8):
    if space.n < 2:
        return np.array([1.0])
    lo = 2.0 * space.min_gap
    hi = max(space.diameter / (4.0 * lam_max), lo * 1.0001)
    return np.geomspace(lo, hi, count)


def upper_dimension(space, lams=(1.5, 2.0, 3.0, 4.0), radii=None):
    """Fit n in mu(B(x, lam r)) <= C lam^n mu(B(x, r)).

    For every grid pair (r, lam) the worst ratio over centers is taken, and
    n is the least-squares slope through the origin of log(worst ratio)
    against log lam.  Fitting the worst case keeps balls cut by the edge of
    the space from dragging n down.  Returns ``(n, C)`` where C is the
    smallest constant making the inequality hold at every center with the
    fitted n.
    """
    lams = np.asarray(lams, dtype=float)
    if np.any(lams < 1):
        raise SpaceError("lambda grid values must be >= 1")
    if radii is None:
        radii = default_radii(space, float(lams.max()))
    xs, ys = [], []
    for r in np.asarray(radii, dtype=float):
        base = ball_measures(space, r)
        for lam in lams:
            ratio = np.log(ball_measures(space, lam * r) / base)
            xs.append(np.log(lam))
            ys.append(ratio.max())
    x = np.asarray(xs)
    y = np.asarray(ys)
    if np.allclose(y, 0.0) or np.dot(x, x) == 0:
        return 0.0, 1.0
    n = float(np.dot(x, y) / np.dot(x, x))
    c = float(np.exp(np.max(y - n * x)))
    return n, c


# ---------------------------------------------------------------- ball families


class BallFamily:
    """A finite family of balls, each stored as (center, member count).

    Every open ball B(c, r) is a prefix of the distance-sorted row of c, so a
    ball is determined by its center and how many points it holds.  Sums over
    balls then come from per-row cumulative sums.
    """

    def __init__(self, space, centers, counts, complete=False):
        self.space = space
        self.centers = np.asarray(centers, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.centers.shape != self.counts.shape:
            raise SpaceError("centers and counts differ in length")
        if self.centers.size == 0:
            raise SpaceError("empty ball family")
        if np.any(self.counts < 1) or np.any(self.counts > space.n):
            raise SpaceError("ball counts out of range")
        self.complete = complete

    def __len__(self):
        return self.centers.size

    @classmethod
    def all(cls, space):
        """Every distinct (center, radius) ball on the point cloud."""
        sd = space.sorted_dist
        n = space.n
        ends = np.ones((n, n), dtype=bool)
        if n > 1:
            ends[:, :-1] = sd[:, 1:] > sd[:, :-1]
        c, k = np.nonzero(ends)
        return cls(space, c, k + 1, complete=True)

    @classmethod
    def sample(cls, space, max_balls, seed=0):
        full = cls.all(space)
        if len(full) <= max_balls:
            return full
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(full), size=max_balls, replace=False))
        return cls(space, full.centers[pick], full.counts[pick])

    @classmethod
    def from_radii(cls, space, centers, radii):
        centers = np.asarray(centers, dtype=np.int64)
        radii = np.broadcast_to(np.asarray(radii, dtype=float), centers.shape)
        sd = space.sorted_dist
        counts = np.array([np.searchsorted(sd[c], r, side="left")
                           for c, r in zip(centers, radii)], dtype=np.int64)
        keep = counts > 0
        return cls(space, centers[keep], counts[keep])

    @classmethod
    def from_balls(cls, space, balls):
        return cls(space, [b.center for b in balls], [len(b) for b in balls])

    def members(self, i):
        return self.space.order[self.centers[i], :self.counts[i]]

    def radius(self, i):
        """A radius realizing ball i (the largest one)."""
        sd = self.space.sorted_dist[self.centers[i]]
        k = self.counts[i]
        return float(sd[k]) if k < self.space.n else float(
            np.nextafter(sd[-1], np.inf))

    def ball(self, i):
        return Ball(int(self.centers[i]), self.radius(i), self.members(i))

    def sums(self, values):
        """Sum of values * mass over every ball of the family."""
        v = np.asarray(values, dtype=float) * self.space.masses
        csum = np.cumsum(v[self.space.order], axis=1)
        return csum[self.centers, self.counts - 1]

    def measures(self):
        return self.sums(np.ones(self.space.n))

    def averages(self, values):
        return self.sums(values) / self.measures()

    def subfamily(self, idx):
        return BallFamily(self.space, self.centers[idx], self.counts[idx])

    def fingerprint(self):
        h = hashlib.sha1()
        h.update(self.space.fingerprint().encode())
        h.update(self.centers.tobytes())
        h.update(self.counts.tobytes())
        return h.hexdigest()[:16]


def default_family(space, max_balls=200_000, seed=0):
    """All balls up to n = 1000 points, a seeded subsample above."""
    if space.n <= 1000:
        return BallFamily.all(space)
    return BallFamily.sample(space, max_balls, seed)


# ---------------------------------------------------------------- generators


def _midpoints(n, a, b):
    h = (b - a) / n
    return a + h * (np.arange(n) + 0.5), h


def grid_1d(n, a=0.0, b=1.0):
    """Uniform midpoint grid on [a, b] with Lebesgue cell masses."""
    x, h = _midpoints(n, a, b)
    return Space(x[:, None], np.full(n, h), "euclidean", model="grid1d")


def grid_2d(n, a=0.0, b=1.0):
    side = int(round(np.sqrt(n)))
    if side * side != n:
        raise SpaceError("grid_2d needs a square number of points")
    x, h = _midpoints(side, a, b)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    coords = np.column_stack([xx.ravel(), yy.ravel()])
    return Space(coords, np.full(n, h * h), "euclidean", model="grid2d")


def halfline(n, lam=1.0, length=1.0):
    """Midpoint grid on (0, length] with masses x^{2 lam} dx."""
    if lam <= -0.5:
        raise SpaceError("Bessel measure needs lambda > -1/2")
    x, h = _midpoints(n, 0.0, length)
    return Space(x[:, None], x ** (2 * lam) * h, "halfline",
                 params={"lambda": lam}, model="halfline")


def _factor_near_cube(n, dims_free):
    """Split n = a^dims_free * b with a and b as close as possible."""
    best = None
    for a in range(1, n + 1):
        if a ** dims_free > n:
            break
        if n % (a ** dims_free):
            continue
        b = n // a ** dims_free
        score = abs(np.log(a / b))
        if best is None or score < best[0]:
            best = (score, a, b)
    return best[1], best[2]


def halfspace(n, lam=1.0, dim=2):
    """Grid on [-1,1]^{dim-1} x (0,1] with masses x_last^{2 lam} dx."""
    if lam <= -0.5:
        raise SpaceError("Bessel measure needs lambda > -1/2")
    a, b = _factor_near_cube(n, dim - 1)
    side, hs = _midpoints(a, -1.0, 1.0)
    last, hl = _midpoints(b, 0.0, 1.0)
    axes = [side] * (dim - 1) + [last]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.column_stack([m.ravel() for m in mesh])
    masses = coords[:, -1] ** (2 * lam) * hs ** (dim - 1) * hl
    return Space(coords, masses, "halfspace",
                 params={"lambda": lam, "dim": dim}, model="halfspace")


def heisenberg_lattice(n, degree=1):
    """Lattice in H^degree = C^degree x R on [-1,1]^{2 degree + 1}."""
    a, b = _factor_near_cube(n, 2 * degree)
    side, hs = _midpoints(a, -1.0, 1.0)
    tt, ht = _midpoints(b, -1.0, 1.0)
    mesh = np.meshgrid(*([side] * (2 * degree) + [tt]), indexing="ij")
    coords = np.column_stack([m.ravel() for m in mesh])
    masses = np.full(n, hs ** (2 * degree) * ht)
    return Space(coords, masses, "heisenberg", params={"degree": degree},
                 model="heisenberg")


def omega_lattice(n, k=1):
    """Lattice on the (Re z, Im z, t) parameter space of the boundary of Omega_k."""
    a, b = _factor_near_cube(n, 2)
    side, hs = _midpoints(a, -1.0, 1.0)
    tt, ht = _midpoints(b, -1.0, 1.0)
    mesh = np.meshgrid(side, side, tt, indexing="ij")
    coords = np.column_stack([m.ravel() for m in mesh])
    return Space(coords, np.full(n, hs * hs * ht), "omega", params={"k": k},
                 model="omega")


def random_cloud(n, dim=2, metric="euclidean", seed=0, params=None):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-1.0, 1.0, size=(n, dim))
    if metric in ("halfline", "halfspace"):
        coords[:, -1] = np.abs(coords[:, -1]) + 1e-3
    masses = rng.uniform(0.5, 1.5, size=n) / n
    return Space(coords, masses, metric, params=params, model="random")


GENERATORS = {
    "grid1d": lambda n, **kw: grid_1d(n, kw.get("a", 0.0), kw.get("b", 1.0)),
    "line": lambda n, **kw: grid_1d(n, -1.0, 1.0),
    "grid2d": lambda n, **kw: grid_2d(n),
    "halfline": lambda n, **kw: halfline(n, kw.get("lam", 1.0)),
    "halfspace": lambda n, **kw: halfspace(n, kw.get("lam", 1.0),
                                           kw.get("dim", 2)),
    "heisenberg": lambda n, **kw: heisenberg_lattice(n, kw.get("degree", 1)),
    "omega": lambda n, **kw: omega_lattice(n, kw.get("k", 1)),
}


def generate(model, n, **kw):
    try:
        gen = GENERATORS[model]
    except KeyError:
        raise SpaceError(f"unknown model {model!r}; "
                         f"choose from {sorted(GENERATORS)}") from None
    return gen(n, **kw)


# ---------------------------------------------------------------- io


def load_space(path, metric="euclidean", params=None):
    """Read a point cloud from JSON (with a ``metric`` field) or CSV.

    CSV rows are ``id,x1,...,xd[,mass]``; a header naming a ``mass`` column
    marks the last column as masses, otherwise masses default to 1/n.
    """
    path = str(path)
    if path.endswith(".json"):
        with open(path) as fh:
            data = json.load(fh)
        if "space" in data:
            data = data["space"]
        return Space.from_dict(data)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = None
    if rows and not _is_number(rows[0][0]):
        header, rows = rows[0], rows[1:]
    labels = [r[0] for r in rows]
    vals = np.array([[float(v) for v in r[1:]] for r in rows])
    masses = None
    if header is not None and header[-1].strip().lower() == "mass":
        masses, vals = vals[:, -1], vals[:, :-1]
    try:
        labels = [int(v) for v in labels]
    except ValueError:
        pass
    return Space(vals, masses, metric, params=params, labels=labels)


def save_space(space, path):
    with open(path, "w") as fh:
        json.dump(space.to_dict(), fh)


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False
