"""Muckenhoupt weights on a finite space.

All suprema run over a :class:`~shtk.space.BallFamily`; the default is every
ball realizable on the point cloud (subsampled above 1000 points), so the
reported constants are exact for the family and lower bounds for larger ones.
"""

from __future__ import annotations

import numpy as np

from .space import BallFamily, default_family, measure


class WeightError(ValueError):
    pass


class Weight:
    """Positive density on the points with a per-(name, p, family) cache."""

    def __init__(self, values, name=None):
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise WeightError("weight values must be positive and finite")
        self.values = values
        self.name = name
        self._cache = {}

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def power(self, a):
        return Weight(self.values ** a, name=f"({self.name})^{a}")

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def _values(w):
    v = w.values if isinstance(w, Weight) else np.asarray(w, dtype=float)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise WeightError("weight values must be positive and finite")
    return v


def _family(space, family):
    return default_family(space) if family is None else family


def _cached(w, key, fn):
    return w.cached(key, fn) if isinstance(w, Weight) else fn()


def ap_constant(space, w, p, family=None):
    """sup_B (avg_B w) (avg_B w^{-1/(p-1)})^{p-1}."""
    if p <= 1:
        raise WeightError("p must exceed 1")
    fam = _family(space, family)
    v = _values(w)

    def compute():
        mu = fam.measures()
        a = fam.sums(v) / mu
        b = fam.sums(v ** (-1.0 / (p - 1))) / mu
        # Jensen gives >= 1 on every ball; clip the rounding below it
        return max(float(np.max(a * b ** (p - 1))), 1.0)

    return _cached(w, ("ap", float(p), fam.fingerprint()), compute)


def ainfty_constant(space, w, family=None):
    """sup_B (avg_B w) exp(avg_B log(1/w))."""
    fam = _family(space, family)
    v = _values(w)

    def compute():
        mu = fam.measures()
        a = fam.sums(v) / mu
        g = np.exp(fam.sums(-np.log(v)) / mu)
        return max(float(np.max(a * g)), 1.0)

    return _cached(w, ("ainf", fam.fingerprint()), compute)


def bloom_weight(lam1, lam2, p):
    """nu = lam1^{1/p} lam2^{-1/p}."""
    if p <= 1:
        raise WeightError("p must exceed 1")
    return Weight(_values(lam1) ** (1.0 / p) * _values(lam2) ** (-1.0 / p),
                  name="bloom")


def bloom_root(lam1, lam2, p, m):
    """nu^{1/m}, the weight that measures b for the m-th commutator."""
    return bloom_weight(lam1, lam2, p).power(1.0 / m)


def reverse_holder_check(space, w, delta, family=None):
    """Smallest C with avg_B w <= C (avg_B w^delta)^{1/delta} over the family."""
    if not 0 < delta < 1:
        raise WeightError("delta must lie in (0, 1)")
    fam = _family(space, family)
    v = _values(w)
    mu = fam.measures()
    lhs = fam.sums(v) / mu
    rhs = (fam.sums(v ** delta) / mu) ** (1.0 / delta)
    return max(float(np.max(lhs / rhs)), 1.0)


def weighted_measure(space, w, points):
    idx = np.asarray(points, dtype=int).ravel()
    if idx.size == 0:
        return 0.0
    return float(np.sum(_values(w)[idx] * space.masses[idx]))


def _upper_half_level(vals, mass):
    """Largest v with mass{vals >= v} >= half the total."""
    order = np.argsort(-vals, kind="stable")
    cum = np.cumsum(mass[order])
    half = 0.5 * mass.sum()
    j = int(np.searchsorted(cum, half, side="left"))
    j = min(j, vals.size - 1)
    # rounding guard: step back while the prefix already reaches half
    while j > 0 and cum[j - 1] >= half:
        j -= 1
    return vals[order[j]]


def level_set_gammas(space, w, family=None):
    """Per ball, the largest gamma with mu{w >= gamma avg_B w} >= mu(B)/2."""
    fam = _family(space, family)
    v = _values(w)
    mu = space.masses
    out = np.empty(len(fam))
    avgs = fam.averages(v)
    for i in range(len(fam)):
        m = fam.members(i)
        out[i] = _upper_half_level(v[m], mu[m]) / avgs[i]
    return out


def ainfty_level_set_check(space, w, family=None, gammas=None):
    """Largest gamma for which every ball keeps half its mass where w >= gamma avg w.

    Returns ``(gamma, fractions)``.  Without a grid gamma is exact and
    ``fractions`` is empty; with a grid, gamma is the largest grid value that
    all balls pass and ``fractions`` maps each grid value to its pass rate.
    """
    per_ball = level_set_gammas(space, w, family)
    exact = float(per_ball.min())
    if gammas is None:
        return exact, {}
    gammas = np.sort(np.asarray(gammas, dtype=float))
    fractions = {float(g): float(np.mean(per_ball >= g)) for g in gammas}
    passing = [g for g in gammas if np.all(per_ball >= g)]
    return (float(passing[-1]) if passing else 0.0), fractions


def power_weight(space, a, floor=None):
    """|x|^a measured by distance to the model origin."""
    r = space.origin_distance()
    if floor is not None:
        r = np.maximum(r, floor)
    if np.any(r <= 0) and a < 0:
        raise WeightError("power weight with a < 0 vanishes at the origin")
    return Weight(np.where(r > 0, r, 1.0) ** a, name=f"pow:{a}")


def parse_weight(space, spec):
    """Weight from a spec string: ``1``, ``pow:a`` or ``file:<csv>``."""
    if spec is None or spec in ("1", "one", "const"):
        return Weight(np.ones(space.n), name="1")
    if spec.startswith("pow:"):
        return power_weight(space, float(spec[4:]))
    if spec.startswith("file:"):
        vals = np.loadtxt(spec[5:], delimiter=",", ndmin=1)
        if vals.ndim > 1:
            vals = vals[:, -1]
        if vals.size != space.n:
            raise WeightError("weight file length does not match the space")
        return Weight(vals, name=spec)
    raise WeightError(f"unknown weight spec {spec!r}")


__all__ = [
    "Weight", "WeightError", "ap_constant", "ainfty_constant", "bloom_weight",
    "bloom_root", "reverse_holder_check", "weighted_measure",
    "ainfty_level_set_check", "level_set_gammas", "power_weight",
    "parse_weight", "BallFamily", "measure",
]
