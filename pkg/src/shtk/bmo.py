"""Mean oscillation, weighted BMO, medians, lower-bound test sets, atoms,
the atom/BMO pairing and the bilinear form Pi(g, h) = g T h - h T* g.

Balls are given as arrays of point ids (or :class:`~shtk.space.Ball`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dyadic import quasi_constant
from .operators.checks import companion_ball
from .space import Ball, default_family

#: relative slack for comparing sums of masses against half a ball
HALF_TOL = 1e-12


class BMOError(ValueError):
    pass


def _pts(ball):
    if isinstance(ball, Ball):
        return ball.members
    return np.asarray(ball, dtype=int).ravel()


def _wvals(space, w):
    if w is None:
        return np.ones(space.n)
    v = np.asarray(getattr(w, "values", w), dtype=float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise BMOError("weight must be positive and finite")
    return v


# ---------------------------------------------------------------- oscillation


def average(space, v, ball):
    idx = _pts(ball)
    mu = space.masses[idx]
    return float(np.sum(np.asarray(v)[idx] * mu) / mu.sum())


def oscillation(space, b, ball):
    """(1/mu(B)) int_B |b - b_B| dmu; 0 for an empty ball."""
    idx = _pts(ball)
    if idx.size == 0:
        return 0.0
    b = np.asarray(b, dtype=float)
    if np.ptp(b[idx]) == 0:
        return 0.0
    mu = space.masses[idx]
    bb = np.sum(b[idx] * mu) / mu.sum()
    return float(np.sum(np.abs(b[idx] - bb) * mu) / mu.sum())


def best_constant_deviation(space, b, ball):
    """inf_c (1/mu(B)) int_B |b - c| dmu, attained at a weighted median."""
    idx = _pts(ball)
    c = median(space, b, idx)
    mu = space.masses[idx]
    return float(np.sum(np.abs(np.asarray(b, dtype=float)[idx] - c) * mu) / mu.sum())


@njit(cache=True)
def _bit_add(tree, i, v):
    i += 1
    n = tree.shape[0]
    while i < n:
        tree[i] += v
        i += i & (-i)


@njit(cache=True)
def _bit_sum(tree, i):
    """Sum of entries 0..i-1."""
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def _family_deviation(order, mass, b, rank, sorted_b, centers, counts, perm):
    """int_B |b - b_B| dmu for every ball (center, count), via Fenwick trees
    keyed by the rank of b, growing each center's ball one point at a time."""
    n = order.shape[0]
    nb = centers.shape[0]
    out = np.zeros(nb)
    t_mass = np.zeros(n + 1)
    t_mb = np.zeros(n + 1)
    i = 0
    while i < nb:
        c = centers[perm[i]]
        t_mass[:] = 0.0
        t_mb[:] = 0.0
        tot_m = 0.0
        tot_mb = 0.0
        grown = 0
        while i < nb and centers[perm[i]] == c:
            k = counts[perm[i]]
            while grown < k:
                y = order[c, grown]
                _bit_add(t_mass, rank[y], mass[y])
                _bit_add(t_mb, rank[y], mass[y] * b[y])
                tot_m += mass[y]
                tot_mb += mass[y] * b[y]
                grown += 1
            a = tot_mb / tot_m
            # ranks with value <= a
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) // 2
                if sorted_b[mid] <= a:
                    lo = mid + 1
                else:
                    hi = mid
            m_lo = _bit_sum(t_mass, lo)
            s_lo = _bit_sum(t_mb, lo)
            dev = (a * m_lo - s_lo) + ((tot_mb - s_lo) - a * (tot_m - m_lo))
            out[perm[i]] = max(dev, 0.0)
            i += 1
    return out


def family_deviations(space, b, family):
    """int_B |b - b_B| dmu for every ball of a BallFamily."""
    b = np.asarray(b, dtype=float)
    rank = np.empty(space.n, dtype=np.int64)
    srt = np.argsort(b, kind="stable")
    rank[srt] = np.arange(space.n)
    perm = np.lexsort((family.counts, family.centers)).astype(np.int64)
    return _family_deviation(space.order, space.masses, b, rank, b[srt],
                             family.centers, family.counts, perm)


def bmo_norm(space, b, w=None, family=None, return_ball=False):
    """sup over the family of (1/w(B)) int_B |b - b_B| dmu."""
    fam = default_family(space) if family is None else family
    wv = _wvals(space, w)
    if np.ptp(np.asarray(b, dtype=float)) == 0:
        return (0.0, fam.ball(0)) if return_ball else 0.0
    dev = family_deviations(space, b, fam)
    wb = fam.sums(wv)
    ratio = dev / wb
    i = int(np.argmax(ratio))
    val = float(ratio[i])
    if return_ball:
        return val, fam.ball(i)
    return val


# ---------------------------------------------------------------- medians


def median(space, b, ball):
    """Smallest value v of b on the ball with mu{b > v} <= mu(B)/2 and
    mu{b < v} <= mu(B)/2, masses compared with a 1e-12 relative slack."""
    idx = _pts(ball)
    if idx.size == 0:
        raise BMOError("median of an empty ball")
    b = np.asarray(b, dtype=float)[idx]
    mu = space.masses[idx]
    half = 0.5 * mu.sum() * (1 + HALF_TOL)
    vals, inv = np.unique(b, return_inverse=True)
    at = np.bincount(inv.ravel(), weights=mu, minlength=vals.size)
    below = np.concatenate([[0.0], np.cumsum(at)[:-1]])
    above = mu.sum() - below - at
    ok = np.flatnonzero((below <= half) & (above <= half))
    return float(vals[ok[0]])


def median_admissible(space, b, ball, v):
    idx = _pts(ball)
    b = np.asarray(b, dtype=float)[idx]
    mu = space.masses[idx]
    half = 0.5 * mu.sum() * (1 + HALF_TOL)
    return bool(mu[b > v].sum() <= half and mu[b < v].sum() <= half)


@dataclass
class SignSets:
    E1: np.ndarray
    E2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    alpha: float
    slack: float = 0.0

    def as_tuple(self):
        return self.E1, self.E2, self.F1, self.F2


def testsets(space, b, ball, companion):
    """E_1 = {b >= a} and E_2 = {b <= a} in B, F_1 = {b <= a} and F_2 = {b >= a}
    in the companion ball, with a the median of b over the companion.

    ``slack`` is how far min mu(F_i) falls below mu(B~)/2 (0 when the
    median is exact)."""
    B = _pts(ball)
    Bt = _pts(companion)
    b = np.asarray(b, dtype=float)
    a = median(space, b, Bt)
    F1 = Bt[b[Bt] <= a]
    F2 = Bt[b[Bt] >= a]
    E1 = B[b[B] >= a]
    E2 = B[b[B] <= a]
    half = 0.5 * space.masses[Bt].sum()
    short = max(half - space.masses[F1].sum(), half - space.masses[F2].sum(), 0.0)
    return SignSets(E1, E2, F1, F2, a, float(short))


# keep pytest from collecting the name when it is imported into a test module
testsets.__test__ = False


def check_testsets(space, b, ball, companion, sets):
    """The three properties of the test sets, checked exhaustively.

    Returns a dict of booleans: ``cover`` (B = E1 u E2 and B~ = F1 u F2),
    ``half`` (mu(F_i) >= mu(B~)/2 up to one atom), ``sign`` and
    ``dominance`` on E_i x F_i.
    """
    B = np.sort(_pts(ball))
    Bt = np.sort(_pts(companion))
    b = np.asarray(b, dtype=float)
    cover = (np.array_equal(np.union1d(sets.E1, sets.E2), B)
             and np.array_equal(np.union1d(sets.F1, sets.F2), Bt))
    atom = space.masses[Bt].max() if Bt.size else 0.0
    half = 0.5 * space.masses[Bt].sum()
    half_ok = all(space.masses[F].sum() >= half - atom - 1e-15
                  for F in (sets.F1, sets.F2))
    sign_ok, dom_ok = True, True
    for E, F in ((sets.E1, sets.F1), (sets.E2, sets.F2)):
        if E.size == 0 or F.size == 0:
            continue
        diff = b[E][:, None] - b[F][None, :]
        if np.any(diff > 0) and np.any(diff < 0):
            sign_ok = False
        lhs = np.abs(b[E] - sets.alpha)[:, None]
        if np.any(lhs > np.abs(diff) + 1e-12 * (1 + np.abs(diff))):
            dom_ok = False
    return {"cover": bool(cover), "half": bool(half_ok), "sign": sign_ok,
            "dominance": dom_ok}


# ---------------------------------------------------------------- lower bound


def lower_bound_ratio(op, b, m, p, lam1=None, lam2=None, center=0, radius=None,
                      inner=None, outer=None):
    """Quantities of the lower-bound chain on the ball B(center, radius).

    The companion ball B(y, r) is the one in the annulus
    inner r <= d(x, y) < outer r whose Re or Im kernel part keeps one sign
    on the product with the largest floor.  Returns a dict with
    ``omega_m`` = Omega(b,B)^m, ``L`` = (1/mu(B)) sum_i int_B |T_b^m 1_{F_i}|,
    ``R_bound`` = mu(B)^{-1} lam1(B)^{1/p} (int_B lam2^{-1/(p-1)})^{1/p'},
    ``nu_ratio`` = nu^{1/m}(B)/mu(B) and the companion data; ``ok`` is False
    when no admissible companion exists.
    """
    sp = op.space
    if p <= 1:
        raise BMOError("p must exceed 1")
    b = np.asarray(b, dtype=float)
    l1 = _wvals(sp, lam1)
    l2 = _wvals(sp, lam2)
    a0 = quasi_constant(sp)
    inner = max(3.0, 2.0 * a0) if inner is None else inner
    outer = 2.0 * inner if outer is None else outer
    x = int(center)
    B = np.flatnonzero(sp.dist[x] < radius)
    mu = sp.masses
    muB = mu[B].sum()
    pp = p / (p - 1)
    r_bound = (np.sum(l1[B] * mu[B]) ** (1 / p)
               * np.sum(l2[B] ** (-1 / (p - 1)) * mu[B]) ** (1 / pp) / muB)
    nu = (l1 ** (1 / p) * l2 ** (-1 / p)) ** (1.0 / m)
    out = {"center": x, "radius": float(radius),
           "omega_m": oscillation(sp, b, B) ** m, "R_bound": float(r_bound),
           "nu_ratio": float(np.sum(nu[B] * mu[B]) / muB)}
    floor, y, part = companion_ball(op, x, radius, inner, outer)
    if y < 0:
        out.update(ok=False, L=float("nan"), companion=-1, part=None)
        return out
    Bt = np.flatnonzero(sp.dist[y] < radius)
    sets = testsets(sp, b, B, Bt)
    K = op.K
    L = 0.0
    for F in (sets.F1, sets.F2):
        if F.size == 0:
            continue
        blk = (b[B][:, None] - b[F][None, :]) ** m * K[np.ix_(B, F)] * mu[F][None, :]
        L += float(np.sum(np.abs(blk.sum(axis=1)) * mu[B]))
    out.update(ok=True, L=L / muB, companion=y, part=part, floor=floor,
               alpha=sets.alpha)
    return out


# ---------------------------------------------------------------- atoms


@dataclass
class Atom:
    ball: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def make_atom(space, ball, raw, w=None):
    """Center raw on the ball and scale it to ||a||_{L^2_w} = w(B)^{-1/2}."""
    B = _pts(ball)
    wv = _wvals(space, w)
    raw = np.asarray(raw, dtype=float)
    if raw.shape == (space.n,):
        outside = np.ones(space.n, dtype=bool)
        outside[B] = False
        if np.any(raw[outside] != 0):
            raise BMOError("raw function is not supported in the ball")
        vals = raw[B]
    elif raw.shape == (B.size,):
        vals = raw
    else:
        raise BMOError("raw values have the wrong length")
    mu = space.masses[B]
    vals = vals - np.sum(vals * mu) / mu.sum()
    nrm = np.sqrt(np.sum(vals ** 2 * wv[B] * mu))
    if nrm == 0 or np.abs(vals).max() <= 1e-14 * np.abs(raw).max():
        raise BMOError("raw function is constant on the ball")
    wB = np.sum(wv[B] * mu)
    a = np.zeros(space.n)
    a[B] = vals * (wB ** -0.5 / nrm)
    return Atom(np.sort(B), a, wv)


def atom_check(space, atom, w=None, ball=None):
    """Support, cancellation (1e-12) and size (1 + 1e-10) of a (1,2)-atom."""
    a = np.asarray(getattr(atom, "values", atom), dtype=float)
    B = _pts(atom.ball if ball is None else ball)
    wv = _wvals(space, atom.weight if w is None and hasattr(atom, "weight") else w)
    outside = np.ones(space.n, dtype=bool)
    outside[B] = False
    mu = space.masses
    if np.any(a[outside] != 0):
        return False
    total = np.sum(np.abs(a) * mu)
    if abs(np.sum(a * mu)) > 1e-12 * max(total, 1.0):
        return False
    wB = np.sum(wv[B] * mu[B])
    return bool(np.sqrt(np.sum(a ** 2 * wv * mu)) <= wB ** -0.5 * (1 + 1e-10))


def duality_pairing(space, g, atom):
    a = np.asarray(getattr(atom, "values", atom))
    return float(np.real(np.sum(a * np.asarray(g) * space.masses)))


def pi_product(op, g, h):
    """Pi(g, h) = g T h - h T* g with the transpose adjoint."""
    g = np.asarray(g)
    h = np.asarray(h)
    return g * op.apply(h) - h * op.adjoint(g)


__all__ = [
    "BMOError", "average", "oscillation", "best_constant_deviation",
    "family_deviations", "bmo_norm", "median", "median_admissible",
    "SignSets", "testsets", "check_testsets", "lower_bound_ratio", "Atom",
    "make_atom", "atom_check", "duality_pairing", "pi_product",
]
