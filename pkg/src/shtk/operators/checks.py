"""Sampled certificates for the kernel conditions: size, smoothness and
non-degeneracy.

Every check works on a bound :class:`DiscreteOperator` and reports fitted
constants over the sampled configurations; none of them asserts a bound by
itself.
"""

from __future__ import annotations

import numpy as np

from ..dyadic import quasi_constant


def volume_table(space):
    """V[x, y] = mu(B(x, d(x, y))), the open ball through y."""
    cache = getattr(space, "_volume", None)
    if cache is not None:
        return cache
    n = space.n
    out = np.empty((n, n))
    mass = space.masses
    for x in range(n):
        order = space.order[x]
        cm = np.concatenate([[0.0], np.cumsum(mass[order])])
        idx = np.searchsorted(space.sorted_dist[x], space.dist[x], side="left")
        out[x] = cm[idx]
    space._volume = out
    return out


def ball_mass(space, x, r):
    return float(space.masses[space.dist[x] < r].sum())


# ---------------------------------------------------------------- size


def size_certificate(op, n_pairs=4000, seed=0):
    """max and min of |K(x,y)| V(x,y) over sampled off-diagonal pairs."""
    sp = op.space
    rng = np.random.default_rng(seed)
    n = sp.n
    if n * (n - 1) <= n_pairs:
        xs, ys = np.nonzero(~np.eye(n, dtype=bool))
    else:
        xs = rng.integers(0, n, n_pairs)
        ys = rng.integers(0, n - 1, n_pairs)
        ys = ys + (ys >= xs)
    V = volume_table(sp)[xs, ys]
    K = np.abs(op.K[xs, ys])
    prod = K * V
    return {"max": float(prod.max()), "min": float(prod.min()),
            "pairs": int(xs.size)}


# ---------------------------------------------------------------- smoothness


def kernel_smoothness_check(op, n_triples=400, delta=None, seed=0):
    """Worst C in |K(x,y) - K(x',y)| + |K(y,x) - K(y,x')| <= C (d(x,x')/d(x,y))^delta / V(x,y).

    Triples satisfy 0 < d(x,x') <= d(x,y) / (2 A0).  Returns a dict with the
    fitted C, the exponent used and the number of admissible triples.
    """
    sp = op.space
    delta = op.kernel.delta if delta is None and op.kernel is not None else (
        1.0 if delta is None else delta)
    a0 = quasi_constant(sp)
    rng = np.random.default_rng(seed)
    V = volume_table(sp)
    d = sp.dist
    worst, count, tries = 0.0, 0, 0
    while count < n_triples and tries < 20 * n_triples:
        tries += 1
        x, y = rng.choice(sp.n, 2, replace=False)
        dxy = d[x, y]
        near = np.flatnonzero((d[x] > 0) & (d[x] <= dxy / (2 * a0)))
        near = near[near != y]
        if near.size == 0:
            continue
        xp = int(rng.choice(near))
        pts = np.array([x, xp, y])
        blk = op.block(pts, pts)
        diff = abs(blk[0, 2] - blk[1, 2]) + abs(blk[2, 0] - blk[2, 1])
        ratio = diff * V[x, y] / (d[x, xp] / dxy) ** delta
        worst = max(worst, float(ratio))
        count += 1
    return {"C": worst, "delta": float(delta), "triples": count}


# ---------------------------------------------------------------- non-degeneracy


DEFAULT_CBAR = (1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0)


def sample_scales(space, n_samples, seed=0, sep=3.0):
    """Random (x, r) with r log-uniform between just above the minimal gap and
    the largest radius that keeps a companion ball at distance sep*r in
    reach."""
    rng = np.random.default_rng(seed)
    lo = 1.01 * space.min_gap
    out = []
    for x in rng.integers(0, space.n, n_samples):
        reach = space.dist[x].max()
        hi = max(reach / (2 * sep), lo * 1.0001)
        r = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        out.append((int(x), r))
    return out


def companion_ball(op, x, r, inner, outer):
    """Best companion ball B(y, r) with inner r <= d(x,y) < outer r.

    A candidate qualifies when the real or imaginary part of K keeps one
    sign on B(x,r) x B(y,r); among those the one with the largest floor
    min |part| wins.  Returns (floor, y, part), or (0, -1, None) when no
    candidate qualifies.
    """
    sp = op.space
    d = sp.dist
    ball = np.flatnonzero(d[x] < r)
    cands = np.flatnonzero((d[x] >= inner * r) & (d[x] < outer * r))
    if cands.size == 0:
        return 0.0, -1, None
    K = op.K[ball]
    near = d[cands] < r
    best = (0.0, -1, None)
    parts = [("re", K.real)]
    if np.iscomplexobj(K):
        parts.append(("im", K.imag))
    for name, P in parts:
        pos = np.all(P > 0, axis=0)
        neg = np.all(P < 0, axis=0)
        floor = np.abs(P).min(axis=0)
        for sign_ok in (pos, neg):
            ok = ~np.any(near & ~sign_ok[None, :], axis=1)
            if not ok.any():
                continue
            fl = np.where(near, floor[None, :], np.inf).min(axis=1)
            fl = np.where(ok, fl, 0.0)
            i = int(np.argmax(fl))
            if fl[i] > best[0]:
                best = (float(fl[i]), int(cands[i]), name)
    return best


def nondegeneracy_check(op, n_samples=100, seed=0, cbar_grid=DEFAULT_CBAR,
                        target=0.95, samples=None, certificate=True):
    """Search annuli B(x, Cbar r) minus B(x, r) for |K(x,y)| >= 1/(c0 mu(B(x,r))).

    For each sampled (x, r) the needed constant is
    1 / (max_annulus |K(x,.)| mu(B(x,r))), infinite for an empty or
    vanishing annulus.  Cbar is the smallest grid value reaching the best
    pass fraction, and c0 the largest finite need there; ``passed`` compares
    that fraction with ``target``.  The ball-pair certificate looks, at separation
    max(3, 2 A0), for a companion ball on which Re K or Im K keeps one sign.
    """
    sp = op.space
    a0 = quasi_constant(sp)
    sep = max(3.0, 2.0 * a0)
    if samples is None:
        samples = sample_scales(sp, n_samples, seed, sep)
    grid = sorted(float(c) for c in cbar_grid)
    need = np.full((len(samples), len(grid)), np.inf)
    mu_b = np.empty(len(samples))
    for s, (x, r) in enumerate(samples):
        row = np.abs(op.block([x], np.arange(sp.n))[0])
        d = sp.dist[x]
        mu_b[s] = sp.masses[d < r].sum()
        for g, cbar in enumerate(grid):
            ann = (d >= r) & (d < cbar * r)
            if ann.any():
                kmax = row[ann].max()
                if kmax > 0:
                    need[s, g] = 1.0 / (kmax * mu_b[s])
    fractions = np.isfinite(need).mean(axis=0) if len(samples) else np.zeros(len(grid))
    # smallest Cbar reaching the best fraction on the grid
    chosen = int(np.argmax(fractions)) if len(grid) else 0
    col = need[:, chosen]
    ok = np.isfinite(col)
    out = {
        "kernel": op.name,
        "samples": len(samples),
        "Cbar": grid[chosen],
        "c0": float(col[ok].max()) if ok.any() else float("inf"),
        "c0_median": float(np.median(col[ok])) if ok.any() else float("inf"),
        "pass_fraction": float(ok.mean()) if len(samples) else 0.0,
        "passed": bool(len(samples) and ok.mean() >= target),
        "fractions": {grid[g]: float(fractions[g]) for g in range(len(grid))},
        "failures": [samples[s] for s in np.flatnonzero(~ok)][:20],
    }
    if certificate:
        floors = np.zeros(len(samples))
        parts = []
        for s, (x, r) in enumerate(samples):
            fl, _, part = companion_ball(op, x, r, sep, 2 * sep)
            floors[s] = fl
            parts.append(part)
        good = floors > 0
        out["certificate_fraction"] = float(good.mean()) if len(samples) else 0.0
        out["certificate_c0"] = (float((1.0 / (floors[good] * mu_b[good])).max())
                                 if good.any() else float("inf"))
        out["certificate_parts"] = {p: parts.count(p) for p in ("re", "im")}
        out["separation"] = sep
    return out


__all__ = [
    "volume_table", "ball_mass", "size_certificate", "kernel_smoothness_check",
    "sample_scales", "nondegeneracy_check", "companion_ball", "DEFAULT_CBAR",
]
