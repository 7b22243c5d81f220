"""Haar basis adapted to a dyadic system.

For a cube Q with children Q_1, ..., Q_M (ordered by center id) and tails
E_e = Q_e u ... u Q_M, the cancellative functions are

    h_Q^e = a_e 1_{Q_e} - b_e 1_{E_{e+1}},   e = 1..M-1,

    a_e = sqrt(mu(E_{e+1}) / (mu(Q_e) mu(E_e))),
    b_e = sqrt(mu(Q_e) / (mu(E_e) mu(E_{e+1}))).

Each root also carries the non-cancellative h^0 = mu(Q)^{-1/2} 1_Q so the
basis is complete on the finite space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class HaarError(ValueError):
    pass


@dataclass
class HaarFunction:
    cube: int
    eps: int
    children: tuple
    a: float = 0.0
    b: float = 0.0
    head: np.ndarray = field(default=None, repr=False)   # Q_e members
    tail: np.ndarray = field(default=None, repr=False)   # E_{e+1} members


class HaarBasis:
    """All Haar functions of a system, stored as rows of a dense matrix."""

    def __init__(self, system):
        self.system = system
        sp = system.space
        self.functions = []
        rows = []
        for root in system.roots():
            f = HaarFunction(root.index, 0, tuple(root.children))
            self.functions.append(f)
            v = np.zeros(sp.n)
            v[root.members] = root.measure ** -0.5
            rows.append(v)
        for cube in system.cubes:
            kids = sorted(cube.children, key=lambda c: system.cubes[c].center)
            if len(kids) < 2:
                continue
            sizes = np.array([system.cubes[c].measure for c in kids])
            # tails[e] = mu(E_{e+1}) in 1-based notation, suffix sums
            tails = np.cumsum(sizes[::-1])[::-1]
            for e in range(len(kids) - 1):
                q, rest, whole = sizes[e], tails[e + 1], tails[e]
                if q <= 0 or rest <= 0:
                    raise HaarError("child of zero measure")
                a = np.sqrt(rest / (q * whole))
                b = np.sqrt(q / (whole * rest))
                head = system.cubes[kids[e]].members
                tail = np.concatenate([system.cubes[c].members
                                       for c in kids[e + 1:]])
                f = HaarFunction(cube.index, e + 1, tuple(kids), a, b,
                                 head, tail)
                self.functions.append(f)
                v = np.zeros(sp.n)
                v[head] = a
                v[tail] = -b
                rows.append(v)
        self.matrix = np.array(rows) if rows else np.zeros((0, sp.n))
        self.index = {(f.cube, f.eps): i for i, f in enumerate(self.functions)}
        self.cube_measure = np.array(
            [system.cubes[f.cube].measure for f in self.functions])

    def __len__(self):
        return len(self.functions)

    @property
    def space(self):
        return self.system.space

    def vector(self, cube, eps):
        return self.matrix[self.index[(cube, eps)]]

    def gram(self):
        m = self.matrix
        return (m * self.space.masses) @ m.T

    def cancellative(self):
        return np.array([f.eps > 0 for f in self.functions], dtype=bool)


def build_haar(system):
    return HaarBasis(system)


def expand(basis, f):
    """Coefficients <f, h> for every Haar function, in basis order."""
    f = np.asarray(f)
    return basis.matrix @ (f * basis.space.masses)


def coefficient_map(basis, coeffs):
    return {(fn.cube, fn.eps): c for fn, c in zip(basis.functions, coeffs)}


def reconstruct(basis, coeffs):
    if isinstance(coeffs, dict):
        try:
            coeffs = np.array([coeffs[(f.cube, f.eps)]
                               for f in basis.functions])
        except KeyError as exc:
            raise HaarError(f"missing coefficient {exc.args[0]}") from None
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] != len(basis):
        raise HaarError("coefficient vector has the wrong length")
    return coeffs @ basis.matrix


def conditional_expectation(system, f, k):
    """E_k f: average of f over each generation-k cube."""
    sp = system.space
    lab = system.labels[system.level(k)]
    f = np.asarray(f)
    num = np.bincount(lab, weights=(f * sp.masses).real,
                      minlength=len(system.cubes))
    out = num[lab]
    if np.iscomplexobj(f):
        im = np.bincount(lab, weights=(f * sp.masses).imag,
                         minlength=len(system.cubes))
        out = out + 1j * im[lab]
    den = np.bincount(lab, weights=sp.masses, minlength=len(system.cubes))
    return out / den[lab]


def haar_difference(basis, f, k):
    """D_k f as the Haar sum over generation-k cubes."""
    sysm = basis.system
    gen = np.array([sysm.cubes[fn.cube].k == k and fn.eps > 0
                    for fn in basis.functions], dtype=bool)
    c = expand(basis, f)
    return (c * gen) @ basis.matrix


def martingale(basis, f, k):
    """(E_k f, D_k f) with D_k = E_{k+1} - E_k from conditional averages."""
    sysm = basis.system
    if not sysm.k_min <= k < sysm.k_max:
        raise HaarError(f"generation {k} needs k and k+1 in range")
    e_k = conditional_expectation(sysm, f, k)
    e_next = conditional_expectation(sysm, f, k + 1)
    return e_k, e_next - e_k


def square_function(basis, f):
    """S f(x) = (sum over cancellative h_Q^e of |<f,h>|^2 1_Q(x)/mu(Q))^{1/2}."""
    sysm = basis.system
    c = expand(basis, f)
    canc = basis.cancellative()
    per_cube = np.zeros(len(sysm.cubes))
    np.add.at(per_cube, [fn.cube for fn in basis.functions],
              np.where(canc, np.abs(c) ** 2, 0.0))
    out = np.zeros(basis.space.n)
    for cube in sysm.cubes:
        if per_cube[cube.index] > 0:
            out[cube.members] += per_cube[cube.index] / cube.measure
    return np.sqrt(out)


def norm_bands(basis, ps=(1, 2, 4, np.inf)):
    """Bands of ||h||_p / mu(Q_e)^{1/p - 1/2} and of ||h||_1 ||h||_inf."""
    mu = basis.space.masses
    out = {}
    for p in ps:
        vals = []
        for fn, row in zip(basis.functions, basis.matrix):
            if fn.eps == 0:
                continue
            q = mu[fn.head].sum()
            if np.isinf(p):
                nrm = np.abs(row).max()
                scale = q ** -0.5
            else:
                nrm = (np.abs(row) ** p @ mu) ** (1.0 / p)
                scale = q ** (1.0 / p - 0.5)
            vals.append(nrm / scale)
        out[p] = (min(vals), max(vals)) if vals else (1.0, 1.0)
    prod = [(np.abs(row) @ mu) * np.abs(row).max()
            for fn, row in zip(basis.functions, basis.matrix) if fn.eps > 0]
    out["l1_linf"] = (min(prod), max(prod)) if prod else (1.0, 1.0)
    return out


# ---------------------------------------------------------------- weighted Haar


@dataclass
class WeightedHaar:
    vectors: np.ndarray = field(repr=False)   # h^{w,e}, rows aligned with basis
    C: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    tails: np.ndarray = field(repr=False)     # h^1_{E_e} = 1_{E_e}/mu(E_e)
    mask: np.ndarray = field(repr=False)      # True for cancellative rows
    C2_over_avg: float = 0.0


def weighted_haar(basis, w):
    """Weighted Haar functions and the decomposition h = C h^w + D h^1_E."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise HaarError("weight must be positive and finite")
    sp = basis.space
    mu = sp.masses
    wm = w * mu
    nf = len(basis)
    vecs = np.zeros((nf, sp.n))
    tails = np.zeros((nf, sp.n))
    C = np.zeros(nf)
    D = np.zeros(nf)
    mask = basis.cancellative()
    coeff_w = expand(basis, w)
    worst = 0.0
    for i, fn in enumerate(basis.functions):
        if fn.eps == 0:
            continue
        wq = wm[fn.head].sum()
        wt = wm[fn.tail].sum()
        we = wq + wt
        hw = np.zeros(sp.n)
        hw[fn.head] = np.sqrt(wt / wq)
        hw[fn.tail] = -np.sqrt(wq / wt)
        hw /= np.sqrt(we)
        e_set = np.concatenate([fn.head, fn.tail])
        mu_e = mu[e_set].sum()
        h1 = np.zeros(sp.n)
        h1[e_set] = 1.0 / mu_e
        d = coeff_w[i] / (we / mu_e)
        resid = basis.matrix[i] - d * h1
        c = float(np.sum(resid * hw * wm))
        vecs[i], tails[i], C[i], D[i] = hw, h1, c, d
        cube = basis.system.cubes[fn.cube]
        avg_q = wm[cube.members].sum() / cube.measure
        worst = max(worst, c * c / avg_q)
    return WeightedHaar(vecs, C, D, tails, mask, worst)
