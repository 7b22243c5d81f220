"""Discrete integral operators, iterated commutators and maximal functions.

A kernel bound to a space becomes the matrix K[x, y] with a zero diagonal
(the discrete principal value), and

    T f(x)  = sum_y K[x, y] f(y) mu_y,
    T* g(y) = sum_x K[x, y] g(x) mu_x,

so <T f, g>_mu = <f, T* g>_mu holds up to rounding.  The adjoint uses the plain
transpose: the pairing is bilinear, with no complex conjugation.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .kernels import Kernel


class OperatorError(ValueError):
    pass


class DiscreteOperator:
    """Kernel bound to a space; the dense matrix is built lazily and cached."""

    def __init__(self, kernel, space, matrix=None, check=True):
        if kernel is not None and check:
            kernel.check_space(space)
        self.kernel = kernel
        self.space = space
        self._K = None
        if matrix is not None:
            matrix = np.array(matrix)
            if matrix.shape != (space.n, space.n):
                raise OperatorError("kernel matrix has the wrong shape")
            np.fill_diagonal(matrix, 0)
            self._K = matrix

    @classmethod
    def from_matrix(cls, space, matrix, name="matrix"):
        op = cls(None, space, matrix=matrix, check=False)
        op._name = name
        return op

    @property
    def name(self):
        return self.kernel.name if self.kernel is not None else self._name

    @property
    def K(self):
        if self._K is None:
            c = self.space.coords
            self._K = self.kernel.evaluate(c, c)
            np.fill_diagonal(self._K, 0)
        return self._K

    @property
    def is_complex(self):
        return np.iscomplexobj(self.K) if self._K is not None else bool(
            self.kernel is not None and self.kernel.is_complex)

    def block(self, rows, cols):
        """K restricted to rows x cols without forming the full matrix."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        if self._K is not None:
            return self._K[np.ix_(rows, cols)]
        c = self.space.coords
        out = self.kernel.evaluate(c[rows], c[cols])
        out[rows[:, None] == cols[None, :]] = 0
        return out

    def apply(self, f):
        f = np.asarray(f)
        return self.K @ (f * self.space.masses)

    def adjoint(self, g):
        g = np.asarray(g)
        return self.K.T @ (g * self.space.masses)

    def matrix(self):
        """The map f -> T f as a plain matrix."""
        return self.K * self.space.masses[None, :]

    def __repr__(self):
        return f"DiscreteOperator({self.name}, n={self.space.n})"


def bind(kernel, space):
    if isinstance(kernel, DiscreteOperator):
        if kernel.space is not space:
            raise OperatorError("operator is bound to another space")
        return kernel
    if not isinstance(kernel, Kernel):
        raise OperatorError("expected a Kernel or DiscreteOperator")
    return DiscreteOperator(kernel, space)


def apply(kernel, space, f):
    return bind(kernel, space).apply(f)


def adjoint_apply(kernel, space, g):
    return bind(kernel, space).adjoint(g)


# ---------------------------------------------------------------- commutators


def binomial(m, k):
    return math.comb(m, k)


def commutator(op, b, m, f, form="recursive", c=0.0):
    """T_b^m f = [b, T_b^{m-1}] f.

    ``form`` selects the evaluation route: ``recursive`` applies the
    definition m times, ``binomial`` uses
    sum_k (-1)^k C(m,k) (b-c)^{m-k} T((b-c)^k f), ``matrix`` forms the
    kernel (b(x) - b(y))^m K(x, y).
    """
    if m < 0:
        raise OperatorError("m must be non-negative")
    b = np.asarray(b, dtype=float)
    f = np.asarray(f)
    if form == "recursive":
        def step(level, g):
            if level == 0:
                return op.apply(g)
            return b * step(level - 1, g) - step(level - 1, b * g)
        # the recursion branches 2^m times; m stays small in practice
        return step(m, f)
    if form == "binomial":
        s = b - c
        out = 0
        for k in range(m + 1):
            out = out + (-1) ** k * binomial(m, k) * s ** (m - k) * op.apply(s ** k * f)
        return out
    if form == "matrix":
        return commutator_matrix(op, b, m) @ f
    raise OperatorError(f"unknown commutator form {form!r}")


def commutator_matrix(op, b, m):
    """Matrix of f -> T_b^m f, i.e. (b(x) - b(y))^m K(x, y) mu_y."""
    b = np.asarray(b, dtype=float)
    return (b[:, None] - b[None, :]) ** m * op.matrix()


# ---------------------------------------------------------------- maximal functions


def _valid_ends(sd):
    """Boolean mask over counts 1..n: True where an open ball has that count."""
    n = sd.shape[1]
    ends = np.ones(sd.shape, dtype=bool)
    # count j (1-based) is realizable iff j == n or sd[j] > sd[j-1]
    ends[:, :-1] = sd[:, 1:] > sd[:, :-1]
    return ends


def maximal(space, f):
    """Uncentered Hardy-Littlewood maximal function over all realizable balls."""
    f = np.abs(np.asarray(f))
    return _maximal(space.order, space.masses, f.astype(float),
                    _valid_ends(space.sorted_dist))


@njit(cache=True)
def _maximal(order, mass, f, ends):
    n = order.shape[0]
    out = np.zeros(n)
    avg = np.empty(n)
    for c in range(n):
        s = 0.0
        m = 0.0
        for j in range(n):
            y = order[c, j]
            s += f[y] * mass[y]
            m += mass[y]
            avg[j] = s / m if ends[c, j] else -1.0
        best = -1.0
        for j in range(n - 1, -1, -1):
            if avg[j] > best:
                best = avg[j]
            y = order[c, j]
            if best > out[y]:
                out[y] = best
    return out


def truncated_maximal(op, f):
    """T^* f(x) = sup_eps |sum_{d(x,y) > eps} K(x,y) f(y) mu_y|."""
    sp = op.space
    f = np.asarray(f)
    order = sp.order
    terms = np.take_along_axis(op.K * (f * sp.masses)[None, :], order, axis=1)
    # suffix[:, j] sums positions j..n-1; the set {d > eps} starts at a count
    # j that ends a tie group
    suffix = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
    ends = _valid_ends(sp.sorted_dist)
    start_ok = np.zeros_like(ends)
    start_ok[:, 1:] = ends[:, :-1]
    vals = np.where(start_ok, np.abs(suffix), 0.0)
    return vals.max(axis=1)


def enlargement_constant(a0, c_adj):
    """(j, 2^{j+2} A0) for the smallest integer j with 2^j > max(3 A0, 2 A0 C_adj)."""
    target = max(3 * a0, 2 * a0 * c_adj)
    j = int(math.floor(math.log2(target))) + 1
    while 2.0 ** (j - 1) > target:
        j -= 1
    while 2.0 ** j <= target:
        j += 1
    return j, 2.0 ** (j + 2) * a0


@njit(cache=True)
def _grand(order, sd, ends, kr, ki, g_re, g_im, mass, centers, inside,
           rows, enlarge):
    """Core of the (local) grand maximal function.

    For each center c and each realizable ball B = B(c, r), with r taken
    just above its farthest member, the value is
    max over xi in B of |T(g 1_{X minus B(c, enlarge r)})(xi)|, and every
    point of B receives the maximum over the balls that contain it.  Only
    balls made of ``inside`` points count.
    """
    n = order.shape[0]
    out = np.zeros(n)
    nr = rows.shape[0]
    col_re = np.empty(nr)
    col_im = np.empty(nr)
    vals = np.empty(n)
    row_pos = np.full(n, -1)
    for i in range(nr):
        row_pos[rows[i]] = i
    for ci in range(centers.shape[0]):
        c = centers[ci]
        for i in range(nr):
            col_re[i] = 0.0
            col_im[i] = 0.0
        # largest ball made of inside points
        jmax = 0
        while jmax < n and inside[order[c, jmax]]:
            jmax += 1
        for j in range(n):
            vals[j] = -1.0
        # the ball with count j+1 is B(c, r) for r just above sd[c, j]; the
        # complement of its enlargement starts after every d <= C sd[c, j]
        starts = np.full(jmax, -1, dtype=np.int64)
        for j in range(jmax):
            if not ends[c, j]:
                continue
            r = sd[c, j]
            lo = 0
            hi = n
            target = enlarge * r
            while lo < hi:
                mid = (lo + hi) // 2
                if sd[c, mid] <= target:
                    lo = mid + 1
                else:
                    hi = mid
            starts[j] = lo
        # grow the suffix from the far end, visiting balls by decreasing start
        idx = np.argsort(-starts)
        p = n
        for q in range(jmax):
            j = idx[q]
            s = starts[j]
            if s < 0:
                break
            while p > s:
                p -= 1
                y = order[c, p]
                gr = g_re[y] * mass[y]
                gi = g_im[y] * mass[y]
                if gr == 0.0 and gi == 0.0:
                    continue
                for i in range(nr):
                    a = kr[rows[i], y]
                    b = ki[rows[i], y]
                    col_re[i] += a * gr - b * gi
                    col_im[i] += a * gi + b * gr
            best = 0.0
            for t in range(j + 1):
                xi = order[c, t]
                i = row_pos[xi]
                v = math.sqrt(col_re[i] * col_re[i] + col_im[i] * col_im[i])
                if v > best:
                    best = v
            vals[j] = best
        best = -1.0
        for j in range(jmax - 1, -1, -1):
            if vals[j] > best:
                best = vals[j]
            y = order[c, j]
            if best > out[y]:
                out[y] = best
    return out


def local_grand_maximal(op, g, ball_points, enlargement):
    """M_{T,B0} g(x) = sup over balls B in B0 containing x of
    max_{xi in B} |T(g 1_{C B0 minus C B})(xi)|.

    ``g`` must already be cut off to C B0; ``ball_points`` lists B0.  Points
    outside B0 get 0.
    """
    sp = op.space
    inside = np.zeros(sp.n, dtype=np.bool_)
    inside[np.asarray(ball_points, dtype=int)] = True
    rows = np.flatnonzero(inside)
    return _grand_call(op, g, rows, inside, rows, enlargement)


def grand_maximal(op, f, enlargement):
    """M_T f(x) = sup_{B ni x} max_{xi in B} |T(f 1_{X minus C B})(xi)|."""
    sp = op.space
    allp = np.arange(sp.n)
    return _grand_call(op, f, allp, np.ones(sp.n, dtype=np.bool_), allp,
                       enlargement)


def _grand_call(op, g, centers, inside, rows, enlargement):
    sp = op.space
    g = np.asarray(g)
    K = op.K
    kr = np.ascontiguousarray(K.real, dtype=float)
    ki = (np.ascontiguousarray(K.imag, dtype=float) if np.iscomplexobj(K)
          else np.zeros_like(kr))
    g_re = np.ascontiguousarray(np.real(g), dtype=float)
    g_im = np.ascontiguousarray(np.imag(g), dtype=float) if np.iscomplexobj(g) \
        else np.zeros(sp.n)
    return _grand(sp.order, sp.sorted_dist, _valid_ends(sp.sorted_dist),
                  kr, ki, g_re, g_im, sp.masses, np.asarray(centers, np.int64),
                  inside, np.asarray(rows, np.int64), float(enlargement))


__all__ = [
    "DiscreteOperator", "OperatorError", "bind", "apply", "adjoint_apply",
    "binomial", "commutator", "commutator_matrix", "maximal",
    "truncated_maximal", "enlargement_constant", "grand_maximal",
    "local_grand_maximal",
]
