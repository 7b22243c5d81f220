"""Modified Bessel functions I_nu and the Bessel heat and Riesz kernels.

I_nu uses its power series below the crossover ``Z_STAR`` and the large-z
expansion

    I_nu(z) = e^z / sqrt(2 pi z) * sum_k (-1)^k [nu, k] (2z)^{-k}

above it, with [nu, 0] = 1 and
[nu, k] = (4nu^2 - 1)(4nu^2 - 9)...(4nu^2 - (2k-1)^2) / (4^k k!).

Kernels work with the reduced form e^{-z} z^{-nu} I_nu(z), which is finite and
smooth on (0, inf) for every nu > -1.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

Z_STAR = 20.0


class BesselError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


# ---------------------------------------------------------------- I_nu


@njit(cache=True)
def _series_reduced(nu, z, c0=-1.0):
    """sum_m (1/2)^{2m+nu} z^{2m} / (m! Gamma(m+nu+1)), i.e. z^{-nu} I_nu(z).

    ``c0`` = 2^{-nu}/Gamma(nu+1) may be passed in to skip the Gamma call.
    """
    term = c0 if c0 > 0 else 2.0 ** (-nu) / math.gamma(nu + 1.0)
    total = term
    q = 0.25 * z * z
    m = 0
    while True:
        m += 1
        term *= q / (m * (m + nu))
        total += term
        if term < 1e-17 * total or m > 500:
            break
    return total


@njit(cache=True)
def _asymptotic_sum(nu, z):
    """sum_k (-1)^k [nu,k] (2z)^{-k}, truncated at the smallest term."""
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = 1.0
    k = 0
    while k < 200:
        k += 1
        nxt = -term * (mu - (2 * k - 1) ** 2) / (4.0 * k * 2.0 * z)
        if nxt == 0.0:
            break
        if abs(nxt) >= prev:
            break
        total += nxt
        term = nxt
        prev = abs(nxt)
        if prev < 1e-17 * abs(total):
            break
    return total


@njit(cache=True)
def _ive_reduced(nu, z, c0=-1.0):
    """e^{-z} z^{-nu} I_nu(z) for z > 0."""
    if z < Z_STAR:
        return math.exp(-z) * _series_reduced(nu, z, c0)
    return z ** (-nu) * _asymptotic_sum(nu, z) / math.sqrt(2.0 * math.pi * z)


@njit(cache=True)
def _ive(nu, z):
    if z < Z_STAR:
        return math.exp(-z) * z ** nu * _series_reduced(nu, z)
    return _asymptotic_sum(nu, z) / math.sqrt(2.0 * math.pi * z)


def _check(nu, z):
    if nu <= -1:
        raise BesselError("order must exceed -1")
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise BesselError("argument must be positive")
    return z


def bracket(nu, k):
    """The coefficient [nu, k] of the large-argument expansion."""
    out = 1.0
    for j in range(1, k + 1):
        out *= (4 * nu * nu - (2 * j - 1) ** 2) / (4.0 * j)
    return out


def bessel_ive(nu, z):
    """Exponentially scaled e^{-z} I_nu(z)."""
    z = _check(nu, z)
    return np.vectorize(lambda s: _ive(float(nu), float(s)), otypes=[float])(z)[()]


def bessel_i(nu, z):
    """I_nu(z) for nu > -1 and z > 0 (overflows to inf beyond z ~ 709)."""
    z = _check(nu, z)
    with np.errstate(over="ignore"):
        return bessel_ive(nu, z) * np.exp(z)


def bessel_i_reduced(nu, z):
    """z^{-nu} I_nu(z); tends to 1/(2^nu Gamma(nu+1)) as z -> 0."""
    z = _check(nu, z)
    f = np.vectorize(lambda s: _ive_reduced(float(nu), float(s)), otypes=[float])
    with np.errstate(over="ignore"):
        return (f(z) * np.exp(z))[()]


def bessel_i_series(nu, z):
    """Power-series branch only, for branch-agreement checks."""
    z = _check(nu, z)
    f = np.vectorize(lambda s: s ** nu * _series_reduced(float(nu), float(s)),
                     otypes=[float])
    return f(z)[()]


def bessel_i_asymptotic(nu, z):
    """Large-argument branch only, for branch-agreement checks."""
    z = _check(nu, z)
    f = np.vectorize(lambda s: math.exp(s) * _asymptotic_sum(float(nu), float(s))
                     / math.sqrt(2 * math.pi * s), otypes=[float])
    return f(z)[()]


# ---------------------------------------------------------------- heat kernel


@njit(cache=True)
def _heat(lam, t, x, y, c0=-1.0):
    nu = lam - 0.5
    z = x * y / (2.0 * t)
    return ((2.0 * t) ** (-nu - 1.0) * math.exp(-(x - y) ** 2 / (4.0 * t))
            * _ive_reduced(nu, z, c0))


@njit(cache=True)
def _heat_dx(lam, t, x, y, c0=-1.0, c1=-1.0):
    """d/dx of the Bessel heat kernel, via I_{nu+1} and I_nu."""
    nu = lam - 0.5
    z = x * y / (2.0 * t)
    inner = (y / (2.0 * t)) * z * _ive_reduced(nu + 1.0, z, c1) \
        - (x / (2.0 * t)) * _ive_reduced(nu, z, c0)
    return (2.0 * t) ** (-nu - 1.0) * math.exp(-(x - y) ** 2 / (4.0 * t)) * inner


def bessel_heat_kernel(lam, t, x, y):
    """W_t(x, y) = (xy)^{1/2-lam}/(2t) e^{-(x^2+y^2)/4t} I_{lam-1/2}(xy/2t)."""
    t, x, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x, y)))
    if np.any(t <= 0) or np.any(x <= 0) or np.any(y <= 0):
        raise BesselError("t, x and y must be positive")
    if lam <= -0.5:
        raise BesselError("lambda must exceed -1/2")
    f = np.vectorize(lambda a, b, c: _heat(float(lam), a, b, c), otypes=[float])
    return f(t, x, y)[()]


# ---------------------------------------------------------------- Riesz kernels


@njit(cache=True)
def _integrand(t, n, lam, xl, yl, s2, dj, c0, c1):
    """Integrand in t of the Riesz kernel before the constant 1/sqrt(pi).

    ``n`` is the number of Euclidean coordinates, ``xl``/``yl`` the last
    coordinates, ``s2`` = |x' - y'|^2.  ``dj`` is y_j - x_j for a Euclidean
    direction, or NaN for the last direction.
    """
    if n > 0:
        g = (4.0 * math.pi * t) ** (-0.5 * n) * math.exp(-s2 / (4.0 * t))
    else:
        g = 1.0
    if dj != dj:
        d = _heat_dx(lam, t, xl, yl, c0, c1)
    else:
        d = dj / (2.0 * t) * _heat(lam, t, xl, yl, c0)
    return g * d / math.sqrt(t)


@njit(cache=True)
def _simpson_log(n, lam, xl, yl, s2, dj, c0, c1, a, b, rtol, max_depth):
    """Adaptive Simpson in u = log t over [a, b] with an explicit stack."""
    panels = 16
    h = (b - a) / panels
    # coarse pass sets the absolute tolerance from the integral of |g|
    scale = 0.0
    for i in range(panels + 1):
        u = a + i * h
        t = math.exp(u)
        scale += abs(_integrand(t, n, lam, xl, yl, s2, dj, c0, c1) * t)
    scale *= h
    if scale == 0.0:
        return 0.0, 0.0, panels + 1, True
    tol_total = rtol * scale
    total = 0.0
    err = 0.0
    evals = panels + 1
    ok = True
    stack_a = np.empty(4 * max_depth + 8)
    stack_b = np.empty(4 * max_depth + 8)
    stack_fa = np.empty(4 * max_depth + 8)
    stack_fm = np.empty(4 * max_depth + 8)
    stack_fb = np.empty(4 * max_depth + 8)
    stack_d = np.empty(4 * max_depth + 8, dtype=np.int64)
    for i in range(panels):
        lo = a + i * h
        hi = lo + h
        tl, tm, th = math.exp(lo), math.exp(0.5 * (lo + hi)), math.exp(hi)
        fa = _integrand(tl, n, lam, xl, yl, s2, dj, c0, c1) * tl
        fm = _integrand(tm, n, lam, xl, yl, s2, dj, c0, c1) * tm
        fb = _integrand(th, n, lam, xl, yl, s2, dj, c0, c1) * th
        evals += 3
        top = 0
        stack_a[0], stack_b[0] = lo, hi
        stack_fa[0], stack_fm[0], stack_fb[0] = fa, fm, fb
        stack_d[0] = 0
        top = 1
        while top > 0:
            top -= 1
            lo2, hi2 = stack_a[top], stack_b[top]
            fa2, fm2, fb2 = stack_fa[top], stack_fm[top], stack_fb[top]
            depth = stack_d[top]
            mid = 0.5 * (lo2 + hi2)
            w = hi2 - lo2
            t1 = math.exp(0.5 * (lo2 + mid))
            t2 = math.exp(0.5 * (mid + hi2))
            f1 = _integrand(t1, n, lam, xl, yl, s2, dj, c0, c1) * t1
            f2 = _integrand(t2, n, lam, xl, yl, s2, dj, c0, c1) * t2
            evals += 2
            whole = w / 6.0 * (fa2 + 4.0 * fm2 + fb2)
            left = w / 12.0 * (fa2 + 4.0 * f1 + fm2)
            right = w / 12.0 * (fm2 + 4.0 * f2 + fb2)
            diff = left + right - whole
            local_tol = tol_total * w / (b - a)
            if (depth >= 3 and abs(diff) <= 15.0 * local_tol) or depth >= max_depth:
                if depth >= max_depth and abs(diff) > 15.0 * local_tol:
                    ok = False
                total += left + right + diff / 15.0
                err += abs(diff) / 15.0
            else:
                stack_a[top], stack_b[top] = lo2, mid
                stack_fa[top], stack_fm[top], stack_fb[top] = fa2, f1, fm2
                stack_d[top] = depth + 1
                top += 1
                stack_a[top], stack_b[top] = mid, hi2
                stack_fa[top], stack_fm[top], stack_fb[top] = fm2, f2, fb2
                stack_d[top] = depth + 1
                top += 1
    return total, err, evals, ok


@njit(cache=True)
def _riesz(n, lam, xl, yl, s2, dj, rtol):
    """Riesz kernel value for one pair; returns (value, error, ok)."""
    d2 = s2 + (xl - yl) ** 2
    scale = max(xl, yl, math.sqrt(d2))
    t_lo = d2 / 200.0
    t_hi = 1e6 * scale * scale
    a, b = math.log(t_lo), math.log(t_hi)
    nu = lam - 0.5
    c0 = 2.0 ** (-nu) / math.gamma(nu + 1.0)
    c1 = 2.0 ** (-nu - 1.0) / math.gamma(nu + 2.0)
    val, err, evals, ok = _simpson_log(n, lam, xl, yl, s2, dj, c0, c1, a, b,
                                       rtol, 40)
    # power-law tail beyond t_hi: integrand ~ t^{-alpha}
    alpha = 0.5 * n + lam + 2.0
    tail = _integrand(t_hi, n, lam, xl, yl, s2, dj, c0, c1) * t_hi / (alpha - 1.0)
    return (val + tail) / math.sqrt(math.pi), err / math.sqrt(math.pi), ok


@njit(cache=True, parallel=True)
def _riesz_table(n, lam, xs, ys, j, rtol):
    """Kernel for all pairs of rows of xs (targets) and ys (sources)."""
    nx, ny = xs.shape[0], ys.shape[0]
    out = np.zeros((nx, ny))
    bad = np.zeros((nx, ny), dtype=np.bool_)
    for p in prange(nx):
        for q in range(ny):
            s2 = 0.0
            same = True
            for c in range(xs.shape[1]):
                if xs[p, c] != ys[q, c]:
                    same = False
            if same:
                continue
            for c in range(n):
                s2 += (xs[p, c] - ys[q, c]) ** 2
            if j < n:
                dj = ys[q, j] - xs[p, j]
            else:
                dj = np.nan
            v, e, ok = _riesz(n, lam, xs[p, n], ys[q, n], s2, dj, rtol)
            out[p, q] = v
            bad[p, q] = not ok
    return out, bad


def _riesz_pairs(n, lam, j, x, y, rtol):
    if lam <= -0.5:
        raise BesselError("lambda must exceed -1/2")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != n + 1 or y.shape[1] != n + 1:
        raise BesselError(f"points must have {n + 1} coordinates")
    if np.any(x[:, n] <= 0) or np.any(y[:, n] <= 0):
        raise BesselError("last coordinate must be positive")
    if not 0 <= j <= n:
        raise BesselError("direction index out of range")
    vals, bad = _riesz_table(n, float(lam), x, y, int(j), rtol)
    if bad.any():
        p, q = np.argwhere(bad)[0]
        raise QuadratureError(
            f"quadrature did not converge at x={x[p].tolist()}, "
            f"y={y[q].tolist()} ({int(bad.sum())} pairs)")
    return vals


def bessel_riesz_kernel_1d(lam, x, y, rtol=1e-7):
    """R_lam(x, y) = pi^{-1/2} int_0^inf d/dx W_t(x, y) t^{-1/2} dt.

    Returns the table over all pairs, rows indexed by x and columns by y.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None]
    y = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
    return _riesz_pairs(0, lam, 0, x, y, rtol)


def bessel_riesz_kernel_hd(n, lam, j, x, y, rtol=1e-7):
    """R_{lam,j}(x, y) on R^n x (0, inf) for all pairs of rows; j is 1-based (1..n+1)."""
    return _riesz_pairs(int(n), lam, int(j) - 1, x, y, rtol)


def riesz_principal_constant(n):
    """C_n with R_{lam,j} ~ C_n (y_j - x_j) / ((x_l y_l)^lam |x - y|^{n+2})."""
    return (math.gamma(n / 2 + 1) * 4.0 ** (n / 2 + 1)
            / (2.0 * math.sqrt(math.pi) * (4 * math.pi) ** ((n + 1) / 2)))


__all__ = [
    "Z_STAR", "BesselError", "QuadratureError", "bracket", "bessel_i",
    "bessel_ive", "bessel_i_reduced", "bessel_i_series", "bessel_i_asymptotic",
    "bessel_heat_kernel", "bessel_riesz_kernel_1d", "bessel_riesz_kernel_hd",
    "riesz_principal_constant",
]
