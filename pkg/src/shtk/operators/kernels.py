"""Singular kernels K(x, y) for the model spaces.

Every kernel evaluates pairwise on coordinate arrays: ``evaluate(cx, cy)``
returns the matrix K(cx[i], cy[j]), with 0 where the two points coincide.
"""

from __future__ import annotations

import math

import numpy as np

from ..space import heisenberg_difference, omega_quantity, omega_root
from .bessel import bessel_riesz_kernel_1d, bessel_riesz_kernel_hd


class KernelError(ValueError):
    pass


# ---------------------------------------------------------------- Lipschitz graphs


class Profile:
    """Lipschitz profile A for the Cauchy integral, with exact sup |A'|."""

    def __init__(self, kind="zero", value=0.0, period=0.5):
        if kind not in ("zero", "sawtooth", "sine"):
            raise KernelError(f"unknown profile {kind!r}")
        self.kind = kind
        self.value = float(value)
        self.period = float(period)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "sawtooth":
            # triangle wave of slope +-value
            ph = np.mod(x, self.period)
            return self.value * (0.5 * self.period - np.abs(ph - 0.5 * self.period))
        return self.value * np.sin(2 * np.pi * x / self.period)

    @property
    def lipschitz(self):
        if self.kind == "zero":
            return 0.0
        if self.kind == "sawtooth":
            return abs(self.value)
        return abs(self.value) * 2 * np.pi / self.period

    def __repr__(self):
        return f"Profile({self.kind}, {self.value})"


# ---------------------------------------------------------------- kernel class


class Kernel:
    """A named kernel together with the space type it lives on."""

    #: metric each model runs on; None means any
    METRIC = {"zero": None, "constant": None, "hilbert": "euclidean",
              "cauchy": "euclidean", "cauchy-szego": "heisenberg",
              "szego": "omega", "bessel1d": "halfline",
              "bessel-hd": "halfspace"}

    def __init__(self, model, **params):
        if model not in self.METRIC:
            raise KernelError(f"unknown kernel model {model!r}")
        self.model = model
        self.params = params
        self.is_complex = model in ("cauchy", "cauchy-szego", "szego")
        # Hoelder exponent of the smoothness modulus
        self.delta = 1.0
        if model == "cauchy":
            self.profile = params.get("profile") or Profile()
        if model in ("bessel1d", "bessel-hd"):
            if params.get("lam", 1.0) <= -0.5:
                raise KernelError("Bessel kernels need lambda > -1/2")

    # ------------------------------------------------------------ metadata

    @property
    def name(self):
        p = self.params
        if self.model == "cauchy":
            return f"cauchy[{self.profile.kind}:{self.profile.value:g}]"
        if self.model == "cauchy-szego":
            return f"cauchy-szego[n={p.get('n', 1)}]"
        if self.model == "szego":
            return f"szego[k={p.get('k', 1)}]"
        if self.model == "bessel1d":
            return f"bessel1d[lam={p.get('lam', 1.0):g}]"
        if self.model == "bessel-hd":
            return (f"bessel-hd[n={p.get('n', 1)},lam={p.get('lam', 1.0):g},"
                    f"j={p.get('j', 1)}]")
        if self.model == "constant":
            return f"constant[{p.get('value', 1.0):g}]"
        return self.model

    def check_space(self, space):
        want = self.METRIC[self.model]
        if want is None:
            return
        if space.metric != want:
            raise KernelError(f"{self.name} needs a {want} space, "
                              f"got {space.metric}")
        dim = space.coords.shape[1]
        p = self.params
        if self.model in ("hilbert", "cauchy", "bessel1d") and dim != 1:
            raise KernelError(f"{self.name} needs one coordinate")
        if self.model == "cauchy-szego" and dim != 2 * p.get("n", 1) + 1:
            raise KernelError("Heisenberg degree does not match the space")
        if self.model == "szego" and int(space.params.get("k", 1)) != p.get("k", 1):
            raise KernelError("Omega_k index does not match the space")
        if self.model == "bessel-hd" and dim != p.get("n", 1) + 1:
            raise KernelError("half-space dimension does not match n + 1")
        if self.model in ("bessel1d", "bessel-hd"):
            lam = space.params.get("lambda")
            if lam is not None and not np.isclose(lam, p.get("lam", 1.0)):
                raise KernelError("kernel lambda differs from the space measure")

    # ------------------------------------------------------------ evaluation

    def evaluate(self, cx, cy):
        cx = np.atleast_2d(np.asarray(cx, dtype=float))
        cy = np.atleast_2d(np.asarray(cy, dtype=float))
        same = np.all(cx[:, None, :] == cy[None, :, :], axis=-1)
        m, p = self.model, self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if m == "zero":
                out = np.zeros(same.shape)
            elif m == "constant":
                out = np.full(same.shape, float(p.get("value", 1.0)))
            elif m == "hilbert":
                out = hilbert_kernel(cx[:, 0][:, None], cy[:, 0][None, :])
            elif m == "cauchy":
                out = cauchy_kernel(self.profile, cx[:, 0][:, None],
                                    cy[:, 0][None, :])
            elif m == "cauchy-szego":
                out = cauchy_szego_kernel(p.get("n", 1), cx, cy)
            elif m == "szego":
                out = szego_kernel(p.get("k", 1), cx, cy)
            elif m == "bessel1d":
                out = bessel_riesz_kernel_1d(p.get("lam", 1.0), cx[:, 0], cy[:, 0])
            else:
                out = bessel_riesz_kernel_hd(p.get("n", 1), p.get("lam", 1.0),
                                             p.get("j", 1), cx, cy)
        out = np.where(same, 0, out)
        return out

    def __call__(self, x, y):
        """K(x, y) at one pair; tables from :meth:`evaluate` zero the diagonal instead."""
        if np.array_equal(np.atleast_1d(x), np.atleast_1d(y)):
            raise KernelError(f"{self.name} is not defined at x = y")
        return self.evaluate(np.atleast_2d(x), np.atleast_2d(y))[0, 0]

    def bind(self, space):
        from .apply import DiscreteOperator
        return DiscreteOperator(self, space)

    def __repr__(self):
        return f"Kernel({self.name})"


# ---------------------------------------------------------------- formulas


def hilbert_kernel(x, y):
    """1 / (pi (x - y))."""
    return 1.0 / (np.pi * (np.asarray(x) - np.asarray(y)))


def cauchy_kernel(profile, x, y):
    """(1/pi) / ((x - y) + i (A(x) - A(y)))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 1.0 / (np.pi * ((x - y) + 1j * (profile(x) - profile(y))))


def cauchy_szego_constant(n):
    """c = 2^{n-1} i^{n+1} n! pi^{-n-1}."""
    return 2.0 ** (n - 1) * (1j ** (n + 1)) * math.factorial(n) * np.pi ** (-n - 1)


def cauchy_szego_profile(n, zeta, t):
    """K([zeta, t]) = c [t + i |zeta|^2]^{-n-1} on the group element."""
    zeta = np.asarray(zeta)
    mod2 = np.sum(np.abs(zeta) ** 2, axis=-1) if zeta.ndim and zeta.shape[-1:] \
        and np.iscomplexobj(zeta) else np.abs(zeta) ** 2
    return cauchy_szego_constant(n) * (np.asarray(t) + 1j * mod2) ** (-n - 1)


def cauchy_szego_kernel(n, cx, cy):
    """K(y^{-1} o x) for all pairs of Heisenberg points (rows x..., y..., t)."""
    zeta, t = heisenberg_difference(cx, cy)
    mod2 = np.sum(np.abs(zeta) ** 2, axis=-1)
    return cauchy_szego_constant(n) * (t + 1j * mod2) ** (-n - 1)


def szego_kernel(k, cx, cy):
    """Szego kernel of Omega_k on boundary points (mu = eta = 0)."""
    a, zw = omega_quantity(k, cx, cy)
    root = omega_root(a, k)
    tail = np.power(a, (k - 1) / k) if k > 1 else np.ones_like(a)
    return 1.0 / (4 * np.pi ** 2 * (root - zw) ** 2 * tail)


def szego_branch_flags(k, cx, cy, tol=1e-12):
    """Pairs whose A lies within ``tol`` of the negative real axis."""
    a, _ = omega_quantity(k, cx, cy)
    return (a.real < tol * np.abs(a)) & (np.abs(a.imag) < tol * np.abs(a) + tol)


def szego_volume(k, z, delta):
    """V(B_zeta(delta)) = 4 pi delta^2 (sin(pi/k)^{2k-2}/4 |z|^{2k-2} delta^2 + delta^{2k}/2).

    Powers with exponent 0 are taken as 1, so at k = 1 the first term is
    delta^2/4 for every z.
    """
    z = np.abs(np.asarray(z, dtype=complex))
    delta = np.asarray(delta, dtype=float)
    if k == 1:
        lead = 0.25 * delta ** 2
    else:
        lead = (np.sin(np.pi / k) ** (2 * k - 2) / 4.0) * z ** (2 * k - 2) * delta ** 2
    return 4 * np.pi * delta ** 2 * (lead + 0.5 * delta ** (2 * k))


# ---------------------------------------------------------------- parsing


def parse_profile(spec):
    """``zero``, ``sawtooth:<slope>`` or ``sine:<amplitude>``."""
    if spec is None or spec == "zero":
        return Profile()
    kind, _, val = spec.partition(":")
    return Profile(kind, float(val or 1.0))


def make_kernel(op, lam=None, n=None, j=None, k=None, profile=None, value=None):
    """Kernel from a CLI-style name."""
    op = op.lower().replace("_", "-")
    if op == "hilbert":
        return Kernel("hilbert")
    if op == "zero":
        return Kernel("zero")
    if op == "constant":
        return Kernel("constant", value=1.0 if value is None else value)
    if op == "cauchy":
        prof = profile if isinstance(profile, Profile) else parse_profile(
            profile or "sawtooth:1")
        return Kernel("cauchy", profile=prof)
    if op in ("cauchy-szego", "cauchyszego", "cs"):
        return Kernel("cauchy-szego", n=int(n or 1))
    if op in ("szego", "szego-omega"):
        return Kernel("szego", k=int(k or 1))
    if op in ("bessel1d", "bessel-1d"):
        return Kernel("bessel1d", lam=1.0 if lam is None else float(lam))
    if op in ("bessel-hd", "besselhd"):
        return Kernel("bessel-hd", n=int(n or 1),
                      lam=1.0 if lam is None else float(lam), j=int(j or 1))
    raise KernelError(f"unknown operator {op!r}")


__all__ = [
    "Kernel", "KernelError", "Profile", "hilbert_kernel", "cauchy_kernel",
    "cauchy_szego_constant", "cauchy_szego_profile", "cauchy_szego_kernel",
    "szego_kernel", "szego_branch_flags", "szego_volume", "parse_profile",
    "make_kernel",
]
