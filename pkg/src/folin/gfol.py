"""Functional observers whose output map is nonlinear in ``(z, y)``.

The observer is

    dξ̂/dt = A ξ̂ + 𝔅(y),   ẑ solves 𝒢(ẑ, y) = C ξ̂

with ``A`` companion, ``C = (0, ..., 0, 1)``, ``𝔅 = (𝒵_1, ..., 𝒵_v)`` and
``𝒢 = 𝒵_0``.  It exists for user-supplied ``𝒵`` functions iff

    (L_F^v + α_1 L_F^{v-1} + ... + α_v) 𝒵_0(q, H) = 𝒵_1(H) + L_F 𝒵_2(H) + ... + L_F^{v-1} 𝒵_v(H).

Expressions use ``z`` for the estimated functional, ``y1..yp`` for the
outputs and ``zeta`` for ``C ξ̂`` in an explicit inverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .jet import Jet, jets_from_flow, taylor_flow
from .span import CharPoly, companion, sample
from .synth import VerifyReport

__all__ = ["GeneralSpec", "GeneralObserver", "InversionError", "NotInvertibleError",
           "verify_71", "synthesize_general", "transform_general",
           "transform_general_with_derivative", "invert_G", "check_monotone",
           "MAX_NEWTON"]

MAX_NEWTON = 100


class InversionError(ArithmeticError):
    """``𝒢(z, y) = ζ`` could not be solved for ``z``."""


class NotInvertibleError(ValueError):
    """``𝒵_0`` is not monotonic in ``z`` on the tested region."""


def _y_names(p):
    return [f"y{j + 1}" for j in range(p)]


@dataclass(frozen=True)
class GeneralSpec:
    alpha: CharPoly
    p: int
    Z0: expr.Expr
    Z: tuple  # 𝒵_1..𝒵_v
    inverse: expr.Expr | None = None
    bracket: tuple[float, float] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        set_ = object.__setattr__
        parse = lambda e: expr.parse(e) if isinstance(e, str) else e  # noqa: E731
        set_(self, "Z0", parse(self.Z0))
        set_(self, "Z", tuple(parse(e) for e in self.Z))
        if self.inverse is not None:
            set_(self, "inverse", parse(self.inverse))
        if len(self.Z) != self.alpha.order:
            raise ValueError(f"order {self.alpha.order} needs {self.alpha.order} "
                             f"𝒵 functions after 𝒵_0, got {len(self.Z)}")
        ys = _y_names(self.p)
        consts = dict(self.params)
        set_(self, "_g", expr.compile_exprs([self.Z0], ["z", *ys], consts))
        set_(self, "_b", expr.compile_exprs(list(self.Z), ys, consts))
        if self.inverse is not None:
            set_(self, "_inv", expr.compile_exprs([self.inverse], ["zeta", *ys], consts))
        elif self.bracket is None:
            raise ValueError("an implicit 𝒢 needs an inversion bracket [z_lo, z_hi]")
        if self.bracket is not None:
            lo, hi = (float(b) for b in self.bracket)
            if not lo < hi:
                raise ValueError("bracket must satisfy z_lo < z_hi")
            set_(self, "bracket", (lo, hi))

    @property
    def order(self) -> int:
        return self.alpha.order

    def G(self, z, y):
        return self._g(z, *y)[0]

    def Bfun(self, y):
        return self._b(*y)


@dataclass(frozen=True)
class GeneralObserver:
    A: np.ndarray
    C: np.ndarray
    spec: GeneralSpec

    @property
    def order(self):
        return self.A.shape[0]

    @property
    def alpha(self):
        return self.spec.alpha

    def B(self, y) -> np.ndarray:
        """Injection vector ``𝔅(y) = (𝒵_1(y), ..., 𝒵_v(y))``."""
        return np.array(self.spec.Bfun([float(a) for a in y]), dtype=float)

    def output(self, xi, y) -> float:
        return invert_G(self.spec, float(self.C[0] @ xi), y)


def synthesize_general(spec: GeneralSpec, allow_unstable=False) -> GeneralObserver:
    if not allow_unstable and not spec.alpha.hurwitz:
        from .synth import UnstableObserverError
        raise UnstableObserverError("characteristic polynomial is not Hurwitz")
    v = spec.order
    C = np.zeros((1, v))
    C[0, -1] = 1.0
    return GeneralObserver(companion(spec.alpha.alpha), C, spec)


def _scaled(value, K):
    c = value.c if isinstance(value, Jet) else [float(value)] + [0.0] * K
    out, fact = [], 1.0
    for k, ck in enumerate(c):
        if k:
            fact *= k
        out.append(fact * ck)
    return out


def _composite(system, spec, x, K):
    """Lie derivatives (orders 0..K) of ``𝒵_0(q, H)`` and each ``𝒵_i(H)``."""
    if K == 0:
        xl = [float(a) for a in x]
        h = list(system.H(xl))
        return [spec.G(system.q(xl), h)], [[b] for b in spec.Bfun(h)], h
    jets = jets_from_flow(taylor_flow(system, x, K))
    hj = list(system.H(jets))
    qj = system.q(jets)
    g = _scaled(spec._g(qj, *hj)[0], K)
    zs = [_scaled(b, K) for b in spec._b(*hj)]
    h0 = [h.c[0] if isinstance(h, Jet) else float(h) for h in hj]
    return g, zs, h0


def _rows(spec, g, zs, shift):
    a = spec.alpha.coefficients()
    v = spec.order
    T = []
    for i in range(v):
        m = v - 1 - i
        val = 0.0
        for k in range(m + 1):
            val += a[k] * g[m - k + shift]
        for l in range(m):
            val -= zs[v - m + l][l + shift]  # 𝒵_{v-m+1+l}, zero-based list
        T.append(val)
    return np.array(T)


def transform_general(system, spec: GeneralSpec, x) -> np.ndarray:
    """Immersion ``𝒯(x)``; the last entry is ``𝒵_0(q(x), H(x))``."""
    g, zs, _ = _composite(system, spec, x, spec.order - 1)
    return _rows(spec, g, zs, 0)


def transform_general_with_derivative(system, spec, x):
    """``(𝒯(x), L_F 𝒯(x), H(x))`` from one expansion of order ``v``."""
    g, zs, h = _composite(system, spec, x, spec.order)
    return _rows(spec, g, zs, 0), _rows(spec, g, zs, 1), np.array(h)


def verify_71(system, spec: GeneralSpec, samples, tol=1e-10) -> VerifyReport:
    """Compare both sides of the generalized span identity at the samples.

    The mismatch is relative to the largest magnitude seen on either side,
    or absolute when that magnitude is below one.
    """
    a = spec.alpha.coefficients()
    v = spec.order
    lhs, rhs = [], []
    for x in samples:
        g, zs, _ = _composite(system, spec, x, v)
        lhs.append(sum(a[k] * g[v - k] for k in range(v + 1)))
        rhs.append(sum(zs[i][i] for i in range(v)))
    lhs, rhs = np.array(lhs), np.array(rhs)
    diff = np.abs(lhs - rhs)
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1.0)
    per = diff / scale
    return VerifyReport("generalized span identity", float(np.max(per)), tol, per)


def check_monotone(system, spec: GeneralSpec, count=64, seed=0):
    """Spot-check that ``𝒵_0`` is strictly monotonic in ``z``.

    ``y`` comes from ``H`` at states sampled in the system box; ``z`` from the
    bracket when given, otherwise from ``q`` at the same states.  Returns the
    common sign of ``∂𝒵_0/∂z``.
    """
    pts = sample(system.box, count, seed).points
    rng = np.random.Generator(np.random.Philox(key=int(seed) + 1))
    signs = set()
    for i, x in enumerate(pts):
        xl = x.tolist()
        y = list(system.H(xl))
        if spec.bracket is not None:
            lo, hi = spec.bracket
            z = lo + rng.random() * (hi - lo)
        else:
            z = system.q(xl)
        d = spec._g(Jet([z, 1.0]), *y)[0]
        slope = d.c[1] if isinstance(d, Jet) else 0.0
        if not slope or not math.isfinite(slope):
            raise NotInvertibleError(f"∂𝒵_0/∂z = {slope} at z={z}, y={y}")
        signs.add(slope > 0)
    if len(signs) > 1:
        raise NotInvertibleError("∂𝒵_0/∂z changes sign over the tested region")
    return 1 if signs.pop() else -1


def invert_G(spec: GeneralSpec, zeta, y) -> float:
    """Solve ``𝒢(z, y) = ζ`` for ``z``.

    Uses the explicit inverse when the spec has one; otherwise safeguarded
    Newton inside the bracket with bisection fallback (at most 100
    iterations).  Converged when ``|𝒢(z, y) - ζ| ≤ 1e-12 max(1, |ζ|)`` or the
    bracket has shrunk to adjacent floating-point numbers.
    """
    y = [float(a) for a in y]
    zeta = float(zeta)
    if spec.inverse is not None:
        return float(spec._inv(zeta, *y)[0])
    lo, hi = spec.bracket
    f = lambda z: spec.G(z, y) - zeta  # noqa: E731
    flo, fhi = f(lo), f(hi)
    tol = 1e-12 * max(1.0, abs(zeta))
    if abs(flo) <= tol:
        return lo
    if abs(fhi) <= tol:
        return hi
    if (flo > 0) == (fhi > 0):
        raise InversionError(
            f"no sign change of 𝒢(z, y) - ζ over [{lo}, {hi}] (ζ = {zeta}, y = {y})")
    z = 0.5 * (lo + hi)
    for _ in range(MAX_NEWTON):
        d = spec._g(Jet([z, 1.0]), *y)[0]
        fz = (d.c[0] if isinstance(d, Jet) else float(d)) - zeta
        if abs(fz) <= tol:
            return z
        if (fz > 0) == (flo > 0):
            lo, flo = z, fz
        else:
            hi = z
        if np.nextafter(lo, hi) >= hi:
            return z
        slope = d.c[1] if isinstance(d, Jet) else 0.0
        step = z - fz / slope if slope else math.nan
        z = step if lo < step < hi else 0.5 * (lo + hi)
    raise InversionError(f"no convergence after {MAX_NEWTON} iterations (ζ = {zeta}, y = {y})")
