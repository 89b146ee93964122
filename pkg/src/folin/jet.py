"""Truncated Taylor series (jets) and Lie derivatives along a vector field.

A jet of order K holds the Taylor coefficients ``c_0..c_K`` of a scalar
quantity ``u(t)`` around ``t = 0``.  Every coefficient recurrence below sums in
a fixed index order, so coefficient ``k`` of a result never depends on the
truncation order it was computed at.
"""
from __future__ import annotations

import math

from .expr import EvalDomainError

__all__ = ["Jet", "MAX_ORDER", "taylor_flow", "lie_derivatives", "lie_table",
           "jets_from_flow"]

MAX_ORDER = 32


class Jet:
    """Truncated Taylor polynomial ``c_0 + c_1 t + ... + c_K t^K``."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = [float(v) for v in coeffs]
        if not self.c:
            raise ValueError("a jet needs at least one coefficient")

    @classmethod
    def constant(cls, value, order):
        return cls([value] + [0.0] * order)

    @classmethod
    def variable(cls, value, order):
        """Jet of ``value + t`` (seed for a first-order derivative)."""
        c = [value] + [0.0] * order
        if order > 0:
            c[1] = 1.0
        return cls(c)

    @property
    def order(self) -> int:
        return len(self.c) - 1

    def __repr__(self):
        return f"Jet({self.c!r})"

    def __eq__(self, other):
        return isinstance(other, Jet) and self.c == other.c

    __hash__ = None

    def _coerce(self, other):
        if isinstance(other, Jet):
            k = min(len(self.c), len(other.c))
            return self.c[:k], other.c[:k]
        return None

    # arithmetic ---------------------------------------------------------
    def __neg__(self):
        return Jet([-a for a in self.c])

    def __pos__(self):
        return self

    def __add__(self, other):
        pair = self._coerce(other)
        if pair is None:
            c = list(self.c)
            c[0] = c[0] + other
            return Jet(c)
        a, b = pair
        return Jet([x + y for x, y in zip(a, b)])

    def __radd__(self, other):
        c = list(self.c)
        c[0] = other + c[0]
        return Jet(c)

    def __sub__(self, other):
        pair = self._coerce(other)
        if pair is None:
            c = list(self.c)
            c[0] = c[0] - other
            return Jet(c)
        a, b = pair
        return Jet([x - y for x, y in zip(a, b)])

    def __rsub__(self, other):
        c = [-a for a in self.c]
        c[0] = other - self.c[0]
        return Jet(c)

    def __mul__(self, other):
        pair = self._coerce(other)
        if pair is None:
            return Jet([a * other for a in self.c])
        a, b = pair
        return Jet([_cauchy(a, b, k) for k in range(len(a))])

    def __rmul__(self, other):
        return Jet([other * a for a in self.c])

    def __truediv__(self, other):
        pair = self._coerce(other)
        if pair is None:
            if other == 0:
                raise ZeroDivisionError("jet divided by zero")
            return Jet([a / other for a in self.c])
        return Jet(_divide(*pair))

    def __rtruediv__(self, other):
        a = [float(other)] + [0.0] * (len(self.c) - 1)
        return Jet(_divide(a, self.c))

    # elementary functions -----------------------------------------------
    def exp(self):
        a = self.c
        try:
            e = [math.exp(a[0])]
        except OverflowError:
            raise EvalDomainError(f"exp({a[0]!r}) overflows") from None
        for k in range(1, len(a)):
            s = 0.0
            for j in range(1, k + 1):
                s += j * a[j] * e[k - j]
            e.append(s / k)
        return Jet(e)

    def log(self):
        a = self.c
        if a[0] <= 0:
            raise EvalDomainError(f"log of non-positive value {a[0]!r}")
        out = [math.log(a[0])]
        for k in range(1, len(a)):
            s = 0.0
            for j in range(1, k):
                s += j * out[j] * a[k - j]
            out.append((a[k] - s / k) / a[0])
        return Jet(out)

    def _sincos(self):
        a = self.c
        s, c = [math.sin(a[0])], [math.cos(a[0])]
        for k in range(1, len(a)):
            ss = 0.0
            cc = 0.0
            for j in range(1, k + 1):
                ss += j * a[j] * c[k - j]
                cc += j * a[j] * s[k - j]
            s.append(ss / k)
            c.append(-cc / k)
        return s, c

    def sin(self):
        return Jet(self._sincos()[0])

    def cos(self):
        return Jet(self._sincos()[1])

    def sqrt(self):
        a = self.c
        if a[0] < 0 or (a[0] == 0 and len(a) > 1):
            raise EvalDomainError(f"sqrt not expandable at {a[0]!r}")
        r = [math.sqrt(a[0])]
        for k in range(1, len(a)):
            s = 0.0
            for j in range(1, k):
                s += r[j] * r[k - j]
            r.append((a[k] - s) / (2.0 * r[0]))
        return Jet(r)

    def abs(self):
        a0 = self.c[0]
        if a0 == 0 and len(self.c) > 1:
            raise EvalDomainError("abs not differentiable at 0")
        return self if a0 >= 0 else -self


def _cauchy(a, b, k):
    s = 0.0
    for j in range(k + 1):
        s += a[j] * b[k - j]
    return s


def _divide(a, b):
    if b[0] == 0:
        raise ZeroDivisionError("jet divided by a jet with zero constant term")
    out = []
    for k in range(len(a)):
        s = a[k]
        for j in range(1, k + 1):
            s -= b[j] * out[k - j]
        out.append(s / b[0])
    return out


def _check_order(K):
    if K < 0:
        raise ValueError("order must be non-negative")
    if K > MAX_ORDER:
        raise ValueError(f"order {K} exceeds the supported maximum {MAX_ORDER}")


def taylor_flow(system, x0, K):
    """Taylor coefficients of the flow of ``dx/dt = F(x)`` through ``x0``.

    Returns a list with one coefficient list ``[X_0, ..., X_K]`` per state.
    ``X_{k+1}`` is the k-th coefficient of ``F(x(t))`` (evaluated on jets
    truncated at order ``k``) divided by ``k + 1``.
    """
    _check_order(K)
    x0 = [float(v) for v in x0]
    if len(x0) != system.n:
        raise ValueError(f"expected {system.n} state values, got {len(x0)}")
    coeffs = [[v] for v in x0]
    for k in range(K):
        jets = [Jet(c) for c in coeffs]
        rhs = system.F(jets)
        for i, f in enumerate(rhs):
            ck = f.c[k] if isinstance(f, Jet) else (float(f) if k == 0 else 0.0)
            coeffs[i].append(ck / (k + 1))
    return coeffs


def jets_from_flow(flow):
    return [Jet(c) for c in flow]


def _coeffs(value, K):
    if isinstance(value, Jet):
        return value.c
    return [float(value)] + [0.0] * K


def _scale_by_factorial(c):
    out = []
    fact = 1.0
    for k, ck in enumerate(c):
        if k > 0:
            fact *= k
        out.append(fact * ck)
    return out


def lie_derivatives(system, f, x0, K):
    """``(L_F^0 f, ..., L_F^K f)`` evaluated at ``x0``.

    ``f`` is an AST over the system's state and parameter names, or a
    callable taking the list of state jets.
    """
    flow = taylor_flow(system, x0, K)
    jets = jets_from_flow(flow)
    fn = system.scalar_function(f) if not callable(f) else f
    return _scale_by_factorial(_coeffs(fn(jets), K))


def lie_table(system, x0, v):
    """Lie derivatives of every output and of the functional at ``x0``.

    Returns ``(H_table, q_row)`` where ``H_table[i][j] = L_F^i H_j(x0)`` and
    ``q_row[i] = L_F^i q(x0)`` for ``i = 0..v``.  One flow expansion serves
    every function.
    """
    if v == 0:
        x = [float(a) for a in x0]
        return [list(system.H(x))], [system.q(x)]
    jets = jets_from_flow(taylor_flow(system, x0, v))
    H = [_scale_by_factorial(_coeffs(h, v)) for h in system.H(jets)]
    q = _scale_by_factorial(_coeffs(system.q(jets), v))
    table = [[H[j][i] for j in range(len(H))] for i in range(v + 1)]
    return table, q
