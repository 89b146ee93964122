"""System descriptions: ``dx/dt = F(x)``, ``y = H(x)``, ``z = q(x)``.

A :class:`SystemModel` is built from expression strings (or ASTs) plus a
sampling box.  It may carry a constant state offset, in which case every
function is expressed in deviation coordinates ``x' = x - x_s``:
``F'(x') = F(x' + x_s)``, ``H'(x') = H(x' + x_s) - H(x_s)`` and likewise for
``q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr
from .expr import Expr

__all__ = ["SystemModel", "LTISystem", "SystemFileError", "system_from_dict",
           "eval_params", "refine_equilibrium", "linear_ast"]


class SystemFileError(ValueError):
    """Malformed or inconsistent system description."""


def _as_ast(e):
    return expr.parse(e) if isinstance(e, str) else e


def eval_params(params) -> dict[str, float]:
    """Evaluate a parameter mapping; values may be numbers or expressions
    over previously defined parameters."""
    out: dict[str, float] = {}
    for name, value in params.items():
        if isinstance(value, str):
            node = expr.parse(value)
            expr.validate(node, out)
            value = expr.evaluate(node, out)
        out[name] = float(value)
    return out


@dataclass(frozen=True)
class SystemModel:
    states: tuple[str, ...]
    dynamics: tuple[Expr, ...]
    outputs: tuple[Expr, ...]
    functional: Expr
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    params: dict = field(default_factory=dict)
    offset: tuple[float, ...] | None = None
    name: str = "system"

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "states", tuple(self.states))
        set_(self, "dynamics", tuple(_as_ast(d) for d in self.dynamics))
        set_(self, "outputs", tuple(_as_ast(h) for h in self.outputs))
        set_(self, "functional", _as_ast(self.functional))
        set_(self, "params", dict(self.params))
        set_(self, "lower", tuple(float(v) for v in self.lower))
        set_(self, "upper", tuple(float(v) for v in self.upper))
        n = len(self.states)
        if n < 1:
            raise SystemFileError("at least one state is required")
        if len(set(self.states)) != n:
            raise SystemFileError("duplicate state names")
        if clash := set(self.states) & set(self.params):
            raise SystemFileError(f"names used as both state and parameter: {sorted(clash)}")
        if len(self.dynamics) != n:
            raise SystemFileError(f"{n} states but {len(self.dynamics)} dynamics expressions")
        if not self.outputs:
            raise SystemFileError("at least one output is required")
        if len(self.lower) != n or len(self.upper) != n:
            raise SystemFileError("box bounds must have one entry per state")
        if not all(lo < hi for lo, hi in zip(self.lower, self.upper)):
            raise SystemFileError("box lower bound must be below upper bound in every coordinate")
        allowed = set(self.states) | set(self.params)
        for node in (*self.dynamics, *self.outputs, self.functional):
            expr.validate(node, allowed)
        if self.offset is not None:
            if len(self.offset) != n:
                raise SystemFileError("offset must have one entry per state")
            set_(self, "offset", tuple(float(v) for v in self.offset))
        raw_F = expr.compile_exprs(self.dynamics, self.states, self.params)
        raw_H = expr.compile_exprs(self.outputs, self.states, self.params)
        raw_q = expr.compile_exprs([self.functional], self.states, self.params)
        set_(self, "_raw", (raw_F, raw_H, raw_q))
        if self.offset is None:
            set_(self, "_h0", None)
            set_(self, "_q0", None)
        else:
            set_(self, "_h0", raw_H(*self.offset))
            set_(self, "_q0", raw_q(*self.offset)[0])

    # dimensions ---------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def p(self) -> int:
        return len(self.outputs)

    @property
    def names(self) -> set[str]:
        return set(self.states) | set(self.params)

    @property
    def box(self):
        return np.array(self.lower), np.array(self.upper)

    # evaluation (floats or jets) ------------------------------------------
    def _shift(self, x):
        if self.offset is None:
            return x
        return [a + s for a, s in zip(x, self.offset)]

    def F(self, x):
        return self._raw[0](*self._shift(x))

    def H(self, x):
        h = self._raw[1](*self._shift(x))
        if self._h0 is None:
            return h
        return tuple(a - b for a, b in zip(h, self._h0))

    def q(self, x):
        z = self._raw[2](*self._shift(x))[0]
        return z if self._q0 is None else z - self._q0

    def scalar_function(self, node):
        """Compile an extra AST over state/parameter names, honouring the offset."""
        fn = expr.compile_exprs([_as_ast(node)], self.states, self.params)
        if self.offset is None:
            return lambda x: fn(*x)[0]
        base = fn(*self.offset)[0]
        return lambda x: fn(*self._shift(x))[0] - base

    def to_raw(self, x):
        """Map model (deviation) coordinates back to the raw coordinates."""
        return np.asarray(self._shift(list(np.asarray(x, dtype=float))), dtype=float)

    def from_raw(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.offset is None else x - np.asarray(self.offset)


@dataclass(frozen=True)
class LTISystem:
    """Linear system ``dx/dt = F x``, ``y = H x``, ``z = q x``."""

    F: np.ndarray
    H: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        q = np.asarray(self.q, dtype=float).reshape(-1)
        n = F.shape[0]
        if F.shape != (n, n):
            raise SystemFileError(f"F must be square, got shape {F.shape}")
        if H.shape[1] != n:
            raise SystemFileError(f"H must have {n} columns, got shape {H.shape}")
        if q.shape != (n,):
            raise SystemFileError(f"q must have {n} entries, got {q.shape[0]}")
        for name, m in (("F", F), ("H", H), ("q", q)):
            if not np.all(np.isfinite(m)):
                raise SystemFileError(f"{name} has non-finite entries")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "q", q)

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def p(self):
        return self.H.shape[0]

    def to_model(self, lower=None, upper=None, name="linear"):
        """The same system in expression form, states ``x1..xn``."""
        states = [f"x{i + 1}" for i in range(self.n)]
        lower = [-1.0] * self.n if lower is None else lower
        upper = [1.0] * self.n if upper is None else upper
        return SystemModel(
            states=states,
            dynamics=[linear_ast(row, states) for row in self.F],
            outputs=[linear_ast(row, states) for row in self.H],
            functional=linear_ast(self.q, states),
            lower=lower, upper=upper, name=name)


def linear_ast(row, names) -> Expr:
    """AST for ``sum_i row[i] * names[i]`` with zero terms dropped."""
    node = None
    for coef, name in zip(row, names):
        coef = float(coef)
        if coef == 0.0:
            continue
        term = expr.Var(name) if coef in (1.0, -1.0) else expr.BinOp(
            "*", expr.Const(abs(coef)), expr.Var(name))
        if node is None:
            node = expr.Neg(term) if coef < 0 else term
        else:
            node = expr.BinOp("-" if coef < 0 else "+", node, term)
    return expr.Const(0.0) if node is None else node


def refine_equilibrium(model: SystemModel, guess, tol=1e-10):
    """Solve ``F(x) = 0`` (raw coordinates) starting from ``guess``.

    Uses a hybrid Powell solver with the Jacobian assembled from first-order
    jets.
    """
    from scipy.optimize import root
    from .jet import Jet

    raw_F = model._raw[0]

    def fun(x):
        return np.array(raw_F(*x.tolist()), dtype=float)

    def jac(x):
        n = len(x)
        J = np.empty((n, n))
        for i in range(n):
            seeds = [Jet([v, 1.0 if k == i else 0.0]) for k, v in enumerate(x.tolist())]
            for r, f in enumerate(raw_F(*seeds)):
                J[r, i] = f.c[1] if isinstance(f, Jet) else 0.0
        return J

    sol = root(fun, np.asarray(guess, dtype=float), jac=jac, method="hybr",
               options={"xtol": 1e-15})
    x = sol.x
    scale = max(1.0, float(np.max(np.abs(x))))
    resid = float(np.max(np.abs(fun(x))))
    if not np.all(np.isfinite(x)) or resid > tol * scale:
        raise SystemFileError(
            f"steady state refinement failed (max |F| = {resid:.3e}): {sol.message}")
    return x


def system_from_dict(doc: dict):
    """Build a model from a parsed system file.

    Returns ``(model, lti)`` where ``lti`` is an :class:`LTISystem` for the
    ``"linear"`` variant and ``None`` otherwise.
    """
    name = doc.get("name", "system")
    box = doc.get("box")
    try:
        if "linear" in doc:
            lin = doc["linear"]
            lti = LTISystem(lin["F"], lin["H"], lin["q"])
            lower = upper = None
            if box is not None:
                lower, upper = box["lower"], box["upper"]
            return lti.to_model(lower, upper, name=name), lti
        params = eval_params(doc.get("params", {}))
        if box is None:
            raise SystemFileError("nonlinear systems need a sampling box")
        lower = np.asarray(box["lower"], dtype=float)
        upper = np.asarray(box["upper"], dtype=float)
        model = SystemModel(
            states=doc["states"], dynamics=doc["dynamics"], outputs=doc["outputs"],
            functional=doc["functional"], lower=lower, upper=upper,
            params=params, name=name)
        ss = doc.get("steady_state")
        if ss is None:
            return model, None
        values = ss["values"] if isinstance(ss, dict) else ss
        if isinstance(ss, dict) and ss.get("refine", False):
            values = refine_equilibrium(model, values)
        offset = np.asarray(values, dtype=float)
        return SystemModel(
            states=model.states, dynamics=model.dynamics, outputs=model.outputs,
            functional=model.functional, lower=lower - offset, upper=upper - offset,
            params=params, offset=offset, name=name), None
    except KeyError as exc:
        raise SystemFileError(f"missing field {exc.args[0]!r}") from None
