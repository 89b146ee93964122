"""Scalar expression language used to describe systems, outputs and functionals.

Grammar (EBNF)::

    expr     = term , { ("+" | "-") , term } ;
    term     = unary , { ("*" | "/") , unary } ;
    unary    = ("-" | "+") , unary | power ;
    power    = atom , [ ("^" | "**") , exponent ] ;
    exponent = int_atom , [ ("^" | "**") , exponent ] ;
    int_atom = INTEGER | "(" , exponent , ")" ;
    atom     = NUMBER | NAME | NAME , "(" , expr , ")" | "(" , expr , ")" ;

Unary minus binds looser than ``^`` so ``-x^2`` is ``-(x^2)``; ``^`` is right
associative and only accepts non-negative integer exponents, which are folded
to an exact ``int`` (``2^3^2`` stores exponent 9).  Real powers must be
written as ``exp(b*log(a))``.  Functions: sin, cos, exp, log, sqrt, abs.

Evaluation is field-agnostic: the same AST evaluates over floats or over
:class:`folin.jet.Jet` values.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

__all__ = [
    "Const", "Var", "Neg", "BinOp", "Pow", "Call", "Expr",
    "ExprError", "ExprSyntaxError", "UnknownFunctionError", "UnboundNameError",
    "EvalDomainError", "FUNCTIONS",
    "parse", "evaluate", "free_vars", "validate", "to_string", "compile_exprs",
]

MAX_EXPONENT = 64


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    def __init__(self, name, offset):
        super().__init__(f"unknown function {name!r}", offset)
        self.name = name


class UnboundNameError(ExprError):
    def __init__(self, name):
        super().__init__(f"name {name!r} is not allowed here")
        self.name = name


class EvalDomainError(ArithmeticError):
    """Raised when an expression leaves the domain of the active field."""


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Const, Var, Neg, BinOp, Pow, Call]


# --- field operations --------------------------------------------------------

def _real_or_jet(real_fn, method):
    def fn(x):
        if isinstance(x, float | int):
            try:
                return real_fn(x)
            except (ValueError, OverflowError) as exc:
                raise EvalDomainError(f"{method}({x!r}): {exc}") from None
        return getattr(x, method)()
    fn.__name__ = method
    return fn


def _real_log(x):
    if x <= 0:
        raise ValueError("log of non-positive value")
    return math.log(x)


def _real_sqrt(x):
    if x < 0:
        raise ValueError("sqrt of negative value")
    return math.sqrt(x)


FUNCTIONS: dict[str, Callable] = {
    "sin": _real_or_jet(math.sin, "sin"),
    "cos": _real_or_jet(math.cos, "cos"),
    "exp": _real_or_jet(math.exp, "exp"),
    "log": _real_or_jet(_real_log, "log"),
    "sqrt": _real_or_jet(_real_sqrt, "sqrt"),
    "abs": _real_or_jet(abs, "abs"),
}


def _ipow(base, n):
    # repeated multiplication keeps jets and negative bases exact
    if n == 0:
        return 1.0
    result = base
    for _ in range(n - 1):
        result = result * base
    return result


def _div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        raise EvalDomainError("division by zero") from None


# --- tokenizer / parser -------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^(),])
""", re.VERBOSE)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = []  # (kind, value, offset)
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", self._byte(pos))
            kind = m.lastgroup
            if kind != "ws":
                value = m.group()
                if kind == "op" and value == "**":
                    value = "^"
                self.tokens.append((kind, value, self._byte(pos)))
            pos = m.end()
        self.end = self._byte(len(text))
        self.i = 0

    def _byte(self, pos):
        return len(self.text[:pos].encode("utf-8"))

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ("eof", None, self.end)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value):
        kind, got, off = self.take()
        if got != value:
            what = "end of input" if kind == "eof" else repr(got)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", off)

    def parse(self) -> Expr:
        node = self.expr()
        kind, value, off = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected token {value!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            base = Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        kind, value, off = self.take()
        if value == "(":
            n = self.exponent()
            self.expect(")")
        elif kind == "num" and value.isdigit():
            n = int(value)
        else:
            what = "end of input" if kind == "eof" else repr(value)
            raise ExprSyntaxError(
                f"exponent must be a non-negative integer literal, found {what}", off)
        if self.peek()[1] == "^":
            self.take()
            n = n ** self.exponent()
        if n > MAX_EXPONENT:
            raise ExprSyntaxError(f"exponent {n} exceeds {MAX_EXPONENT}", off)
        return n

    def atom(self):
        kind, value, off = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            if self.peek()[1] == "(":
                if value not in FUNCTIONS:
                    raise UnknownFunctionError(value, off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            return Var(value)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "eof" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", off)


def parse(text: str) -> Expr:
    """Parse ``text`` into an immutable AST.

    Raises
    ------
    ExprSyntaxError
        With the byte offset of the offending token (``offset`` attribute).
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# --- printing -----------------------------------------------------------------

def to_string(node: Expr) -> str:
    """Render an AST so that ``parse(to_string(a)) == a``."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + to_string(node.operand)
    if isinstance(node, BinOp):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    if isinstance(node, Pow):
        base = to_string(node.base)
        if not isinstance(node.base, (Var, Call)) and not (
                isinstance(node.base, Const) and "e" not in base):
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# --- analysis -----------------------------------------------------------------

def free_vars(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Const):
        return set()
    if isinstance(node, BinOp):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, Neg):
        return free_vars(node.operand)
    if isinstance(node, Pow):
        return free_vars(node.base)
    return free_vars(node.arg)


def _first_var(node, allowed):
    if isinstance(node, Var):
        return None if node.name in allowed else node.name
    if isinstance(node, BinOp):
        return _first_var(node.left, allowed) or _first_var(node.right, allowed)
    if isinstance(node, (Neg,)):
        return _first_var(node.operand, allowed)
    if isinstance(node, Pow):
        return _first_var(node.base, allowed)
    if isinstance(node, Call):
        return _first_var(node.arg, allowed)
    return None


def validate(node: Expr, allowed) -> None:
    """Raise :class:`UnboundNameError` for the first name not in ``allowed``."""
    bad = _first_var(node, set(allowed))
    if bad is not None:
        raise UnboundNameError(bad)


# --- evaluation ---------------------------------------------------------------

def evaluate(node: Expr, ctx: Mapping[str, object]):
    """Tree-walking evaluation of ``node`` with names bound by ``ctx``.

    Works over floats and jets alike.  Integer powers use repeated
    multiplication.
    """
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return ctx[node.name]
        except KeyError:
            raise UnboundNameError(node.name) from None
    if isinstance(node, BinOp):
        a = evaluate(node.left, ctx)
        b = evaluate(node.right, ctx)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return _div(a, b)
    if isinstance(node, Neg):
        return -evaluate(node.operand, ctx)
    if isinstance(node, Pow):
        return _ipow(evaluate(node.base, ctx), node.exponent)
    return FUNCTIONS[node.func](evaluate(node.arg, ctx))


def _emit(node, names):
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return names[node.name]
    if isinstance(node, BinOp):
        a, b = _emit(node.left, names), _emit(node.right, names)
        if node.op == "/":
            return f"_div({a}, {b})"
        return f"({a} {node.op} {b})"
    if isinstance(node, Neg):
        return f"(-{_emit(node.operand, names)})"
    if isinstance(node, Pow):
        return f"_ipow({_emit(node.base, names)}, {node.exponent})"
    return f"_f_{node.func}({_emit(node.arg, names)})"


def compile_exprs(nodes: Sequence[Expr], args: Sequence[str],
                  constants: Mapping[str, float] | None = None):
    """Compile several ASTs into one function ``f(*args) -> tuple``.

    Names in ``constants`` are frozen at compile time.  The compiled function
    performs exactly the same operations as :func:`evaluate`, so results are
    bitwise identical.
    """
    constants = dict(constants or {})
    names = {}
    for i, a in enumerate(args):
        names[a] = f"_a{i}"
    namespace = {"_div": _div, "_ipow": _ipow}
    namespace.update({f"_f_{k}": v for k, v in FUNCTIONS.items()})
    for i, (k, v) in enumerate(constants.items()):
        if k not in names:
            names[k] = f"_c{i}"
            namespace[f"_c{i}"] = v
    for node in nodes:
        validate(node, names)
    body = ", ".join(_emit(n, names) for n in nodes)
    src = f"def _fn({', '.join(names[a] for a in args)}):\n    return ({body}{',' if nodes else ''})\n"
    exec(compile(src, "<folin-expr>", "exec"), namespace)
    return namespace["_fn"]
