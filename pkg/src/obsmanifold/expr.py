"""Expression trees and vector-valued analytic maps.

Expressions are immutable, hashable trees.  Every analytic map in the
library (chart extensions, compatibility maps, transitions, curves,
dynamical systems) is a :class:`VecMap` whose components are expressions.

Text form is a prefix s-expression::

    (add (pow x1 2) (mul 3.0 (sin x2)))

Operators: ``add`` and ``mul`` (two or more arguments), ``sub`` and ``div``
(exactly two), ``pow`` (base and an integer literal), and the unary
``sin cos exp log abs``.  ``sign`` appears only in derivatives of ``abs``.
Atoms are float literals or identifiers (``x1``, ``x2``, ..., ``t``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import DomainViolation, ExpressionSyntaxError, NonDifferentiable, NonFinite

UNARY = ("sin", "cos", "exp", "log", "abs", "sign")
BINARY = ("add", "sub", "mul", "div")


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple = ()
    value: object = None

    # operator sugar, used heavily by tests and corpus builders
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(const(-1.0), self)

    def __pow__(self, n):
        return power(self, n)

    def __str__(self):
        return to_sexpr(self)


def _wrap(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return const(float(x))


def const(value: float) -> Expr:
    value = float(value)
    if value == 0.0:
        value = 0.0  # drop negative zero so equal trees hash equally
    return Expr("const", (), value)


def var(name: str) -> Expr:
    return Expr("var", (), name)


ZERO = const(0.0)
ONE = const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return e.op == "const" and (value is None or e.value == value)


# simplifying constructors: fold constants and drop neutral elements


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if a == b:
        return ZERO
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return const(a.value / b.value)
    return Expr("div", (a, b))


def power(base: Expr, n: int) -> Expr:
    if int(n) != n:
        raise ExpressionSyntaxError(f"pow exponent must be an integer, got {n!r}")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return base
    if _is_const(base) and not (base.value == 0.0 and n < 0):
        return const(base.value**n)
    return Expr("pow", (base,), n)


def unary(op: str, a: Expr) -> Expr:
    if op not in UNARY:
        raise ExpressionSyntaxError(f"unknown unary operator {op!r}")
    return Expr(op, (a,))


def sin(a):
    return unary("sin", _wrap(a))


def cos(a):
    return unary("cos", _wrap(a))


def exp(a):
    return unary("exp", _wrap(a))


def log(a):
    return unary("log", _wrap(a))


def absolute(a):
    return unary("abs", _wrap(a))


# ---------------------------------------------------------------- queries


@lru_cache(maxsize=None)
def free_vars(e: Expr) -> frozenset:
    if e.op == "var":
        return frozenset([e.value])
    if e.op == "const":
        return frozenset()
    out = frozenset()
    for a in e.args:
        out |= free_vars(a)
    return out


@lru_cache(maxsize=None)
def contains_abs(e: Expr) -> bool:
    if e.op in ("abs", "sign"):
        return True
    return any(contains_abs(a) for a in e.args)


@lru_cache(maxsize=None)
def abs_arguments(e: Expr) -> tuple:
    """Arguments of every abs/sign node, outermost first, without duplicates."""
    out = [e.args[0]] if e.op in ("abs", "sign") else []
    for a in e.args:
        out.extend(abs_arguments(a))
    return tuple(dict.fromkeys(out))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    memo: dict = {}

    def go(node: Expr) -> Expr:
        if node in memo:
            return memo[node]
        if node.op == "var":
            out = mapping.get(node.value, node)
        elif node.op == "const":
            out = node
        else:
            out = _rebuild(node, tuple(go(a) for a in node.args))
        memo[node] = out
        return out

    return go(e)


def _rebuild(node: Expr, args: tuple) -> Expr:
    op = node.op
    if op == "add":
        return add(*args)
    if op == "sub":
        return sub(*args)
    if op == "mul":
        return mul(*args)
    if op == "div":
        return div(*args)
    if op == "pow":
        return power(args[0], node.value)
    return unary(op, args[0])


# ---------------------------------------------------------------- derivative


@lru_cache(maxsize=None)
def diff(e: Expr, name: str) -> Expr:
    """Symbolic partial derivative with respect to variable ``name``."""
    op = e.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if e.value == name else ZERO
    if name not in free_vars(e):
        return ZERO
    if op == "add":
        return add(diff(e.args[0], name), diff(e.args[1], name))
    if op == "sub":
        return sub(diff(e.args[0], name), diff(e.args[1], name))
    if op == "mul":
        a, b = e.args
        return add(mul(diff(a, name), b), mul(a, diff(b, name)))
    if op == "div":
        a, b = e.args
        num = sub(mul(diff(a, name), b), mul(a, diff(b, name)))
        return div(num, power(b, 2))
    if op == "pow":
        (a,) = e.args
        n = e.value
        return mul(mul(const(n), power(a, n - 1)), diff(a, name))
    (a,) = e.args
    da = diff(a, name)
    if op == "sin":
        return mul(unary("cos", a), da)
    if op == "cos":
        return mul(mul(const(-1.0), unary("sin", a)), da)
    if op == "exp":
        return mul(e, da)
    if op == "log":
        return div(da, a)
    if op == "abs":
        return mul(unary("sign", a), da)
    if op == "sign":
        # derivative of sign vanishes away from 0; at 0 evaluation raises
        return mul(mul(ZERO, unary("sign", a)), da)
    raise ExpressionSyntaxError(f"cannot differentiate node {op!r}")


# ---------------------------------------------------------------- evaluation


def _finite(x: float) -> float:
    if not math.isfinite(x):
        raise NonFinite(f"non-finite intermediate value {x!r}")
    return x


def _sign(u: float) -> float:
    if u == 0.0:
        raise NonDifferentiable("derivative of abs evaluated at a zero argument")
    return 1.0 if u > 0 else -1.0


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise NonFinite("division by zero")
    return _finite(a / b)


def _log(a: float) -> float:
    if a <= 0.0:
        raise NonFinite(f"log of non-positive value {a!r}")
    return math.log(a)


def _pow(a: float, n: int) -> float:
    if a == 0.0 and n < 0:
        raise NonFinite("zero raised to a negative power")
    try:
        return _finite(a**n)
    except OverflowError as exc:
        raise NonFinite(str(exc)) from exc


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError as exc:
        raise NonFinite(str(exc)) from exc


_UNARY_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
    "log": _log,
    "abs": abs,
    "sign": _sign,
}


def compile_expr(e: Expr, variables: Sequence[str]) -> Callable[[Sequence[float]], float]:
    """Compile ``e`` into a closure taking a positional coordinate sequence."""
    return _compile(e, tuple(variables))


@lru_cache(maxsize=None)
def _compile(e: Expr, variables: tuple) -> Callable:
    op = e.op
    if op == "const":
        v = e.value
        return lambda x: v
    if op == "var":
        try:
            i = variables.index(e.value)
        except ValueError:
            raise ExpressionSyntaxError(f"unbound variable {e.value!r}") from None
        return lambda x: x[i]
    if op in BINARY:
        fa = _compile(e.args[0], variables)
        fb = _compile(e.args[1], variables)
        if op == "add":
            return lambda x: fa(x) + fb(x)
        if op == "sub":
            return lambda x: fa(x) - fb(x)
        if op == "mul":
            return lambda x: _finite(fa(x) * fb(x))
        return lambda x: _div(fa(x), fb(x))
    if op == "pow":
        fa = _compile(e.args[0], variables)
        n = e.value
        return lambda x: _pow(fa(x), n)
    fa = _compile(e.args[0], variables)
    fn = _UNARY_FN[op]
    return lambda x: fn(fa(x))


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    names = tuple(sorted(free_vars(e)))
    missing = [n for n in names if n not in env]
    if missing:
        raise ExpressionSyntaxError(f"no value for variables {missing}")
    return _finite(_compile(e, names)([float(env[n]) for n in names]))


# ---------------------------------------------------------------- s-expressions

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def parse_sexpr(text: str) -> Expr:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ExpressionSyntaxError(f"unexpected character at offset {pos}")
        if m.group(1):
            tokens.append(("(", m.start(1)))
        elif m.group(2):
            tokens.append((")", m.start(2)))
        elif m.group(3):
            tokens.append((m.group(3), m.start(3)))
        pos = m.end()
    if not tokens:
        raise ExpressionSyntaxError("empty expression")
    expr, i = _parse_tokens(tokens, 0)
    if i != len(tokens):
        raise ExpressionSyntaxError(f"trailing input at offset {tokens[i][1]}")
    return expr


def _parse_atom(tok: str, offset: int) -> Expr:
    try:
        return const(float(tok))
    except ValueError:
        pass
    if _IDENT.match(tok) and tok not in UNARY + BINARY + ("pow",):
        return var(tok)
    raise ExpressionSyntaxError(f"bad atom {tok!r} at offset {offset}")


def _parse_tokens(tokens, i):
    tok, off = tokens[i]
    if tok == ")":
        raise ExpressionSyntaxError(f"unexpected ')' at offset {off}")
    if tok != "(":
        return _parse_atom(tok, off), i + 1
    if i + 1 >= len(tokens):
        raise ExpressionSyntaxError("unterminated expression")
    op, op_off = tokens[i + 1]
    i += 2
    args = []
    raw_args = []
    while True:
        if i >= len(tokens):
            raise ExpressionSyntaxError(f"missing ')' for operator at offset {op_off}")
        if tokens[i][0] == ")":
            i += 1
            break
        if op == "pow" and len(args) == 1:
            raw_args.append(tokens[i])
            i += 1
            continue
        a, i = _parse_tokens(tokens, i)
        args.append(a)
    if op in ("add", "mul"):
        if len(args) < 2:
            raise ExpressionSyntaxError(f"{op} needs at least two arguments (offset {op_off})")
        out = args[0]
        for a in args[1:]:
            out = Expr(op, (out, a))
        return out, i
    if op in ("sub", "div"):
        if len(args) != 2:
            raise ExpressionSyntaxError(f"{op} takes two arguments (offset {op_off})")
        return Expr(op, tuple(args)), i
    if op == "pow":
        if len(args) != 1 or len(raw_args) != 1:
            raise ExpressionSyntaxError(f"pow takes a base and an integer exponent (offset {op_off})")
        tok_n, n_off = raw_args[0]
        try:
            n = int(tok_n)
        except ValueError:
            raise ExpressionSyntaxError(f"pow exponent must be an integer literal at offset {n_off}") from None
        return Expr("pow", (args[0],), n), i
    if op in UNARY:
        if len(args) != 1:
            raise ExpressionSyntaxError(f"{op} takes one argument (offset {op_off})")
        return Expr(op, (args[0],)), i
    raise ExpressionSyntaxError(f"unknown operator {op!r} at offset {op_off}")


def to_sexpr(e: Expr) -> str:
    if e.op == "const":
        return repr(float(e.value))
    if e.op == "var":
        return e.value
    if e.op == "pow":
        return f"(pow {to_sexpr(e.args[0])} {e.value})"
    return "(" + " ".join([e.op] + [to_sexpr(a) for a in e.args]) + ")"


# ---------------------------------------------------------------- VecMap


def standard_names(k: int) -> tuple:
    return tuple(f"x{i + 1}" for i in range(k))


@dataclass(frozen=True)
class VecMap:
    """A map R^k -> R^n given by expressions, defined on an open box.

    ``lower``/``upper`` may contain infinities.  Evaluation outside the box
    raises :class:`DomainViolation`.
    """

    components: tuple
    variables: tuple
    lower: tuple
    upper: tuple
    _fns: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(_wrap(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "variables", tuple(self.variables))
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        k = len(self.variables)
        if len(set(self.variables)) != k:
            raise ExpressionSyntaxError(f"duplicate variable names {self.variables}")
        if len(lo) != k or len(hi) != k:
            raise ExpressionSyntaxError(f"box has {len(lo)}/{len(hi)} bounds for {k} variables")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ExpressionSyntaxError("box bounds must satisfy lower < upper")
        allowed = set(self.variables)
        for c in comps:
            extra = free_vars(c) - allowed
            if extra:
                raise ExpressionSyntaxError(f"component {to_sexpr(c)} uses undeclared variables {sorted(extra)}")
        object.__setattr__(self, "_fns", tuple(_compile(c, self.variables) for c in comps))

    @classmethod
    def from_exprs(cls, components: Iterable, variables=None, lower=None, upper=None) -> "VecMap":
        components = tuple(_wrap(c) for c in components)
        if variables is None:
            used = set()
            for c in components:
                used |= free_vars(c)
            k = max([int(n[1:]) for n in used if re.fullmatch(r"x\d+", n)] + [0])
            if "t" in used:
                variables = ("t",)
            else:
                variables = standard_names(max(k, 1))
        variables = tuple(variables)
        k = len(variables)
        lower = (-math.inf,) * k if lower is None else tuple(lower)
        upper = (math.inf,) * k if upper is None else tuple(upper)
        return cls(components, variables, lower, upper)

    @classmethod
    def identity(cls, k: int, lower=None, upper=None) -> "VecMap":
        names = standard_names(k)
        return cls.from_exprs([var(n) for n in names], names, lower, upper)

    @classmethod
    def constant(cls, values: Sequence[float], k: int, lower=None, upper=None) -> "VecMap":
        return cls.from_exprs([const(v) for v in values], standard_names(k), lower, upper)

    @classmethod
    def affine(cls, matrix, offset, lower=None, upper=None) -> "VecMap":
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        b = np.asarray(offset, dtype=float).reshape(-1)
        names = standard_names(a.shape[1])
        xs = [var(n) for n in names]
        comps = []
        for i in range(a.shape[0]):
            e = const(b[i])
            for j in range(a.shape[1]):
                e = add(e, mul(const(a[i, j]), xs[j]))
            comps.append(e)
        return cls.from_exprs(comps, names, lower, upper)

    @property
    def in_dim(self) -> int:
        return len(self.variables)

    @property
    def out_dim(self) -> int:
        return len(self.components)

    @property
    def abs_free(self) -> bool:
        return not any(contains_abs(c) for c in self.components)

    def kink_clearance(self, x) -> float:
        """Smallest |u(x)| over abs arguments u; inf for abs-free maps.

        A positive value means every abs is analytic near x, hence so is the map.
        """
        xs = [float(v) for v in np.asarray(x, dtype=float).reshape(-1)]
        args = tuple(dict.fromkeys(u for c in self.components for u in abs_arguments(c)))
        return min((abs(_compile(u, self.variables)(xs)) for u in args), default=math.inf)

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.in_dim:
            return False
        return all(lo + margin < v < hi - margin for v, lo, hi in zip(x, self.lower, self.upper))

    def widths(self, x=None) -> np.ndarray:
        """Box widths; infinite axes fall back to ``max(1, |x_i|)``."""
        w = np.array(self.upper) - np.array(self.lower)
        if x is None:
            x = np.zeros(self.in_dim)
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.where(np.isfinite(w), w, np.maximum(1.0, np.abs(x)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.in_dim:
            raise DomainViolation(f"point has {x.shape[0]} coordinates, map expects {self.in_dim}")
        if not self.contains(x):
            raise DomainViolation(f"point {x.tolist()} outside domain box")
        return self._raw(x)

    def _raw(self, x) -> np.ndarray:
        xs = [float(v) for v in x]
        return np.array([_finite(f(xs)) for f in self._fns])

    def jacobian_exprs(self) -> tuple:
        return tuple(tuple(diff(c, v) for v in self.variables) for c in self.components)

    def renamed(self, names: Sequence[str]) -> "VecMap":
        names = tuple(names)
        mapping = {old: var(new) for old, new in zip(self.variables, names)}
        comps = [substitute(c, mapping) for c in self.components]
        return VecMap(tuple(comps), names, self.lower, self.upper)

    def with_box(self, lower, upper) -> "VecMap":
        return VecMap(self.components, self.variables, tuple(lower), tuple(upper))

    def sexprs(self) -> list:
        return [to_sexpr(c) for c in self.components]


def compose_maps(outer: VecMap, inner: VecMap) -> VecMap:
    """``outer o inner`` on inner's domain box."""
    if outer.in_dim != inner.out_dim:
        raise ExpressionSyntaxError(f"cannot compose: outer takes {outer.in_dim} inputs, inner gives {inner.out_dim}")
    mapping = dict(zip(outer.variables, inner.components))
    comps = [substitute(c, mapping) for c in outer.components]
    return VecMap(tuple(comps), inner.variables, inner.lower, inner.upper)


def product_maps(first: VecMap, second: VecMap) -> VecMap:
    """Componentwise product ``(x, y) -> (first(x), second(y))``."""
    k1, k2 = first.in_dim, second.in_dim
    names = standard_names(k1 + k2)
    a = first.renamed(names[:k1])
    b = second.renamed(names[k1:])
    return VecMap(a.components + b.components, names, a.lower + b.lower, a.upper + b.upper)


def inverse_affine(m: VecMap) -> VecMap | None:
    """Inverse of an affine map (None if ``m`` is not affine or is singular)."""
    k = m.in_dim
    if m.out_dim != k:
        return None
    for row in m.jacobian_exprs():
        for entry in row:
            if entry.op != "const":
                return None
    a = np.array([[entry.value for entry in row] for row in m.jacobian_exprs()], dtype=float)
    if abs(np.linalg.det(a)) < 1e-12:
        return None
    b = m._raw(np.zeros(k))
    ainv = np.linalg.inv(a)
    return VecMap.affine(ainv, -ainv @ b)
