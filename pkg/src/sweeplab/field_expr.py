"""Scalar field formulas over ``t, x1..xn``.

Formulas are parsed into a small immutable AST and compiled into plain
numpy code.  Two entry points are generated per formula: a value-only
evaluator (used by root finding) and a forward-mode jet evaluator that
propagates exact first derivatives in ``t`` and every ``xk``.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative, constant exponent
    atom   := NUMBER | 'pi' | 't' | 'x<k>' | FUNC '(' args ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np

__all__ = [
    "FieldSyntaxError",
    "FieldDomainError",
    "FieldExpr",
    "FieldJet",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "parse_field",
    "eval_jet",
    "to_source",
]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2}


class FieldSyntaxError(ValueError):
    """Malformed formula; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset


class FieldDomainError(ArithmeticError):
    """A subexpression left its domain during evaluation."""

    def __init__(self, message: str, subexpr: str):
        super().__init__(f"{message}: {subexpr}")
        self.subexpr = subexpr


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0 is t, k >= 1 is xk

    @property
    def name(self) -> str:
        return "t" if self.index == 0 else f"x{self.index}"


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Pow, Call]

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_ATOM = 1, 2, 3, 5


def _fmt_num(value: float) -> str:
    if value == math.pi:
        return "pi"
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _print(node: Node) -> tuple[str, int]:
    if isinstance(node, Num):
        return _fmt_num(node.value), _PREC_ATOM
    if isinstance(node, Var):
        return node.name, _PREC_ATOM
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})", _PREC_ATOM
    if isinstance(node, Neg):
        return "-" + _wrap(node.arg, _PREC_NEG), _PREC_NEG
    if isinstance(node, Pow):
        return f"{_wrap(node.base, _PREC_ATOM)}^{_wrap(node.exponent, _PREC_NEG)}", _PREC_ATOM - 1
    if isinstance(node, BinOp):
        prec = _PREC_ADD if node.op in "+-" else _PREC_MUL
        return f"{_wrap(node.left, prec)} {node.op} {_wrap(node.right, prec + 1)}", prec
    raise TypeError(f"not an expression node: {node!r}")


def _wrap(node: Node, min_prec: int) -> str:
    text, prec = _print(node)
    return text if prec >= min_prec else f"({text})"


def to_source(node: Node) -> str:
    """Print an AST so that re-parsing yields an identical tree."""
    return _print(node)[0]


def _variables(node: Node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return _variables(node.arg)
    if isinstance(node, BinOp):
        return _variables(node.left) | _variables(node.right)
    if isinstance(node, Pow):
        return _variables(node.base) | _variables(node.exponent)
    return set().union(*(_variables(a) for a in node.args))


def _const_value(node: Node) -> float:
    with np.errstate(all="ignore"):
        v = float(_compile_value(node, 0)(0.0, np.zeros(0)))
    if not math.isfinite(v):
        raise FieldDomainError("non-finite constant exponent", to_source(node))
    return v


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise FieldSyntaxError(f"unexpected character {source[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, dim: int):
        self.source = source
        self.dim = dim
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def _take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def _expect(self, op: str):
        kind, text, off = self.tok
        if kind != "op" or text != op:
            found = "end of input" if kind == "end" else repr(text)
            raise FieldSyntaxError(f"expected {op!r}, found {found}", off)
        self.i += 1

    def parse(self) -> Node:
        node = self.expr()
        kind, text, off = self.tok
        if kind != "end":
            raise FieldSyntaxError(f"unexpected token {text!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self._take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self._take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok[0] == "op" and self.tok[1] == "-":
            self._take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self._take()
            off = self.tok[2]
            exponent = self.unary()
            if _variables(exponent):
                raise FieldSyntaxError("exponent must be a constant", off)
            return Pow(base, exponent)
        return base

    def atom(self) -> Node:
        kind, text, off = self._take()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text in FUNCTIONS:
                self._expect("(")
                args = [self.expr()]
                while self.tok[0] == "op" and self.tok[1] == ",":
                    self._take()
                    args.append(self.expr())
                self._expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise FieldSyntaxError(f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", off)
                return Call(text, tuple(args))
            if text == "t":
                return Var(0)
            if text == "pi":
                return Num(math.pi)
            m = re.fullmatch(r"x([1-9]\d*)", text)
            if m:
                k = int(m.group(1))
                if k > self.dim:
                    raise FieldSyntaxError(f"variable index exceeds dim ({text} with dim={self.dim})", off)
                return Var(k)
            raise FieldSyntaxError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            node = self.expr()
            self._expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise FieldSyntaxError(f"unexpected {found}", off)


# ---------------------------------------------------------------------------
# Runtime helpers referenced by generated code


def _chk_div(b, src):
    if np.any(b == 0):
        raise FieldDomainError("division by zero", src)
    return b


def _chk_log(a, src):
    if np.any(a <= 0):
        raise FieldDomainError("log of nonpositive value", src)
    return a


def _chk_sqrt(a, src):
    if np.any(a < 0):
        raise FieldDomainError("sqrt of negative value", src)
    return a


def _chk_sqrt_jet(a, src):
    if np.any(a <= 0):
        raise FieldDomainError("sqrt is not differentiable at nonpositive value", src)
    return a


def _chk_pow(a, c, src, jet=False):
    if not float(c).is_integer():
        if np.any(a < 0):
            raise FieldDomainError("non-integer power of negative base", src)
        if (c < 0 or (jet and c < 1)) and np.any(a == 0):
            raise FieldDomainError("power of zero base outside its domain", src)
    elif c < 0 and np.any(a == 0):
        raise FieldDomainError("division by zero", src)
    return a


_NAMESPACE = {
    "np": np,
    "_chk_div": _chk_div,
    "_chk_log": _chk_log,
    "_chk_sqrt": _chk_sqrt,
    "_chk_sqrt_jet": _chk_sqrt_jet,
    "_chk_pow": _chk_pow,
}


class _CodeGen:
    """Emit straight-line numpy code; one temporary per AST node."""

    def __init__(self, dim: int, jet: bool):
        self.dim = dim
        self.jet = jet
        self.lines: list[str] = []
        self.consts: dict[str, object] = {}
        self.counter = 0
        self.has_kink = False

    def _new(self) -> str:
        self.counter += 1
        return f"_{self.counter}"

    def _src(self, node: Node) -> str:
        name = f"_s{len(self.consts)}"
        self.consts[name] = to_source(node)
        return name

    def emit(self, node: Node) -> tuple[str, str | None]:
        """Return (value_var, deriv_var or None for a constant subtree)."""
        L = self.lines
        v = self._new()
        if isinstance(node, Num):
            L.append(f"{v} = {node.value!r}")
            return v, None
        if isinstance(node, Var):
            L.append(f"{v} = V[{node.index}]")
            return v, (f"E[{node.index}]" if self.jet else None)
        if isinstance(node, Neg):
            a, da = self.emit(node.arg)
            L.append(f"{v} = -{a}")
            return v, self._d(f"-{da}" if da else None)
        if isinstance(node, BinOp):
            a, da = self.emit(node.left)
            b, db = self.emit(node.right)
            op = node.op
            if op == "/":
                L.append(f"_chk_div({b}, {self._src(node)})")
            L.append(f"{v} = {a} {op} {b}")
            if not self.jet or (da is None and db is None):
                return v, None
            if op in "+-":
                if da and db:
                    d = f"{da} {op} {db}"
                else:
                    d = da if da else (f"-{db}" if op == "-" else db)
            elif op == "*":
                d = " + ".join(x for x in (da and f"{da} * {b}", db and f"{a} * {db}") if x)
            else:
                parts = []
                if da:
                    parts.append(f"{da}")
                if db:
                    parts.append(f"- {v} * {db}")
                d = f"({' '.join(parts)}) / {b}"
            return v, self._d(d)
        if isinstance(node, Pow):
            c = _const_value(node.exponent)
            a, da = self.emit(node.base)
            if float(c).is_integer() and c >= 0:
                pass
            else:
                L.append(f"_chk_pow({a}, {c!r}, {self._src(node)}, {self.jet})")
            if c == 0:
                L.append(f"{v} = np.ones_like({a}) if isinstance({a}, np.ndarray) else 1.0")
                return v, None
            L.append(f"{v} = {a} ** {c!r}")
            if not da:
                return v, None
            if c == 1:
                return v, da
            return v, self._d(f"({c!r} * {a} ** {c - 1!r}) * {da}")
        if isinstance(node, Call):
            args = [self.emit(a) for a in node.args]
            f = node.func
            if f in ("min", "max"):
                (a, da), (b, db) = args
                cmp = "<=" if f == "min" else ">="
                L.append(f"{v} = np.{'minimum' if f == 'min' else 'maximum'}({a}, {b})")
                if not self.jet:
                    return v, None
                self.has_kink = True
                L.append(f"K = K | ({a} == {b})")
                if da is None and db is None:
                    return v, None
                L.append(f"_w{v} = ({a} {cmp} {b})")
                return v, self._d(f"np.where(_w{v}, {da or 0.0}, {db or 0.0})")
            (a, da), = args
            if f == "log":
                L.append(f"_chk_log({a}, {self._src(node)})")
                L.append(f"{v} = np.log({a})")
                return v, self._d(f"{da} / {a}" if da else None)
            if f == "sqrt":
                chk = "_chk_sqrt_jet" if (self.jet and da) else "_chk_sqrt"
                L.append(f"{chk}({a}, {self._src(node)})")
                L.append(f"{v} = np.sqrt({a})")
                return v, self._d(f"{da} / (2.0 * {v})" if da else None)
            if f == "abs":
                L.append(f"{v} = np.abs({a})")
                if not self.jet:
                    return v, None
                self.has_kink = True
                L.append(f"K = K | ({a} == 0)")
                return v, self._d(f"np.where({a} >= 0, 1.0, -1.0) * {da}" if da else None)
            L.append(f"{v} = np.{f}({a})")
            if not da:
                return v, None
            deriv = {"sin": f"np.cos({a})", "cos": f"-np.sin({a})", "exp": v}[f]
            return v, self._d(f"{deriv} * {da}")
        raise TypeError(f"not an expression node: {node!r}")

    def _d(self, expr: str | None) -> str | None:
        if expr is None:
            return None
        d = f"{self._new()}d"
        self.lines.append(f"{d} = {expr}")
        return d


def _compile_value(ast: Node, dim: int) -> Callable:
    gen = _CodeGen(dim, jet=False)
    v, _ = gen.emit(ast)
    body = "\n    ".join(gen.lines + [f"return {v}"])
    src = f"def _value(t, X):\n    V = [t] + [X[..., k] for k in range({dim})]\n    {body}\n"
    ns = dict(_NAMESPACE, **gen.consts)
    exec(src, ns)
    return ns["_value"]


def _compile_jet(ast: Node, dim: int) -> Callable:
    gen = _CodeGen(dim, jet=True)
    v, d = gen.emit(ast)
    body = "\n    ".join(gen.lines)
    ret_d = d if d else "0.0"
    src = (
        "def _jet(t, X, E, K):\n"
        f"    V = [t] + [X[..., k] for k in range({dim})]\n"
        f"    {body}\n"
        f"    return {v}, {ret_d}, K\n"
    )
    ns = dict(_NAMESPACE, **gen.consts)
    exec(src, ns)
    return ns["_jet"]


# ---------------------------------------------------------------------------
# Public types


@dataclass(frozen=True)
class FieldJet:
    """Value and exact first partials of a field at one point."""

    value: float
    dt: float
    dx: np.ndarray
    nonsmooth: bool = False


@dataclass(frozen=True, eq=False)
class FieldExpr:
    source: str
    dim: int
    ast: Node

    def __str__(self) -> str:
        return to_source(self.ast)

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldExpr) and self.dim == other.dim and self.ast == other.ast

    def __hash__(self) -> int:
        return hash((self.dim, self.ast))

    @cached_property
    def variables(self) -> frozenset[int]:
        return frozenset(_variables(self.ast))

    @property
    def depends_on_t(self) -> bool:
        return 0 in self.variables

    @property
    def depends_on_x(self) -> bool:
        return any(k > 0 for k in self.variables)

    @cached_property
    def _value_fn(self):
        return _compile_value(self.ast, self.dim)

    @cached_property
    def _jet_fn(self):
        return _compile_jet(self.ast, self.dim)

    def _prepare(self, t, x):
        t = np.asarray(t, dtype=float)
        X = np.asarray(x, dtype=float)
        if X.shape[-1:] != (self.dim,):
            raise ValueError(f"point has {X.shape[-1:] or 'no'} coordinates, expected {self.dim}")
        if t.ndim == 0:
            return float(t), X, X.shape[:-1]
        shape = np.broadcast_shapes(t.shape, X.shape[:-1])
        if t.shape != shape:
            t = np.broadcast_to(t, shape)
        if X.shape[:-1] != shape:
            X = np.broadcast_to(X, shape + (self.dim,))
        return t, X, shape

    def value(self, t, x):
        """Vectorized value; ``x`` has trailing axis of length ``dim``."""
        t, X, shape = self._prepare(t, x)
        with np.errstate(all="ignore"):
            v = np.asarray(self._value_fn(t, X), dtype=float)
        return v if v.shape == shape else np.broadcast_to(v, shape)

    def jet_arrays(self, t, x):
        """Vectorized jets: ``(value, grad, kink)`` with ``grad`` of shape
        ``(dim + 1,) + shape``; row 0 is d/dt, row k is d/dxk."""
        t, X, shape = self._prepare(t, x)
        n1 = self.dim + 1
        E = np.eye(n1).reshape((n1, n1) + (1,) * len(shape))
        with np.errstate(all="ignore"):
            v, d, kink = self._jet_fn(t, X, E, np.zeros(shape, dtype=bool))
        v = np.asarray(v, dtype=float)
        d = np.asarray(d, dtype=float)
        if v.shape != shape:
            v = np.broadcast_to(v, shape)
        if d.shape != (n1,) + shape:
            d = np.broadcast_to(d, (n1,) + shape)
        if kink.shape != shape:
            kink = np.broadcast_to(kink, shape)
        return v, d, kink

    def jet(self, t, x) -> FieldJet:
        v, d, kink = self.jet_arrays(t, x)
        if v.shape != ():
            raise ValueError("jet() takes a single point; use jet_arrays for batches")
        return FieldJet(float(v), float(d[0]), np.array(d[1:], dtype=float), bool(kink))


def parse_field(source: str, dim: int) -> FieldExpr:
    """Parse ``source`` as a field over ``t, x1..x{dim}``."""
    if not isinstance(source, str) or not source.strip():
        raise FieldSyntaxError("empty formula", 0)
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    return FieldExpr(source, int(dim), _Parser(source, int(dim)).parse())


def eval_jet(expr: FieldExpr, t: float, x) -> FieldJet:
    x = np.asarray(x, dtype=float)
    if x.shape != (expr.dim,):
        raise ValueError(f"expected a point of length {expr.dim}, got shape {x.shape}")
    return expr.jet(float(t), x)
