"""Parsing and evaluation of scalar coefficient expressions.

The expression language covers arithmetic in one variable ``x`` with the
functions abs/exp/sin/cos/sqrt/sign and the open-interval indicator
``ind(a,b)``, which evaluates to 1 when a < x < b and 0 otherwise.
Indicators (and ``sign``, which equals ``ind(0,inf) - ind(-inf,0)``) are the
only discontinuous primitives, so every candidate discontinuity point can be
read straight off the syntax tree by `extract_breakpoints`.

Grammar (full EBNF in the README)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "x" | NAME "(" expr ")"
            | "ind" "(" bound "," bound ")" | "(" expr ")"
    bound  := ["-"] (NUMBER | "inf")

``inf`` is a keyword only inside ``ind(,)`` bounds.  ASTs are immutable and
evaluation is pure, so parsed expressions are safe to share across threads.

Genuine domain errors (division by zero, square roots of negatives,
non-integer powers of negatives) raise rather than returning NaN.  Plain
float overflow is not an error: intermediates saturate to +-inf and any NaN
they induce (such as 0 * inf) propagates IEEE-style, which is what lets the
simulation schemes detect and flag exploding paths instead of crashing.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union


class Side(enum.Enum):
    """How indicator boundaries resolve when evaluating exactly on them.

    EXACT uses the literal open-interval semantics (boundary excluded);
    LEFT/RIGHT resolve a boundary point as the limit from that side.  Away
    from boundaries all three agree exactly.
    """

    LEFT = "left"
    RIGHT = "right"
    EXACT = "exact"


class ExprError(Exception):
    """Base class for all expression errors."""


class ExprSyntaxError(ExprError):
    """Raised by `parse` with the byte offset of the offending token."""

    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        hint = f", expected {expected}" if expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class IndicatorBoundsError(ExprSyntaxError):
    """Indicator written with lower bound >= upper bound."""


class EvaluationError(ExprError):
    """Base class for genuine domain errors during evaluation."""


class DivisionByZero(EvaluationError):
    pass


class DomainError(EvaluationError):
    """sqrt of a negative number, or a non-integer power of one."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "ExprAst"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Func:
    name: str  # abs exp sin cos sqrt sign
    arg: "ExprAst"


@dataclass(frozen=True)
class Ind:
    """Open-interval indicator 1_{(lo,hi)}(x); lo/hi may be +-inf."""

    lo: float
    hi: float


ExprAst = Union[Const, Var, Neg, BinOp, Func, Ind]

FUNCTIONS = ("abs", "exp", "sin", "cos", "sqrt", "sign")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"found {text or 'end of input'!r}", pos, expected=repr(op))
        self.advance()

    def parse(self) -> ExprAst:
        kind, _, pos = self.peek()
        if kind == "end":
            raise ExprSyntaxError("empty input", pos, expected="an expression")
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {text!r}", pos, expected="end of input")
        return node

    def expr(self) -> ExprAst:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> ExprAst:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.unary())
            else:
                return node

    def unary(self) -> ExprAst:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> ExprAst:
        node = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinOp("^", node, self.unary())
        return node

    def atom(self) -> ExprAst:
        kind, text, pos = self.advance()
        if kind == "number":
            return Const(float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "name":
            if text == "x":
                return Var()
            if text == "ind":
                return self.indicator(pos)
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                if text == "sign" and not isinstance(arg, Var):
                    # Discontinuities of sign(f(x)) at roots of f are not
                    # syntactically extractable, so only the bare variable is
                    # accepted; rewrite with ind(,) or declare breakpoints.
                    raise ExprSyntaxError("sign() argument must be the bare variable x", pos)
                return Func(text, arg)
            if text == "inf":
                raise ExprSyntaxError("'inf' is only valid inside ind(,)", pos)
            raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
        raise ExprSyntaxError(
            f"found {text or 'end of input'!r}", pos, expected="a number, 'x', a function or '('"
        )

    def indicator(self, ind_pos: int) -> ExprAst:
        self.expect_op("(")
        lo = self.bound()
        self.expect_op(",")
        hi = self.bound()
        self.expect_op(")")
        if not lo < hi:
            raise IndicatorBoundsError(f"indicator bounds ({lo}, {hi}) need lo < hi", ind_pos)
        return Ind(lo, hi)

    def bound(self) -> float:
        sign = 1.0
        kind, text, pos = self.advance()
        if kind == "op" and text == "-":
            sign = -1.0
            kind, text, pos = self.advance()
        if kind == "number":
            return sign * float(text)
        if kind == "name" and text == "inf":
            return sign * math.inf
        raise ExprSyntaxError(f"found {text or 'end of input'!r}", pos, expected="a number or 'inf'")


def parse(source: str) -> ExprAst:
    """Parse an expression, raising `ExprSyntaxError` with a byte offset."""
    return _Parser(source).parse()


# Evaluation compiles the tree once per (ast, side) into nested closures and
# caches the result; `evaluate` goes through the same compiled path so both
# entry points perform bit-identical arithmetic.

_MAX_SEQ_POW = 1024


def _int_pow(base: float, k: int) -> float:
    # Sequential multiplication keeps rounding deterministic across
    # evaluation orders, unlike pow()'s platform-dependent path.
    if k == 0:
        return 1.0
    r = base
    for _ in range(abs(k) - 1):
        r = r * base
    if k < 0:
        if r == 0.0:
            raise DivisionByZero(f"0.0 raised to negative power {k}")
        return 1.0 / r
    return r


def _real_pow(base: float, e: float) -> float:
    if math.isfinite(e) and e == math.floor(e):
        if abs(e) <= _MAX_SEQ_POW:
            return _int_pow(base, int(e))
        # Exponents this large always overflow or underflow; take pow on the
        # magnitude and restore the odd-exponent sign.
        try:
            mag = math.pow(abs(base), e)
        except OverflowError:
            mag = math.inf
        return -mag if base < 0.0 and int(e) % 2 else mag
    if base < 0.0 and math.isfinite(e):
        raise DomainError(f"non-integer power {e} of negative base {base}")
    try:
        # Non-finite bases or exponents follow IEEE pow conventions here.
        return math.pow(base, e)
    except OverflowError:
        return math.inf
    except ValueError as exc:
        raise DomainError(str(exc)) from exc


def _literal_exponent(node: ExprAst) -> float | None:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg) and isinstance(node.operand, Const):
        return -node.operand.value
    return None


def _compile(node: ExprAst, side: Side) -> Callable[[float], float]:
    if isinstance(node, Const):
        v = node.value
        return lambda x: v
    if isinstance(node, Var):
        return lambda x: x
    if isinstance(node, Neg):
        f = _compile(node.operand, side)
        return lambda x: -f(x)
    if isinstance(node, Ind):
        lo, hi = node.lo, node.hi
        if side is Side.EXACT:
            return lambda x: 1.0 if lo < x < hi else 0.0
        boundary_in = 1.0 if side is Side.RIGHT else 0.0

        def ind_sided(x: float) -> float:
            if x == lo:
                return boundary_in
            if x == hi:
                return 1.0 - boundary_in
            return 1.0 if lo < x < hi else 0.0

        return ind_sided
    if isinstance(node, Func):
        f = _compile(node.arg, side)
        name = node.name
        if name == "abs":
            return lambda x: abs(f(x))
        if name == "sin":

            def fsin(x: float) -> float:
                v = f(x)
                # math.sin raises on infinite arguments; propagate NaN instead,
                # matching IEEE semantics for overflowed intermediates.
                return math.sin(v) if math.isfinite(v) else v * 0.0

            return fsin
        if name == "cos":

            def fcos(x: float) -> float:
                v = f(x)
                return math.cos(v) if math.isfinite(v) else v * 0.0

            return fcos
        if name == "exp":

            def fexp(x: float) -> float:
                try:
                    return math.exp(f(x))
                except OverflowError:
                    return math.inf

            return fexp
        if name == "sqrt":

            def fsqrt(x: float) -> float:
                v = f(x)
                if v < 0.0:
                    raise DomainError(f"sqrt of negative value {v}")
                return math.sqrt(v)

            return fsqrt
        if name == "sign":
            if side is Side.EXACT:
                return lambda x: 0.0 if f(x) == 0.0 else math.copysign(1.0, f(x))
            at_zero = 1.0 if side is Side.RIGHT else -1.0

            def fsign(x: float) -> float:
                v = f(x)
                return at_zero if v == 0.0 else math.copysign(1.0, v)

            return fsign
        raise ValueError(f"unsupported function {name!r}")
    if isinstance(node, BinOp):
        lf = _compile(node.left, side)
        op = node.op
        if op == "^":
            e = _literal_exponent(node.right)
            if e is not None and e == math.floor(e) and abs(e) <= _MAX_SEQ_POW:
                k = int(e)
                return lambda x: _int_pow(lf(x), k)
            rf = _compile(node.right, side)
            return lambda x: _real_pow(lf(x), rf(x))
        rf = _compile(node.right, side)
        if op == "+":
            return lambda x: lf(x) + rf(x)
        if op == "-":
            return lambda x: lf(x) - rf(x)
        if op == "*":
            return lambda x: lf(x) * rf(x)
        if op == "/":

            def fdiv(x: float) -> float:
                d = rf(x)
                if d == 0.0:
                    raise DivisionByZero(f"division by zero at x={x}")
                return lf(x) / d

            return fdiv
    raise TypeError(f"not an expression node: {node!r}")


@lru_cache(maxsize=512)
def compile_fn(ast: ExprAst, side: Side = Side.EXACT) -> Callable[[float], float]:
    """Compile an AST into a plain ``float -> float`` callable."""
    return _compile(ast, side)


def evaluate(ast: ExprAst, x: float, side: Side = Side.EXACT) -> float:
    """Evaluate at a finite point, resolving boundary indicators per `side`."""
    return compile_fn(ast, side)(x)


def extract_breakpoints(ast: ExprAst) -> list[float]:
    """Sorted, deduplicated finite boundary values of indicator/sign nodes.

    This is a superset of the true discontinuity points: a listed point where
    the expression happens to be continuous is harmless downstream.
    """
    points: set[float] = set()

    def walk(node: ExprAst) -> None:
        if isinstance(node, Ind):
            for b in (node.lo, node.hi):
                if math.isfinite(b):
                    points.add(b)
        elif isinstance(node, Func):
            if node.name == "sign":
                points.add(0.0)
            walk(node.arg)
        elif isinstance(node, Neg):
            walk(node.operand)
        elif isinstance(node, BinOp):
            walk(node.left)
            walk(node.right)

    walk(ast)
    return sorted(points)


_LEVEL_ADD = 1
_LEVEL_MUL = 2
_LEVEL_NEG = 3
_LEVEL_POW = 4
_LEVEL_ATOM = 5


def _level(node: ExprAst) -> int:
    if isinstance(node, BinOp):
        return {"+": _LEVEL_ADD, "-": _LEVEL_ADD, "*": _LEVEL_MUL, "/": _LEVEL_MUL, "^": _LEVEL_POW}[node.op]
    if isinstance(node, Neg):
        return _LEVEL_NEG
    return _LEVEL_ATOM


def _fmt_bound(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(v)


def format_expr(node: ExprAst) -> str:
    """Render an AST to source that reparses to a structurally equal tree."""
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Ind):
        return f"ind({_fmt_bound(node.lo)},{_fmt_bound(node.hi)})"
    if isinstance(node, Func):
        return f"{node.name}({format_expr(node.arg)})"
    if isinstance(node, Neg):
        inner = format_expr(node.operand)
        if _level(node.operand) < _LEVEL_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        lv = _level(node)
        ls = format_expr(node.left)
        rs = format_expr(node.right)
        if node.op == "^":
            # Left operand of ^ must be an atom; right must be a unary.
            if _level(node.left) < _LEVEL_ATOM:
                ls = f"({ls})"
            if _level(node.right) < _LEVEL_NEG:
                rs = f"({rs})"
        else:
            if _level(node.left) < lv:
                ls = f"({ls})"
            if _level(node.right) <= lv:
                rs = f"({rs})"
        return f"{ls} {node.op} {rs}"
    raise TypeError(f"not an expression node: {node!r}")
