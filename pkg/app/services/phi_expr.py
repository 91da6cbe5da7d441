"""
φ-expression DSL: recursive descent parser, vectorized evaluator and exact
rule-based differentiation for the φ of an (α,β)-metric F = α φ(β/α)

Grammar (whitespace insignificant):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' exponent)?
    exponent := integer | '-' integer | '(' ['-'] integer '/' integer ')'
    base   := number | 's' | '(' expr ')' | func '(' expr ')'
    func   := 'sqrt' | 'exp' | 'log'
"""
import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple, Union

import numpy as np

from app.core.exceptions import PhiDomainError, PhiParseError

logger = logging.getLogger(__name__)

FUNCTIONS = ("sqrt", "exp", "log")

ArrayLike = Union[float, np.ndarray]


# Expression tree

class Node:
    def values(self, s: np.ndarray) -> np.ndarray:
        """Evaluate on an array; undefined points come back as NaN"""
        raise NotImplementedError

    def diff(self) -> "Node":
        raise NotImplementedError

    def render(self) -> str:
        raise NotImplementedError


def _clean(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.where(np.isfinite(v), v, np.nan)


@dataclass(frozen=True)
class Const(Node):
    value: float

    def values(self, s):
        return np.full(np.shape(s), self.value, dtype=float)

    def diff(self):
        return ZERO

    def render(self):
        v = self.value
        return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(v)


@dataclass(frozen=True)
class Var(Node):
    def values(self, s):
        return np.asarray(s, dtype=float).copy()

    def diff(self):
        return ONE

    def render(self):
        return "s"


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node

    def values(self, s):
        return _clean(self.left.values(s) + self.right.values(s))

    def diff(self):
        return add(self.left.diff(), self.right.diff())

    def render(self):
        return f"({self.left.render()} + {self.right.render()})"


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node

    def values(self, s):
        return _clean(self.left.values(s) - self.right.values(s))

    def diff(self):
        return sub(self.left.diff(), self.right.diff())

    def render(self):
        return f"({self.left.render()} - {self.right.render()})"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def values(self, s):
        return -self.arg.values(s)

    def diff(self):
        return neg(self.arg.diff())

    def render(self):
        return f"(-{self.arg.render()})"


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node

    def values(self, s):
        return _clean(self.left.values(s) * self.right.values(s))

    def diff(self):
        return add(mul(self.left.diff(), self.right),
                   mul(self.left, self.right.diff()))

    def render(self):
        return f"({self.left.render()} * {self.right.render()})"


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node

    def values(self, s):
        den = self.right.values(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.left.values(s) / np.where(den == 0.0, np.nan, den)
        return _clean(out)

    def diff(self):
        # (u/v)' = u'/v - u v' / v^2
        return sub(div(self.left.diff(), self.right),
                   div(mul(self.left, self.right.diff()), power(self.right, Fraction(2))))

    def render(self):
        return f"({self.left.render()} / {self.right.render()})"


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: Fraction

    def values(self, s):
        u = self.base.values(s)
        r = self.exponent
        with np.errstate(all="ignore"):
            if r.denominator == 1:
                n = r.numerator
                if n < 0:
                    u = np.where(u == 0.0, np.nan, u)
                out = u ** float(n)
            elif r.denominator % 2 == 1:
                # odd root: real for negative bases
                if r < 0:
                    u = np.where(u == 0.0, np.nan, u)
                out = np.sign(u) ** r.numerator * np.abs(u) ** float(r)
            else:
                u = np.where(u < 0.0, np.nan, u)
                if r < 0:
                    u = np.where(u == 0.0, np.nan, u)
                out = u ** float(r)
        return _clean(out)

    def diff(self):
        r = self.exponent
        return mul(mul(Const(float(r)), power(self.base, r - 1)), self.base.diff())

    def render(self):
        r = self.exponent
        exp_text = str(r.numerator) if r.denominator == 1 else f"({r.numerator}/{r.denominator})"
        return f"{self.base.render()}^{exp_text}"


@dataclass(frozen=True)
class Func(Node):
    name: str
    arg: Node

    def values(self, s):
        u = self.arg.values(s)
        with np.errstate(all="ignore"):
            if self.name == "sqrt":
                out = np.sqrt(np.where(u < 0.0, np.nan, u))
            elif self.name == "exp":
                out = np.exp(u)
            else:
                out = np.log(np.where(u <= 0.0, np.nan, u))
        return _clean(out)

    def diff(self):
        du = self.arg.diff()
        if self.name == "sqrt":
            return div(du, mul(Const(2.0), self))
        if self.name == "exp":
            return mul(self, du)
        return div(du, self.arg)

    def render(self):
        return f"{self.name}({self.arg.render()})"


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(node: Node, value: Optional[float] = None) -> bool:
    return isinstance(node, Const) and (value is None or node.value == value)


def add(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Add(a, b)


def sub(a: Node, b: Node) -> Node:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Sub(a, b)


def neg(a: Node) -> Node:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Mul(a, b)


def div(a: Node, b: Node) -> Node:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    return Div(a, b)


def power(a: Node, r: Fraction) -> Node:
    if r == 0:
        return ONE
    if r == 1:
        return a
    if _is_const(a) and r.denominator == 1 and (r > 0 or a.value != 0.0):
        return Const(a.value ** int(r))
    return Pow(a, Fraction(r))


@dataclass(frozen=True)
class PhiExpr:
    """Parsed φ with its source text"""
    root: Node
    text: str

    def values(self, s: ArrayLike) -> np.ndarray:
        return self.root.values(np.asarray(s, dtype=float))

    def __call__(self, s: float) -> float:
        v = float(self.values(np.asarray(s, dtype=float)))
        if not np.isfinite(v):
            raise PhiDomainError(f"phi = {self.text} is undefined at s = {s!r}", s=float(s))
        return v

    def derivative(self) -> "PhiExpr":
        d = self.root.diff()
        return PhiExpr(root=d, text=d.render())


# Tokenizer and parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_]+)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    raw = text.encode("utf-8")
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise PhiParseError(f"unexpected character {text[pos]!r}",
                                offset=len(text[:pos].encode("utf-8")),
                                expected=["number", "s", "(", "sqrt", "exp", "log"])
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(Token(kind=kind, text=match.group(),
                                offset=len(text[:pos].encode("utf-8"))))
        pos = match.end()
    tokens.append(Token(kind="eof", text="", offset=len(raw)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _fail(self, expected: List[str]):
        tok = self.current
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise PhiParseError(
            f"unexpected {found} at offset {tok.offset}, expected one of "
            f"{', '.join(sorted(expected))}",
            offset=tok.offset, expected=expected)

    def _expect(self, text: str):
        if self.current.text != text or self.current.kind == "eof":
            self._fail([text])
        self._advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.current.kind != "eof":
            self._fail(["+", "-", "*", "/", "^", "end of input"])
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self._advance().text
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self._advance().text
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Node:
        if self.current.kind == "op" and self.current.text == "-":
            self._advance()
            return Neg(self.factor())
        node = self.base()
        if self.current.kind == "op" and self.current.text == "^":
            self._advance()
            node = Pow(node, self.exponent())
        return node

    def _integer(self) -> int:
        sign = 1
        if self.current.kind == "op" and self.current.text == "-":
            self._advance()
            sign = -1
        tok = self.current
        if tok.kind != "number" or not tok.text.isdigit():
            self._fail(["integer"])
        self._advance()
        return sign * int(tok.text)

    def exponent(self) -> Fraction:
        if self.current.kind == "op" and self.current.text == "(":
            self._advance()
            num = self._integer()
            self._expect("/")
            den = self._integer()
            if den == 0:
                self._fail(["nonzero integer"])
            self._expect(")")
            return Fraction(num, den)
        return Fraction(self._integer())

    def base(self) -> Node:
        tok = self.current
        if tok.kind == "number":
            self._advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            if tok.text == "s":
                self._advance()
                return Var()
            if tok.text in FUNCTIONS:
                self._advance()
                self._expect("(")
                arg = self.expr()
                self._expect(")")
                return Func(tok.text, arg)
            self._fail(["number", "s", "(", *FUNCTIONS])
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        self._fail(["number", "s", "(", *FUNCTIONS])


def phi_parse(text: str) -> PhiExpr:
    """Parse a φ expression; raises PhiParseError with byte offset and expected tokens"""
    root = _Parser(text).parse()
    logger.debug("parsed phi %r -> %s", text, root.render())
    return PhiExpr(root=root, text=text.strip())


def phi_derivatives(p: PhiExpr) -> Tuple[PhiExpr, PhiExpr]:
    """Exact symbolic φ′ and φ″"""
    d1 = p.derivative()
    return d1, d1.derivative()


@dataclass(frozen=True)
class RegularityReport:
    regular: bool
    b: float
    singular_at: Tuple[float, ...]
    undefined_at: Tuple[float, ...]
    min_condition: Optional[float]

    def to_dict(self, limit: int = 20) -> dict:
        return {
            "regular": self.regular,
            "b": self.b,
            "singular_count": len(self.singular_at),
            "undefined_count": len(self.undefined_at),
            "singular_at": list(self.singular_at[:limit]),
            "undefined_at": list(self.undefined_at[:limit]),
            "min_condition": self.min_condition,
        }


def regularity_check(p: PhiExpr, b: float, points: int = 2001) -> RegularityReport:
    """
    Sample φ(s) - s φ′(s) + (b² - s²) φ″(s) on a uniform grid over [-b, b]; any
    nonpositive or undefined point makes the metric singular.
    """
    if not b > 0:
        raise PhiDomainError(f"regularity check needs b > 0, got {b}", b=b)
    d1, d2 = phi_derivatives(p)
    s = np.linspace(-b, b, points)
    with np.errstate(all="ignore"):
        cond = p.values(s) - s * d1.values(s) + (b * b - s * s) * d2.values(s)
    undefined = ~np.isfinite(cond)
    singular = np.isfinite(cond) & (cond <= 0.0)
    finite = cond[np.isfinite(cond)]
    report = RegularityReport(
        regular=not (undefined.any() or singular.any()),
        b=float(b),
        singular_at=tuple(float(x) for x in s[singular]),
        undefined_at=tuple(float(x) for x in s[undefined]),
        min_condition=float(finite.min()) if finite.size else None,
    )
    if not report.regular:
        logger.info("phi = %s is singular for b = %s: %d nonpositive, %d undefined grid points",
                    p.text, b, len(report.singular_at), len(report.undefined_at))
    return report


RIEMANNIAN_PHI = phi_parse("1")
RANDERS_PHI = phi_parse("1+s")
KROPINA_PHI = phi_parse("1/s")
