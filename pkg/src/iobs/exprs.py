"""A tiny scalar expression language for time-varying matrix entries.

Grammar (standard precedence, left associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | atom
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

The only variable is the time symbol (``t`` for continuous time, ``k``
for discrete time). ``pi`` is the only named constant.
"""

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import IobsError

__all__ = [
    "ExprSyntaxError", "ExprEvalError", "DivisionByZero", "NonFiniteResult",
    "Expr", "parse", "evaluate", "to_source", "ExprMatrix", "constant_or_expr",
]


class ExprSyntaxError(IobsError):
    """Parse failure; ``offset`` is the byte offset into the UTF-8 source."""

    def __init__(self, message, offset, src=""):
        self.message = message
        self.offset = offset
        self.src = src
        super().__init__(f"{message} at byte {offset}")


class ExprEvalError(IobsError):
    pass


class DivisionByZero(ExprEvalError):
    pass


class NonFiniteResult(ExprEvalError):
    pass


_FUNCTIONS = {
    "sin": (1, math.sin),
    "cos": (1, math.cos),
    "exp": (1, math.exp),
    "abs": (1, abs),
    "min": (None, min),
    "max": (None, max),
}
_CONSTANTS = {"pi": math.pi}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/(),]))"
)


# AST nodes ---------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Expr:
    """A parsed expression together with its time symbol."""

    root: object
    time_symbol: str = "t"
    source: str = ""

    def __call__(self, time):
        return evaluate(self, time)

    @cached_property
    def compiled(self):
        return _compile(self.root)

    @property
    def is_constant(self):
        return not _uses_time(self.root)


def _uses_time(node):
    if isinstance(node, Var):
        return True
    if isinstance(node, Neg):
        return _uses_time(node.operand)
    if isinstance(node, BinOp):
        return _uses_time(node.left) or _uses_time(node.right)
    if isinstance(node, Call):
        return any(_uses_time(a) for a in node.args)
    return False


# Parsing -----------------------------------------------------------------

def _tokenize(src):
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            start = pos
            while start < n and src[start].isspace():
                start += 1
            raise ExprSyntaxError(f"unexpected character {src[start]!r}", _byte_offset(src, start), src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


def _byte_offset(src, index):
    return len(src[:index].encode("utf-8"))


class _Parser:
    def __init__(self, src, time_symbol):
        self.src = src
        self.time_symbol = time_symbol
        self.tokens = _tokenize(src)
        self.i = 0

    def error(self, message, index=None):
        if index is None:
            index = self.peek()[2]
        return ExprSyntaxError(message, _byte_offset(self.src, index), self.src)

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            found = "end of input" if kind == "end" else repr(text)
            raise self.error(f"expected {op!r}, found {found}")
        return self.advance()

    def parse(self):
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            if text == ")":
                raise self.error("unbalanced ')'")
            raise self.error(f"unexpected token {text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.advance()
            return self.unary()
        return self.atom()

    def atom(self):
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                return self.call(text, pos)
            if text == self.time_symbol:
                return Var(text)
            if text in _CONSTANTS:
                return Num(_CONSTANTS[text])
            if text in ("t", "k"):
                raise self.error(
                    f"time symbol {text!r} used where {self.time_symbol!r} is expected", pos
                )
            if text in _FUNCTIONS:
                raise self.error(f"function {text!r} needs arguments", pos)
            raise self.error(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            node = self.expr()
            if self.peek()[0] == "end":
                raise self.error("unbalanced '(': missing ')'", pos)
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input", pos)
        raise self.error(f"unexpected token {text!r}", pos)

    def call(self, name, pos):
        if name not in _FUNCTIONS:
            raise self.error(f"unknown function {name!r}", pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.advance()
            args.append(self.expr())
        if self.peek()[0] == "end":
            raise self.error("unbalanced '(': missing ')'")
        self.expect(")")
        arity = _FUNCTIONS[name][0]
        if arity is not None and len(args) != arity:
            raise self.error(f"{name}() takes {arity} argument(s), got {len(args)}", pos)
        if arity is None and len(args) < 2:
            raise self.error(f"{name}() needs at least 2 arguments", pos)
        return Call(name, tuple(args))


def parse(src, time_symbol="t"):
    """Parse ``src`` into an :class:`Expr`.

    Raises :class:`ExprSyntaxError` with a byte offset on malformed input,
    unknown identifiers, or use of the other time symbol.
    """
    if not isinstance(src, str):
        raise TypeError(f"expression source must be str, got {type(src).__name__}")
    root = _Parser(src, time_symbol).parse()
    return Expr(root, time_symbol, src)


# Evaluation --------------------------------------------------------------

def _compile(node):
    """Turn an AST into a closure of time, so repeated evaluation skips the tree walk."""
    if isinstance(node, Num):
        value = node.value
        return lambda t: value
    if isinstance(node, Var):
        return lambda t: t
    if isinstance(node, Neg):
        f = _compile(node.operand)
        return lambda t: -f(t)
    if isinstance(node, BinOp):
        f, g = _compile(node.left), _compile(node.right)
        if node.op == "+":
            return lambda t: f(t) + g(t)
        if node.op == "-":
            return lambda t: f(t) - g(t)
        if node.op == "*":
            return lambda t: f(t) * g(t)

        def divide(t):
            a, b = f(t), g(t)
            if b == 0.0:
                raise DivisionByZero("division by zero")
            return a / b

        return divide
    fn = _FUNCTIONS[node.name][1]
    args = [_compile(a) for a in node.args]
    name = node.name

    def call(t):
        try:
            return float(fn(*[a(t) for a in args]))
        except (OverflowError, ValueError) as exc:
            raise NonFiniteResult(f"{name}() has no finite value here") from exc

    return call


def evaluate(e, time):
    """Evaluate ``e`` at the given time as an IEEE double."""
    fn = e.compiled if isinstance(e, Expr) else _compile(e)
    value = fn(float(time))
    if not math.isfinite(value):
        raise NonFiniteResult(f"expression evaluated to {value!r}")
    return value


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(e):
    """Render an expression back to source text that reparses to the same value."""
    root = e.root if isinstance(e, Expr) else e
    return _render(root)


def _render(node, parent=0, right=False):
    if isinstance(node, Num):
        text = repr(node.value)
        return f"({text})" if node.value < 0 or text in ("inf", "nan") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"-{_render(node.operand, 3)}"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_render(a) for a in node.args)})"
    prec = _PREC[node.op]
    text = f"{_render(node.left, prec)} {node.op} {_render(node.right, prec, True)}"
    if prec < parent or (right and prec == parent):
        return f"({text})"
    return text


# Matrices of expressions -------------------------------------------------

def constant_or_expr(value, time_symbol="t"):
    """Return a float for numeric entries and an :class:`Expr` for strings."""
    if isinstance(value, str):
        e = parse(value, time_symbol)
        return evaluate(e, 0.0) if e.is_constant else e
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"matrix entry must be a number or expression string, got {value!r}")
    return float(value)


class ExprMatrix:
    """Matrix-valued function of time whose entries are numbers or expressions."""

    def __init__(self, entries, time_symbol="t"):
        rows = [[constant_or_expr(v, time_symbol) for v in row] for row in entries]
        if rows and any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("ragged matrix")
        self.time_symbol = time_symbol
        self.shape = (len(rows), len(rows[0]) if rows else 0)
        self._base = np.zeros(self.shape)
        self._varying = []
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if isinstance(v, Expr):
                    self._varying.append((i, j, v))
                else:
                    self._base[i, j] = v

    @classmethod
    def constant(cls, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M.tolist())

    @property
    def is_constant(self):
        return not self._varying

    def __call__(self, time):
        M = self._base.copy()
        for i, j, e in self._varying:
            M[i, j] = evaluate(e, time)
        return M
