"""Arithmetic expression language: parsing, printing, evaluation, symbolic derivatives.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = atom , [ "^" , unary ] ;
    atom    = number | variable | function , "(" , expr , ")" | "(" , expr , ")" ;
    function = "sin" | "cos" | "exp" | "ln" | "sqrt" ;

``^`` binds tighter than unary minus (``-x^2`` is ``-(x^2)``) and is right
associative; the other binary operators are left associative.  A minus sign
directly in front of a number literal (and not followed by ``^``) is folded
into a negative constant.
"""
from __future__ import annotations

import math
import re
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary",
    "ExprSyntaxError", "UnknownIdentifierError", "UnboundVariableError", "ExprDomainError",
    "FUNCTIONS", "parse", "evaluate", "differentiate", "substitute", "variables",
    "compile_exprs", "default_namespace", "ZERO", "ONE",
]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")
BINARY_OPS = ("+", "-", "*", "/", "^")

# printing precedence
_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5
_BINARY_PREC = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}

_DEFAULT_NAME = re.compile(r"(x|mu)[1-9][0-9]*|t|e")


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(repr(e) for e in self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name}", offset)


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable {name}")


class ExprDomainError(ExprError, ArithmeticError):
    def __init__(self, reason: str, subexpr: "Expr"):
        self.reason = reason
        self.subexpr = subexpr
        super().__init__(f"{reason} in {subexpr}")


class Expr:
    """Immutable expression node with structural equality and cached hash."""

    __slots__ = ("_hash",)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self._key() == other._key()

    def __hash__(self):
        return self._hash

    def __str__(self):
        return _format(self)

    def _key(self):
        raise NotImplementedError

    def _init_hash(self):
        object.__setattr__(self, "_hash", hash((type(self).__name__,) + self._key()))

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    # operator sugar used by the symbolic code; no simplification beyond trivial identities
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __neg__(self):
        return neg(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant {value!r}")
        object.__setattr__(self, "value", value)
        self._init_hash()

    def _key(self):
        return (self.value,)

    def __repr__(self):
        return f"Const({self.value!r})"


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._init_hash()

    def _key(self):
        return (self.name,)

    def __repr__(self):
        return f"Var({self.name!r})"


class Unary(Expr):
    """``op`` is ``"neg"`` or one of FUNCTIONS."""

    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        if op != "neg" and op not in FUNCTIONS:
            raise ValueError(f"unknown unary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "arg", arg)
        self._init_hash()

    def _key(self):
        return (self.op, self.arg)

    def __repr__(self):
        return f"Unary({self.op!r}, {self.arg!r})"


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        self._init_hash()

    def _key(self):
        return (self.op, self.left, self.right)

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


ZERO = Const(0.0)
ONE = Const(1.0)


def _coerce(value) -> Expr:
    return value if isinstance(value, Expr) else Const(value)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# Smart constructors. They only drop exact identities (0+x, 1*x, 0*x, ...) so
# derivative trees stay small; they never reorder floating point operations.

def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    return Binary("^", a, b)


def call(fn: str, a: Expr) -> Expr:
    return Unary(fn, a)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            # either trailing whitespace or an illegal character
            rest = source[pos:]
            stripped = rest.lstrip()
            if not stripped:
                break
            bad = pos + (len(rest) - len(stripped))
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", _byte_offset(source, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str, namespace: Callable[[str], bool]):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.namespace = namespace

    def peek(self, k: int = 0):
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, expected):
        kind, text, pos = self.peek()
        what = "end of input" if kind == "end" else f"token {text!r}"
        raise ExprSyntaxError(f"unexpected {what}", _byte_offset(self.source, pos), expected)

    def expect(self, op: str):
        kind, text, _ = self.peek()
        if kind == "op" and text == op:
            return self.advance()
        self.error([op])

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek()[0] != "end":
            self.error(["+", "-", "*", "/", "^", "end of input"])
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            nxt, after = self.peek(), self.peek(1)
            if nxt[0] == "num" and not (after[0] == "op" and after[1] == "^"):
                self.advance()
                return Const(-float(nxt[1]))
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            value = float(text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"number literal {text!r} out of range", _byte_offset(self.source, pos))
            return Const(value)
        if kind == "name":
            self.advance()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if not self.namespace(text):
                raise UnknownIdentifierError(text, _byte_offset(self.source, pos))
            return Var(text)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.error(["number", "identifier", "(", "-"])


def default_namespace(name: str) -> bool:
    """Accepts x1.., mu1.., t and e."""
    return _DEFAULT_NAME.fullmatch(name) is not None


def parse(source: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse ``source``; identifiers must belong to ``variables`` (default: x<k>, mu<k>, t, e)."""
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0, ["number", "identifier", "(", "-"])
    if variables is None:
        namespace = default_namespace
    else:
        allowed = frozenset(variables)
        namespace = allowed.__contains__
    return _Parser(source, namespace).parse()


# ---------------------------------------------------------------- printing

def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _BINARY_PREC[e.op]
    if isinstance(e, Unary):
        return _PREC_UNARY if e.op == "neg" else _PREC_ATOM
    if isinstance(e, Const) and math.copysign(1.0, e.value) < 0:
        return _PREC_UNARY
    return _PREC_ATOM


def _wrap(e: Expr, needs: bool) -> str:
    s = _format(e)
    return f"({s})" if needs else s


def _format(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            # "-(2.0)" keeps Neg(Const) distinct from a folded negative literal
            paren = _prec(e.arg) < _PREC_UNARY or isinstance(e.arg, Const)
            return "-" + _wrap(e.arg, paren)
        return f"{e.op}({_format(e.arg)})"
    p = _BINARY_PREC[e.op]
    if e.op == "^":
        left = _wrap(e.left, _prec(e.left) <= _PREC_POW)
        right = _wrap(e.right, _prec(e.right) < _PREC_UNARY)
        return f"{left}^{right}"
    left = _wrap(e.left, _prec(e.left) < p)
    right = _wrap(e.right, _prec(e.right) <= p)
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------- evaluation

def _pow(a: float, b: float) -> float:
    return math.pow(a, b)


_UNARY_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
}


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate in double precision, left operand first."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        a = evaluate(e.arg, bindings)
        if e.op == "neg":
            return -a
        if e.op == "sqrt" and a < 0:
            raise ExprDomainError("sqrt of negative value", e)
        if e.op == "ln" and a <= 0:
            raise ExprDomainError("ln of non-positive value", e)
        try:
            return _UNARY_FN[e.op](a)
        except (ValueError, OverflowError) as exc:
            raise ExprDomainError(str(exc), e) from None
    a = evaluate(e.left, bindings)
    b = evaluate(e.right, bindings)
    op = e.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise ExprDomainError("division by zero", e)
        return a / b
    try:
        return _pow(a, b)
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        raise ExprDomainError(f"invalid power ({exc})", e) from None


def variables(e: Expr) -> frozenset[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.extend((node.left, node.right))
    return frozenset(out)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (used for compositions such as H∘γ)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        arg = substitute(e.arg, mapping)
        return e if arg is e.arg else Unary(e.op, arg)
    left, right = substitute(e.left, mapping), substitute(e.right, mapping)
    if left is e.left and right is e.right:
        return e
    return Binary(e.op, left, right)


# ---------------------------------------------------------------- differentiation

def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``."""
    cache: dict[int, Expr] = {}

    def d(node: Expr) -> Expr:
        key = id(node)
        if key in cache:
            return cache[key]
        out = _d(node)
        cache[key] = out
        return out

    def _d(node: Expr) -> Expr:
        if isinstance(node, Const):
            return ZERO
        if isinstance(node, Var):
            return ONE if node.name == var else ZERO
        if isinstance(node, Unary):
            du = d(node.arg)
            if _is_const(du, 0.0):
                return ZERO
            u = node.arg
            op = node.op
            if op == "neg":
                return neg(du)
            if op == "sin":
                return mul(du, call("cos", u))
            if op == "cos":
                return neg(mul(du, call("sin", u)))
            if op == "exp":
                return mul(du, node)
            if op == "ln":
                return div(du, u)
            # sqrt
            return div(du, mul(Const(2.0), node))
        u, v = node.left, node.right
        du, dv = d(u), d(v)
        op = node.op
        if op == "+":
            return add(du, dv)
        if op == "-":
            return sub(du, dv)
        if op == "*":
            return add(mul(du, v), mul(u, dv))
        if op == "/":
            if _is_const(dv, 0.0):
                return div(du, v)
            return div(sub(mul(du, v), mul(u, dv)), power(v, Const(2.0)))
        # power
        if _is_const(du, 0.0) and _is_const(dv, 0.0):
            return ZERO
        if _is_const(dv, 0.0):
            if isinstance(v, Const):
                exponent = Const(v.value - 1.0)
            else:
                exponent = sub(v, ONE)
            return mul(mul(v, power(u, exponent)), du)
        # general case u^v (v' ln u + v u'/u)
        inner = add(mul(dv, call("ln", u)), div(mul(v, du), u))
        return mul(node, inner)

    return d(e)


# ---------------------------------------------------------------- compiled evaluation

def _emit(e: Expr, index: Mapping[str, int], consts: list) -> str:
    if isinstance(e, Const):
        consts.append(e.value)
        return f"_c[{len(consts) - 1}]"
    if isinstance(e, Var):
        return f"_z[{index[e.name]}]"
    if isinstance(e, Unary):
        a = _emit(e.arg, index, consts)
        if e.op == "neg":
            return f"(-{a})"
        return f"_f_{e.op}({a})"
    a = _emit(e.left, index, consts)
    b = _emit(e.right, index, consts)
    if e.op == "^":
        return f"_pow({a}, {b})"
    return f"({a} {e.op} {b})"


def compile_exprs(exprs: Sequence[Expr], names: Sequence[str]) -> Callable[[Sequence[float]], list]:
    """Compile expressions into one function of a coordinate vector ordered as ``names``.

    The fast path shares operation order with :func:`evaluate`, so results are
    bit-identical; on any arithmetic failure the slow evaluator is rerun to
    produce a precise :class:`ExprDomainError`.
    """
    names = list(names)
    index = {n: i for i, n in enumerate(names)}
    for ex in exprs:
        missing = variables(ex) - index.keys()
        if missing:
            raise UnboundVariableError(sorted(missing)[0])
    exprs = list(exprs)

    def slow(z):
        bindings = dict(zip(names, (float(v) for v in z)))
        return [evaluate(ex, bindings) for ex in exprs]

    consts: list = []
    try:
        body = ", ".join(_emit(ex, index, consts) for ex in exprs)
        env = {"_c": consts, "_pow": math.pow, **{f"_f_{k}": v for k, v in _UNARY_FN.items()}}
        fast = eval(compile(f"lambda _z: [{body}]", "<expr>", "eval"), env)
    except (RecursionError, MemoryError, SyntaxError):
        return slow

    def run(z):
        if hasattr(z, "tolist"):
            z = z.tolist()
        try:
            return fast(z)
        except (ArithmeticError, ValueError):
            return slow(z)

    return run
