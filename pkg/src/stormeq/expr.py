"""Expression trees for dDst/dt rate models.

A tree is built from constant and variable leaves plus unary/binary operator
nodes over the feature set {Dst, Ey, Pdyn, PB}. Trees are immutable.

Evaluation is *protected*: log(x <= 0), sqrt(x < 0) and x/0 produce NaN
instead of raising, and NaN propagates through every operator, max and min
included. sign(0) = 0. Overflow (e.g. exp of a huge argument) yields +inf,
which the loss layer treats the same way as NaN.

Text form: infix with function-call syntax for max, min, sqrt, exp, log,
square and sign. Precedence is unary minus > *,/ > +,- and parentheses are
honored; "x^2" is accepted as a synonym for square(x). A minus written
directly before a numeric literal is part of the constant, so "-0.031*Dst"
is a three-node tree with a single signed leaf.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

from .errors import EvalError, ParseError

#: Variable ids and their units: Dst in nT, Ey in mV/m, Pdyn and PB in nPa.
VARIABLES = ("Dst", "Ey", "Pdyn", "PB")

UNARY_OPS = ("exp", "log", "sqrt", "square", "sign", "neg")
BINARY_OPS = ("add", "sub", "mul", "div", "max", "min")

#: The operator vocabulary used by the evolutionary search. `neg` is a
#: representation convenience only (signed constants cover negation of
#: leaves), so it is not part of the default search set.
DEFAULT_OPERATORS = ("add", "sub", "mul", "div", "max", "min",
                     "exp", "log", "sqrt", "square", "sign")


@dataclass(frozen=True, slots=True)
class Const:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError(f"constants must be finite, got {self.value!r}")


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"unknown variable {self.name!r}; expected one of {VARIABLES}")


@dataclass(frozen=True, slots=True)
class Unary:
    op: str
    child: "Expr"

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary operator {self.op!r}")


@dataclass(frozen=True, slots=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary operator {self.op!r}")


Expr = Union[Const, Var, Unary, Binary]

#: Bindings map variable ids to scalar values (same units as VARIABLES).
Bindings = Mapping[str, float]


# ---------------------------------------------------------------------------
# protected scalar semantics

def apply_unary(op: str, x: float) -> float:
    if op == "neg":
        return -x
    if op == "square":
        return x * x
    if op == "sqrt":
        if x < 0.0:
            return math.nan
        return math.sqrt(x)  # sqrt(nan) is nan
    if op == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    if op == "log":
        return math.log(x) if x > 0.0 else math.nan
    if op == "sign":
        if math.isnan(x):
            return math.nan
        return 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)
    raise ValueError(f"unknown unary operator {op!r}")


def apply_binary(op: str, a: float, b: float) -> float:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return math.nan if b == 0.0 else a / b
    if op == "max":
        if math.isnan(a) or math.isnan(b):
            return math.nan
        return a if a >= b else b
    if op == "min":
        if math.isnan(a) or math.isnan(b):
            return math.nan
        return a if a <= b else b
    raise ValueError(f"unknown binary operator {op!r}")


def evaluate(expr: Expr, bindings: Bindings) -> float:
    """Evaluate a tree at one point. Unbound variables raise EvalError;
    domain violations return NaN per the protected convention."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        try:
            return float(bindings[expr.name])
        except KeyError:
            raise EvalError(f"unbound variable {expr.name!r}") from None
    if isinstance(expr, Unary):
        return apply_unary(expr.op, evaluate(expr.child, bindings))
    return apply_binary(expr.op, evaluate(expr.left, bindings), evaluate(expr.right, bindings))


def evaluate_batch(expr: Expr, table) -> "np.ndarray":
    """Evaluate a tree over every row of a table (a DerivedSeries or a
    mapping of variable id to 1-D array). Element i equals
    evaluate(expr, row i). Missing columns used by the tree raise EvalError."""
    from . import program  # local import; program depends on this module

    return program.evaluate_over(expr, table)


# ---------------------------------------------------------------------------
# complexity

@dataclass(frozen=True)
class ComplexityWeights:
    """Per-node-kind weights. Keys of `overrides` are "constant",
    "variable", or an operator name; anything absent costs `default`."""

    default: int = 1
    overrides: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for key, w in list(self.overrides.items()) + [("default", self.default)]:
            if not isinstance(w, int) or w < 1:
                raise ValueError(f"weight for {key!r} must be a positive integer, got {w!r}")

    def weight(self, kind: str) -> int:
        return self.overrides.get(kind, self.default)


UNIT_WEIGHTS = ComplexityWeights()


def complexity(expr: Expr, weights: ComplexityWeights = UNIT_WEIGHTS) -> int:
    """Sum of node weights; with unit weights this is the node count.
    A signed constant such as -0.031 is a single leaf."""
    if isinstance(expr, Const):
        return weights.weight("constant")
    if isinstance(expr, Var):
        return weights.weight("variable")
    if isinstance(expr, Unary):
        return weights.weight(expr.op) + complexity(expr.child, weights)
    return weights.weight(expr.op) + complexity(expr.left, weights) + complexity(expr.right, weights)


def variables(expr: Expr) -> frozenset:
    """Variable ids appearing in the tree."""
    if isinstance(expr, Const):
        return frozenset()
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Unary):
        return variables(expr.child)
    return variables(expr.left) | variables(expr.right)


# ---------------------------------------------------------------------------
# tree navigation (used by the evolutionary operators)

def subtree_paths(expr: Expr) -> list:
    """All node paths, root first. A path is a tuple of child indices."""
    out = [()]  # root
    if isinstance(expr, Unary):
        out.extend((0,) + p for p in subtree_paths(expr.child))
    elif isinstance(expr, Binary):
        out.extend((0,) + p for p in subtree_paths(expr.left))
        out.extend((1,) + p for p in subtree_paths(expr.right))
    return out


def get_subtree(expr: Expr, path: tuple) -> Expr:
    node = expr
    for step in path:
        if isinstance(node, Unary):
            node = node.child
        elif isinstance(node, Binary):
            node = node.left if step == 0 else node.right
        else:
            raise IndexError(f"path {path} leaves the tree")
    return node


def replace_subtree(expr: Expr, path: tuple, new: Expr) -> Expr:
    if not path:
        return new
    step, rest = path[0], path[1:]
    if isinstance(expr, Unary):
        return Unary(expr.op, replace_subtree(expr.child, rest, new))
    if isinstance(expr, Binary):
        if step == 0:
            return Binary(expr.op, replace_subtree(expr.left, rest, new), expr.right)
        return Binary(expr.op, expr.left, replace_subtree(expr.right, rest, new))
    raise IndexError(f"path {path} leaves the tree")


def constant_paths(expr: Expr) -> list:
    """Paths of all Const leaves, in traversal order."""
    return [p for p in subtree_paths(expr) if isinstance(get_subtree(expr, p), Const)]


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_ATOM = 10, 20, 30, 40
_BIN_SYMBOL = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}
_BIN_PREC = {"add": _PREC_ADD, "sub": _PREC_ADD, "mul": _PREC_MUL, "div": _PREC_MUL}


def format_constant(value: float) -> str:
    """Up to 6 significant digits when that re-parses exactly, otherwise the
    shortest exact decimal form."""
    text = format(value, ".6g")
    if float(text) == value:
        return text
    return repr(value)


def _render(expr: Expr) -> tuple:
    """Return (text, precedence)."""
    if isinstance(expr, Const):
        return format_constant(expr.value), _PREC_ATOM
    if isinstance(expr, Var):
        return expr.name, _PREC_ATOM
    if isinstance(expr, Unary):
        if expr.op == "neg":
            # "-x" binds tighter than *,/ so anything looser needs parens;
            # a constant child is parenthesized so the minus is not folded
            # into the literal when re-parsed.
            text, _ = _render(expr.child)
            bare = isinstance(expr.child, Var) or (
                isinstance(expr.child, Unary) and expr.child.op != "neg")
            return ("-" + text if bare else f"-({text})"), _PREC_NEG
        text, _ = _render(expr.child)
        return f"{expr.op}({text})", _PREC_ATOM
    if expr.op in ("max", "min"):
        lt, _ = _render(expr.left)
        rt, _ = _render(expr.right)
        return f"{expr.op}({lt}, {rt})", _PREC_ATOM
    prec = _BIN_PREC[expr.op]
    lt, lp = _render(expr.left)
    rt, rp = _render(expr.right)
    if lp < prec:
        lt = f"({lt})"
    # the right side is parenthesized at equal precedence too, so that the
    # left-associative parse rebuilds the exact same shape
    if rp <= prec or rt.startswith("-"):
        rt = f"({rt})"
    return lt + _BIN_SYMBOL[expr.op] + rt, prec


def print_expr(expr: Expr) -> str:
    """Canonical infix text; parse(print_expr(e)) is structurally identical to e."""
    return _render(expr)[0]


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/^(),])"
    r"|(?P<ws>\s+)"
    r"|(?P<bad>.)"
)

_FUNCTIONS = {"sqrt": 1, "exp": 1, "log": 1, "square": 1, "sign": 1, "max": 2, "min": 2}


def _tokenize(text: str) -> list:
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", m.start())
        tokens.append((kind, m.group(), m.start()))
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_sym(self, sym: str):
        kind, text, at = self.peek()
        if kind != "sym" or text != sym:
            raise ParseError(f"expected {sym!r}, found {text or 'end of input'!r}", at)
        return self.advance()

    def parse(self) -> Expr:
        node = self.expression()
        kind, text, at = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", at)
        return node

    def expression(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "sym" and text in "+-":
                self.advance()
                rhs = self.term()
                node = Binary("add" if text == "+" else "sub", node, rhs)
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "sym" and text in "*/":
                self.advance()
                rhs = self.factor()
                node = Binary("mul" if text == "*" else "div", node, rhs)
            else:
                return node

    def factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "sym" and text == "-":
            self.advance()
            kind, _, _ = self.peek()
            if kind == "num":
                # signed constant: a single leaf
                return self.power_suffix(self.number(negate=True))
            return Unary("neg", self.factor())
        return self.power()

    def power(self) -> Expr:
        return self.power_suffix(self.atom())

    def power_suffix(self, node: Expr) -> Expr:
        while True:
            kind, text, at = self.peek()
            if kind == "sym" and text == "^":
                self.advance()
                kind, text, at = self.peek()
                if kind != "num" or float(text) != 2.0:
                    raise ParseError("only squaring (^2) is supported", at)
                self.advance()
                node = Unary("square", node)
            else:
                return node

    def number(self, negate: bool = False) -> Expr:
        kind, text, at = self.advance()
        value = float(text)
        if not math.isfinite(value):
            raise ParseError(f"constant {text!r} overflows", at)
        return Const(-value if negate else value)

    def atom(self) -> Expr:
        kind, text, at = self.peek()
        if kind == "num":
            return self.number()
        if kind == "name":
            self.advance()
            if text in VARIABLES:
                return Var(text)
            if text in _FUNCTIONS:
                return self.call(text, at)
            raise ParseError(f"unknown identifier {text!r}", at)
        if kind == "sym" and text == "(":
            self.advance()
            node = self.expression()
            self.expect_sym(")")
            return node
        raise ParseError(f"expected a value, found {text or 'end of input'!r}", at)

    def call(self, name: str, at: int) -> Expr:
        arity = _FUNCTIONS[name]
        self.expect_sym("(")
        args = [self.expression()]
        while True:
            kind, text, _ = self.peek()
            if kind == "sym" and text == ",":
                self.advance()
                args.append(self.expression())
            else:
                break
        self.expect_sym(")")
        if len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s), got {len(args)}", at)
        if arity == 1:
            return Unary(name, args[0])
        return Binary(name, args[0], args[1])


def parse(text: str) -> Expr:
    """Parse infix text into a tree. Raises ParseError with a position."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# constant folding and canonical form

def fold_constants(expr: Expr) -> Expr:
    """Replace every all-constant subtree whose value is finite with a single
    Constant; non-finite folds are left intact. Never increases complexity."""
    if isinstance(expr, (Const, Var)):
        return expr
    if isinstance(expr, Unary):
        child = fold_constants(expr.child)
        if isinstance(child, Const):
            value = apply_unary(expr.op, child.value)
            if math.isfinite(value):
                return Const(value)
        return expr if child is expr.child else Unary(expr.op, child)
    left = fold_constants(expr.left)
    right = fold_constants(expr.right)
    if isinstance(left, Const) and isinstance(right, Const):
        value = apply_binary(expr.op, left.value, right.value)
        if math.isfinite(value):
            return Const(value)
    if left is expr.left and right is expr.right:
        return expr
    return Binary(expr.op, left, right)


def round_to_sig(value: float, digits: int = 6) -> float:
    """Nearest float whose decimal form has at most `digits` significant digits."""
    return float(format(value, f".{digits}g"))


def _round_constants(expr: Expr) -> Expr:
    if isinstance(expr, Const):
        return Const(round_to_sig(expr.value))
    if isinstance(expr, Var):
        return expr
    if isinstance(expr, Unary):
        return Unary(expr.op, _round_constants(expr.child))
    return Binary(expr.op, _round_constants(expr.left), _round_constants(expr.right))


def canonical_form(expr: Expr) -> str:
    """Dedupe key: printed form after constant folding, with constants rounded
    to 6 significant digits. Commutative operand order is not normalized."""
    return print_expr(_round_constants(fold_constants(expr)))


# ---------------------------------------------------------------------------
# random trees

def random_expr(rng, max_depth: int, features: Sequence[str],
                operators: Sequence[str] = DEFAULT_OPERATORS,
                constant_range: tuple = (-5.0, 5.0),
                p_leaf: float = 0.25, p_constant: float = 0.4) -> Expr:
    """Random tree of depth <= max_depth over the given features/operators.
    Constants are uniform over constant_range, rounded to 6 significant
    digits. rng is a numpy Generator; a fixed seed gives a fixed tree."""
    features = tuple(features)
    if not features:
        raise ValueError("feature set must not be empty")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    unary = tuple(op for op in operators if op in UNARY_OPS)
    binary = tuple(op for op in operators if op in BINARY_OPS)
    lo, hi = constant_range

    def leaf() -> Expr:
        if rng.random() < p_constant:
            return Const(round_to_sig(float(rng.uniform(lo, hi))))
        return Var(features[int(rng.integers(len(features)))])

    def grow(depth: int) -> Expr:
        if depth <= 1 or (not unary and not binary):
            return leaf()
        if rng.random() < p_leaf:
            return leaf()
        k = int(rng.integers(len(unary) + len(binary)))
        if k < len(unary):
            return Unary(unary[k], grow(depth - 1))
        op = binary[k - len(unary)]
        return Binary(op, grow(depth - 1), grow(depth - 1))

    return grow(max_depth)
