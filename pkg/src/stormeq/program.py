"""Compilation of expression trees to flat postfix programs.

The kernels (compiled or pure-Python, see backend.py) execute a program as a
stack machine over float64 data. Variables are referenced by their fixed
index in expr.VARIABLES, so every kernel call takes a (4, n) feature matrix
in the order Dst, Ey, Pdyn, PB.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvalError, ProgramError
from .expr import VARIABLES, Binary, Const, Expr, Unary, Var, variables

OP_CONST = 0
OP_VAR = 1
BINARY_CODES = {"add": 2, "sub": 3, "mul": 4, "div": 5, "max": 6, "min": 7}
UNARY_CODES = {"exp": 8, "log": 9, "sqrt": 10, "square": 11, "sign": 12, "neg": 13}

#: Fixed stack budget of the compiled kernel; trees deeper than this cannot
#: be compiled (far beyond anything the complexity-capped search produces).
MAX_STACK = 128

VAR_INDEX = {name: i for i, name in enumerate(VARIABLES)}


@dataclass(frozen=True)
class Program:
    code: np.ndarray    # intc opcodes, postfix order
    args: np.ndarray    # intc: const index or variable index, 0 otherwise
    consts: np.ndarray  # float64 constant pool
    stack_need: int


def compile_expr(expr: Expr) -> Program:
    """Flatten a tree into postfix instructions."""
    code: list = []
    args: list = []
    consts: list = []

    def emit(node: Expr) -> int:
        if isinstance(node, Const):
            code.append(OP_CONST)
            args.append(len(consts))
            consts.append(node.value)
            return 1
        if isinstance(node, Var):
            code.append(OP_VAR)
            args.append(VAR_INDEX[node.name])
            return 1
        if isinstance(node, Unary):
            depth = emit(node.child)
            code.append(UNARY_CODES[node.op])
            args.append(0)
            return depth
        left = emit(node.left)
        right = emit(node.right)
        code.append(BINARY_CODES[node.op])
        args.append(0)
        return max(left, right + 1)

    stack_need = emit(expr)
    if stack_need > MAX_STACK:
        raise ProgramError(f"expression needs stack depth {stack_need} > {MAX_STACK}")
    return Program(
        code=np.asarray(code, dtype=np.intc),
        args=np.asarray(args, dtype=np.intc),
        consts=np.asarray(consts, dtype=np.float64),
        stack_need=stack_need,
    )


def feature_matrix(table, n: int | None = None, required=()) -> np.ndarray:
    """Build the (4, n) float64 matrix the kernels expect.

    `table` is anything exposing feature columns by variable id: a
    DerivedSeries (via .feature) or a mapping. Columns for variables the
    caller does not require may be absent and are filled with zeros.
    """
    columns = {}
    for name in VARIABLES:
        col = None
        if hasattr(table, "feature"):
            col = table.feature(name)
        elif name in table:
            col = table[name]
        if col is not None:
            columns[name] = np.asarray(col, dtype=np.float64)
    for name in required:
        if name not in columns:
            raise EvalError(f"table has no column for variable {name!r}")
    if n is None:
        lengths = {len(c) for c in columns.values()}
        if len(lengths) != 1:
            raise EvalError(f"inconsistent column lengths {sorted(lengths)}")
        n = lengths.pop()
    out = np.zeros((len(VARIABLES), n), dtype=np.float64)
    for name, col in columns.items():
        if len(col) != n:
            raise EvalError(f"column {name!r} has length {len(col)}, expected {n}")
        out[VAR_INDEX[name]] = col
    return out


def evaluate_over(expr: Expr, table) -> np.ndarray:
    """Row-wise evaluation of a tree over a table (see expr.evaluate_batch)."""
    from . import backend

    X = feature_matrix(table, required=sorted(variables(expr)))
    return backend.eval_rows(compile_expr(expr), X)
