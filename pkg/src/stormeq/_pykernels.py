"""Pure-Python (numpy) kernels: the fallback backend.

Same contracts as the compiled kernels in _ckernels.pyx. Batch evaluation is
a vectorized stack machine; the Euler loop steps a scalar stack machine.
Vectorized exp/log may differ from libm in the last ulp, so cross-backend
comparisons should allow ~1e-12 relative tolerance on transcendentals.
"""

from __future__ import annotations

import math

import numpy as np

# opcodes; keep in sync with program.py and _ckernels.pyx
_CONST, _VAR = 0, 1
_ADD, _SUB, _MUL, _DIV, _MAX, _MIN = 2, 3, 4, 5, 6, 7
_EXP, _LOG, _SQRT, _SQUARE, _SIGN, _NEG = 8, 9, 10, 11, 12, 13


def eval_rows(code, args, consts, X):
    """Evaluate a program over the columns of X (shape (4, n))."""
    n = X.shape[1]
    stack = []
    with np.errstate(all="ignore"):
        for op, arg in zip(code, args):
            if op == _CONST:
                stack.append(np.full(n, consts[arg]))
            elif op == _VAR:
                stack.append(X[arg])
            elif op <= _MIN:
                b = stack.pop()
                a = stack.pop()
                if op == _ADD:
                    r = a + b
                elif op == _SUB:
                    r = a - b
                elif op == _MUL:
                    r = a * b
                elif op == _DIV:
                    r = np.where(b == 0.0, np.nan, a / b)
                elif op == _MAX:
                    r = np.maximum(a, b)  # propagates NaN
                else:
                    r = np.minimum(a, b)
                stack.append(r)
            else:
                a = stack.pop()
                if op == _EXP:
                    r = np.exp(a)
                elif op == _LOG:
                    r = np.where(a > 0.0, np.log(np.where(a > 0.0, a, 1.0)), np.nan)
                elif op == _SQRT:
                    r = np.sqrt(a)  # negative -> nan already
                elif op == _SQUARE:
                    r = a * a
                elif op == _SIGN:
                    r = np.sign(a)
                else:
                    r = -a
                stack.append(r)
    out = stack.pop()
    if out.base is not None:  # a view of X (bare-variable program)
        out = out.copy()
    return out


def l1_loss(code, args, consts, X, y):
    """Mean absolute error of the program against y; +inf if any
    prediction is NaN."""
    pred = eval_rows(code, args, consts, X)
    if np.isnan(pred).any():
        return math.inf
    return float(np.mean(np.abs(pred - y)))


def _eval_scalar(code, args, consts, dst, ey, pdyn, pb):
    stack = []
    for op, arg in zip(code, args):
        if op == _CONST:
            stack.append(consts[arg])
        elif op == _VAR:
            stack.append((dst, ey, pdyn, pb)[arg])
        elif op <= _MIN:
            b = stack.pop()
            a = stack.pop()
            if op == _ADD:
                r = a + b
            elif op == _SUB:
                r = a - b
            elif op == _MUL:
                r = a * b
            elif op == _DIV:
                r = math.nan if b == 0.0 else a / b
            elif op == _MAX:
                r = math.nan if (math.isnan(a) or math.isnan(b)) else (a if a >= b else b)
            else:
                r = math.nan if (math.isnan(a) or math.isnan(b)) else (a if a <= b else b)
            stack.append(r)
        else:
            a = stack.pop()
            if op == _EXP:
                try:
                    r = math.exp(a)
                except OverflowError:
                    r = math.inf
            elif op == _LOG:
                r = math.log(a) if a > 0.0 else math.nan
            elif op == _SQRT:
                r = math.nan if a < 0.0 else math.sqrt(a)
            elif op == _SQUARE:
                r = a * a
            elif op == _SIGN:
                r = math.nan if math.isnan(a) else (1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0))
            else:
                r = -a
            stack.append(r)
    return stack.pop()


def euler_integrate(code, args, consts, dst0, ey, pdyn, pb, out):
    """Explicit Euler with a 1-hour step; drivers are taken at the current
    step. Fills out (length horizon+1) and returns the step index at which
    the rate went non-finite, or -1 if none."""
    horizon = len(ey)
    dst = dst0
    out[0] = dst
    for k in range(horizon):
        rate = _eval_scalar(code, args, consts, dst, ey[k], pdyn[k], pb[k])
        if not math.isfinite(rate):
            return k
        dst = dst + rate
        out[k + 1] = dst
    return -1
