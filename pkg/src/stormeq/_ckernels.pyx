# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stack-machine kernels: batch evaluation, fused L1 loss and the
Euler integration loop. Contracts match _pykernels exactly; arithmetic uses
libm, so results agree bit-for-bit with the scalar Python semantics."""

from libc.math cimport exp, fabs, isfinite, isnan, log, sqrt

import numpy as np

DEF MAX_STACK = 128

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_MAX = 6
    OP_MIN = 7
    OP_EXP = 8
    OP_LOG = 9
    OP_SQRT = 10
    OP_SQUARE = 11
    OP_SIGN = 12
    OP_NEG = 13

cdef double NAN_VALUE = float("nan")
cdef double INF_VALUE = float("inf")


cdef inline double _eval_one(const int[::1] code, const int[::1] args,
                             const double[::1] consts, double* stack,
                             double dst, double ey, double pdyn, double pb) noexcept nogil:
    cdef Py_ssize_t i
    cdef int op, sp = 0
    cdef double a, b, r
    for i in range(code.shape[0]):
        op = code[i]
        if op == OP_CONST:
            stack[sp] = consts[args[i]]
            sp += 1
        elif op == OP_VAR:
            op = args[i]
            if op == 0:
                stack[sp] = dst
            elif op == 1:
                stack[sp] = ey
            elif op == 2:
                stack[sp] = pdyn
            else:
                stack[sp] = pb
            sp += 1
        elif op <= OP_MIN:
            b = stack[sp - 1]
            a = stack[sp - 2]
            sp -= 1
            if op == OP_ADD:
                r = a + b
            elif op == OP_SUB:
                r = a - b
            elif op == OP_MUL:
                r = a * b
            elif op == OP_DIV:
                r = NAN_VALUE if b == 0.0 else a / b
            elif op == OP_MAX:
                r = NAN_VALUE if (isnan(a) or isnan(b)) else (a if a >= b else b)
            else:
                r = NAN_VALUE if (isnan(a) or isnan(b)) else (a if a <= b else b)
            stack[sp - 1] = r
        else:
            a = stack[sp - 1]
            if op == OP_EXP:
                r = exp(a)
            elif op == OP_LOG:
                r = log(a) if a > 0.0 else NAN_VALUE
            elif op == OP_SQRT:
                r = NAN_VALUE if a < 0.0 else sqrt(a)
            elif op == OP_SQUARE:
                r = a * a
            elif op == OP_SIGN:
                r = NAN_VALUE if isnan(a) else (1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0))
            else:
                r = -a
            stack[sp - 1] = r
    return stack[0]


def eval_rows(const int[::1] code, const int[::1] args, const double[::1] consts,
              const double[:, ::1] X):
    """Evaluate a program over the columns of X (shape (4, n))."""
    cdef Py_ssize_t n = X.shape[1], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double stack[MAX_STACK]
    with nogil:
        for i in range(n):
            out[i] = _eval_one(code, args, consts, stack, X[0, i], X[1, i], X[2, i], X[3, i])
    return out_arr


def l1_loss(const int[::1] code, const int[::1] args, const double[::1] consts,
            const double[:, ::1] X, const double[::1] y):
    """Mean absolute error of the program against y; +inf if any
    prediction is NaN."""
    cdef Py_ssize_t n = X.shape[1], i
    cdef double stack[MAX_STACK]
    cdef double acc = 0.0, pred
    with nogil:
        for i in range(n):
            pred = _eval_one(code, args, consts, stack, X[0, i], X[1, i], X[2, i], X[3, i])
            if isnan(pred):
                acc = INF_VALUE
                break
            acc += fabs(pred - y[i])
    if acc == INF_VALUE:
        return INF_VALUE
    return acc / n


def euler_integrate(const int[::1] code, const int[::1] args, const double[::1] consts,
                    double dst0, const double[::1] ey, const double[::1] pdyn,
                    const double[::1] pb, double[::1] out):
    """Explicit Euler with a 1-hour step; drivers are taken at the current
    step. Fills out (length horizon+1) and returns the step index at which
    the rate went non-finite, or -1 if none."""
    cdef Py_ssize_t horizon = ey.shape[0], k
    cdef double stack[MAX_STACK]
    cdef double dst = dst0, rate
    cdef Py_ssize_t bad = -1
    with nogil:
        out[0] = dst
        for k in range(horizon):
            rate = _eval_one(code, args, consts, stack, dst, ey[k], pdyn[k], pb[k])
            if not isfinite(rate):
                bad = k
                break
            dst = dst + rate
            out[k + 1] = dst
    return bad
