"""NumPy implementation of the batch kernels (fallback when the extension is absent).

Both backends expose the same two functions:

``flow_jets(codes, args, starts, depth, t, r0)``
    jets of the three trajectory programs at ``(t[i], r0[i])``;
    returns ``(jets[N, 3, 4], status[N], err_op[N])``.

``retard(codes, args, starts, depth, r1, t, r0, T_init, tol, maxiter, newton)``
    solves ``T = |r1 - r2(t - T, r0)|`` per point and returns
    ``(T[N], iters[N], status[N], jets[N, 3, 4], err_op[N])`` where ``jets``
    are taken at the retarded time ``t - T``.
"""
from __future__ import annotations

import numpy as np

from .dsl import (
    OP_ADD, OP_CONST, OP_COS, OP_DIV, OP_EXP, OP_LOG, OP_MUL, OP_NEG, OP_POW,
    OP_SIN, OP_SQRT, OP_SUB, OP_T, OP_X0, OP_Y0, OP_Z0,
    STATUS_DIV, STATUS_LOG, STATUS_MAXITER, STATUS_POW, STATUS_SQRT,
)

EPS = np.finfo(float).eps
NEWTON_MIN_SLOPE = 1e-3


def _compose(f, p0, p1, p2, p3):
    f1, f2, f3 = f[1], f[2], f[3]
    return np.stack([
        p0,
        p1 * f1,
        p2 * f1 * f1 + p1 * f2,
        p3 * f1 * f1 * f1 + 3.0 * p2 * f1 * f2 + p1 * f3,
    ])


def _pow(f, c):
    x = f[0]
    is_int = float(c).is_integer()
    bad = np.zeros(x.shape, dtype=bool)
    coeffs = []
    fall = 1.0
    for k in range(4):
        e = c - k
        if fall == 0.0:
            coeffs.append(np.zeros_like(x))
        else:
            if e < 0:
                bad |= x == 0.0
            if not is_int:
                bad |= x < 0.0
            xs = np.where(bad, 1.0, x)
            coeffs.append(fall * (xs ** int(e) if is_int else xs ** e))
        fall *= e
    return _compose(f, *coeffs), bad


def _run_program(codes, args, lo, hi, t, r0):
    n = t.shape[0]
    stack = []
    status = np.zeros(n, dtype=np.int32)
    err_op = np.full(n, -1, dtype=np.int32)

    def flag(bad, code, op):
        new = bad & (status == 0)
        status[new] = code
        err_op[new] = op

    zeros = np.zeros(n)
    for op in range(lo, hi):
        code = codes[op]
        if code == OP_CONST:
            stack.append(np.stack([np.full(n, args[op]), zeros, zeros, zeros]))
        elif code == OP_T:
            stack.append(np.stack([t, np.ones(n), zeros, zeros]))
        elif code in (OP_X0, OP_Y0, OP_Z0):
            stack.append(np.stack([r0[:, code - OP_X0], zeros, zeros, zeros]))
        elif code == OP_NEG:
            stack.append(-stack.pop())
        elif code == OP_SIN:
            f = stack.pop()
            s, c = np.sin(f[0]), np.cos(f[0])
            stack.append(_compose(f, s, c, -s, -c))
        elif code == OP_COS:
            f = stack.pop()
            s, c = np.sin(f[0]), np.cos(f[0])
            stack.append(_compose(f, c, -s, -c, s))
        elif code == OP_EXP:
            f = stack.pop()
            e = np.exp(f[0])
            stack.append(_compose(f, e, e, e, e))
        elif code == OP_SQRT:
            f = stack.pop()
            bad = ~(f[0] > 0.0)
            flag(bad, STATUS_SQRT, op)
            x = np.where(bad, 1.0, f[0])
            s = np.sqrt(x)
            stack.append(_compose(f, s, 0.5 / s, -0.25 / (x * s), 0.375 / (x * x * s)))
        elif code == OP_LOG:
            f = stack.pop()
            bad = ~(f[0] > 0.0)
            flag(bad, STATUS_LOG, op)
            x = np.where(bad, 1.0, f[0])
            r = 1.0 / x
            stack.append(_compose(f, np.log(x), r, -r * r, 2.0 * r * r * r))
        elif code == OP_POW:
            f = stack.pop()
            res, bad = _pow(f, args[op])
            flag(bad, STATUS_POW, op)
            stack.append(res)
        else:
            b = stack.pop()
            a = stack.pop()
            if code == OP_ADD:
                stack.append(a + b)
            elif code == OP_SUB:
                stack.append(a - b)
            elif code == OP_MUL:
                stack.append(np.stack([
                    a[0] * b[0],
                    a[1] * b[0] + a[0] * b[1],
                    a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
                    a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
                ]))
            elif code == OP_DIV:
                bad = b[0] == 0.0
                flag(bad, STATUS_DIV, op)
                x = np.where(bad, 1.0, b[0])
                r = 1.0 / x
                rb = _compose(b, r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r)
                stack.append(np.stack([
                    a[0] * rb[0],
                    a[1] * rb[0] + a[0] * rb[1],
                    a[2] * rb[0] + 2.0 * a[1] * rb[1] + a[0] * rb[2],
                    a[3] * rb[0] + 3.0 * a[2] * rb[1] + 3.0 * a[1] * rb[2] + a[0] * rb[3],
                ]))
            else:
                raise ValueError(f"bad opcode {code}")
    return stack.pop(), status, err_op


def flow_jets(codes, args, starts, depth, t, r0):
    t = np.ascontiguousarray(t, dtype=float)
    r0 = np.ascontiguousarray(r0, dtype=float).reshape(-1, 3)
    n = t.shape[0]
    jets = np.empty((n, 3, 4))
    status = np.zeros(n, dtype=np.int32)
    err_op = np.full(n, -1, dtype=np.int32)
    with np.errstate(all="ignore"):
        for k in range(3):
            jet, st, eo = _run_program(codes, args, starts[k], starts[k + 1], t, r0)
            jets[:, k, :] = jet.T
            new = (st != 0) & (status == 0)
            status[new] = st[new]
            err_op[new] = eo[new]
    return jets, status, err_op


def retard(codes, args, starts, depth, r1, t, r0, T_init, tol, maxiter, newton):
    r1 = np.ascontiguousarray(r1, dtype=float).reshape(-1, 3)
    t = np.ascontiguousarray(t, dtype=float)
    r0 = np.ascontiguousarray(r0, dtype=float).reshape(-1, 3)
    n = t.shape[0]
    T = np.array(T_init, dtype=float, copy=True)
    iters = np.zeros(n, dtype=np.int32)
    status = np.zeros(n, dtype=np.int32)
    err_op = np.full(n, -1, dtype=np.int32)

    need = ~np.isfinite(T)
    if need.any():
        idx = np.nonzero(need)[0]
        jets, st, eo = flow_jets(codes, args, starts, depth, t[idx], r0[idx])
        status[idx] = st
        err_op[idx] = eo
        T[idx] = np.sqrt(np.sum((r1[idx] - jets[:, :, 0]) ** 2, axis=1))

    active = status == 0
    with np.errstate(all="ignore"):
        for _ in range(maxiter):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            Ti = T[idx]
            jets, st, eo = flow_jets(codes, args, starts, depth, t[idx] - Ti, r0[idx])
            bad = st != 0
            if bad.any():
                status[idx[bad]] = st[bad]
                err_op[idx[bad]] = eo[bad]
                active[idx[bad]] = False
            d = r1[idx] - jets[:, :, 0]
            F = np.sqrt(np.sum(d * d, axis=1))
            if newton:
                slope = 1.0 - np.sum(d * jets[:, :, 1], axis=1) / F
                use = (F > 0.0) & (np.abs(slope) >= NEWTON_MIN_SLOPE)
                Tn = np.where(use, Ti - (Ti - F) / np.where(use, slope, 1.0), F)
                Tn = np.maximum(Tn, 0.0)
            else:
                Tn = F
            tol_eff = np.maximum(tol, 8.0 * EPS * np.maximum(Ti, F))
            done = np.abs(Ti - F) <= tol_eff
            ok = ~bad
            T[idx[ok]] = Tn[ok]
            iters[idx[ok]] += 1
            active[idx[ok & done]] = False
        status[active] = STATUS_MAXITER

    jets_out = np.full((n, 3, 4), np.nan)
    good = np.nonzero(status == 0)[0]
    if good.size:
        jets, st, eo = flow_jets(codes, args, starts, depth, t[good] - T[good], r0[good])
        jets_out[good] = jets
        status[good] = st
        err_op[good] = eo
    return T, iters, status, jets_out, err_op
