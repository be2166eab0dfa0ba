# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels: tape interpretation of trajectory jets and the
retarded-time solve.  Semantics match ``_kernel_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, sqrt, log, pow, fabs, floor, isfinite, NAN
from libc.stdlib cimport malloc, free

cnp.import_array()

# opcodes and status codes, mirrored from dsl.py
cdef enum:
    OP_CONST = 0
    OP_T = 1
    OP_X0 = 2
    OP_Y0 = 3
    OP_Z0 = 4
    OP_NEG = 5
    OP_SIN = 6
    OP_COS = 7
    OP_EXP = 8
    OP_SQRT = 9
    OP_LOG = 10
    OP_ADD = 11
    OP_SUB = 12
    OP_MUL = 13
    OP_DIV = 14
    OP_POW = 15
    STATUS_MAXITER = -1
    STATUS_DIV = 1
    STATUS_SQRT = 2
    STATUS_LOG = 3
    STATUS_POW = 4

cdef double DBL_EPS = 2.220446049250313e-16
cdef double NEWTON_MIN_SLOPE = 1e-3


cdef inline void compose(double* f, double p0, double p1, double p2, double p3) noexcept nogil:
    cdef double f1 = f[1], f2 = f[2], f3 = f[3]
    f[0] = p0
    f[1] = p1 * f1
    f[2] = p2 * f1 * f1 + p1 * f2
    f[3] = p3 * f1 * f1 * f1 + 3.0 * p2 * f1 * f2 + p1 * f3


cdef inline void jet_mul(double* a, const double* b) noexcept nogil:
    cdef double a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3]
    a[0] = a0 * b[0]
    a[1] = a1 * b[0] + a0 * b[1]
    a[2] = a2 * b[0] + 2.0 * a1 * b[1] + a0 * b[2]
    a[3] = a3 * b[0] + 3.0 * a2 * b[1] + 3.0 * a1 * b[2] + a0 * b[3]


cdef int run_program(const int* codes, const double* args, int lo, int hi,
                     double t, const double* r0, double* stack,
                     double* out, int* err_op) noexcept nogil:
    cdef int sp = 0, op, code, k, status = 0
    cdef double* f
    cdef double* g
    cdef double x, s, c, e, r, fall, ex
    cdef double p[4]
    cdef bint is_int, bad
    for op in range(lo, hi):
        code = codes[op]
        if code == OP_CONST:
            f = stack + 4 * sp
            f[0] = args[op]; f[1] = 0.0; f[2] = 0.0; f[3] = 0.0
            sp += 1
        elif code == OP_T:
            f = stack + 4 * sp
            f[0] = t; f[1] = 1.0; f[2] = 0.0; f[3] = 0.0
            sp += 1
        elif code == OP_X0 or code == OP_Y0 or code == OP_Z0:
            f = stack + 4 * sp
            f[0] = r0[code - OP_X0]; f[1] = 0.0; f[2] = 0.0; f[3] = 0.0
            sp += 1
        elif code == OP_NEG:
            f = stack + 4 * (sp - 1)
            f[0] = -f[0]; f[1] = -f[1]; f[2] = -f[2]; f[3] = -f[3]
        elif code == OP_SIN:
            f = stack + 4 * (sp - 1)
            s = sin(f[0]); c = cos(f[0])
            compose(f, s, c, -s, -c)
        elif code == OP_COS:
            f = stack + 4 * (sp - 1)
            s = sin(f[0]); c = cos(f[0])
            compose(f, c, -s, -c, s)
        elif code == OP_EXP:
            f = stack + 4 * (sp - 1)
            e = exp(f[0])
            compose(f, e, e, e, e)
        elif code == OP_SQRT:
            f = stack + 4 * (sp - 1)
            x = f[0]
            if not (x > 0.0):
                if status == 0:
                    status = STATUS_SQRT; err_op[0] = op
                x = 1.0
            s = sqrt(x)
            compose(f, s, 0.5 / s, -0.25 / (x * s), 0.375 / (x * x * s))
        elif code == OP_LOG:
            f = stack + 4 * (sp - 1)
            x = f[0]
            if not (x > 0.0):
                if status == 0:
                    status = STATUS_LOG; err_op[0] = op
                x = 1.0
            r = 1.0 / x
            compose(f, log(x), r, -r * r, 2.0 * r * r * r)
        elif code == OP_POW:
            f = stack + 4 * (sp - 1)
            x = f[0]
            c = args[op]
            is_int = floor(c) == c
            fall = 1.0
            bad = False
            for k in range(4):
                ex = c - k
                if fall == 0.0:
                    p[k] = 0.0
                else:
                    if (ex < 0 and x == 0.0) or (not is_int and x < 0.0):
                        bad = True
                    p[k] = fall * pow(1.0 if bad else x, ex)
                fall *= ex
            if bad and status == 0:
                status = STATUS_POW; err_op[0] = op
            compose(f, p[0], p[1], p[2], p[3])
        else:
            g = stack + 4 * (sp - 1)
            f = stack + 4 * (sp - 2)
            sp -= 1
            if code == OP_ADD:
                f[0] += g[0]; f[1] += g[1]; f[2] += g[2]; f[3] += g[3]
            elif code == OP_SUB:
                f[0] -= g[0]; f[1] -= g[1]; f[2] -= g[2]; f[3] -= g[3]
            elif code == OP_MUL:
                jet_mul(f, g)
            elif code == OP_DIV:
                x = g[0]
                if x == 0.0:
                    if status == 0:
                        status = STATUS_DIV; err_op[0] = op
                    x = 1.0
                r = 1.0 / x
                g[0] = x
                compose(g, r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r)
                jet_mul(f, g)
    out[0] = stack[0]; out[1] = stack[1]; out[2] = stack[2]; out[3] = stack[3]
    return status


cdef int eval_flow(const int* codes, const double* args, const int* starts,
                   double t, const double* r0, double* stack,
                   double* jets, int* err_op) noexcept nogil:
    # jets: 12 doubles, [component][order]
    cdef int k, st, status = 0
    cdef int eo = -1
    for k in range(3):
        st = run_program(codes, args, starts[k], starts[k + 1], t, r0,
                         stack, jets + 4 * k, &eo)
        if st != 0 and status == 0:
            status = st
            err_op[0] = eo
    return status


def flow_jets(const int[::1] codes, const double[::1] args, const int[::1] starts,
              int depth, t_in, r0_in):
    cdef const double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef const double[:, ::1] r0 = np.ascontiguousarray(r0_in, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t n = t.shape[0], i
    jets_np = np.empty((n, 3, 4))
    status_np = np.zeros(n, dtype=np.int32)
    err_np = np.full(n, -1, dtype=np.int32)
    cdef double[:, :, ::1] jets = jets_np
    cdef int[::1] status = status_np
    cdef int[::1] err_op = err_np
    cdef double* stack = <double*> malloc(4 * (depth + 1) * sizeof(double))
    cdef int eo
    try:
        with nogil:
            for i in range(n):
                eo = -1
                status[i] = eval_flow(&codes[0], &args[0], &starts[0], t[i], &r0[i, 0],
                                      stack, &jets[i, 0, 0], &eo)
                err_op[i] = eo
    finally:
        free(stack)
    return jets_np, status_np, err_np


def retard(const int[::1] codes, const double[::1] args, const int[::1] starts,
           int depth, r1_in, t_in, r0_in, T_init_in, double tol, int maxiter, bint newton):
    cdef const double[:, ::1] r1 = np.ascontiguousarray(r1_in, dtype=np.float64).reshape(-1, 3)
    cdef const double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef const double[:, ::1] r0 = np.ascontiguousarray(r0_in, dtype=np.float64).reshape(-1, 3)
    cdef const double[::1] T_init = np.ascontiguousarray(T_init_in, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], i
    T_np = np.empty(n)
    iters_np = np.zeros(n, dtype=np.int32)
    status_np = np.zeros(n, dtype=np.int32)
    err_np = np.full(n, -1, dtype=np.int32)
    jets_np = np.full((n, 3, 4), np.nan)
    cdef double[::1] Tout = T_np
    cdef int[::1] iters = iters_np
    cdef int[::1] status = status_np
    cdef int[::1] err_op = err_np
    cdef double[:, :, ::1] jets_out = jets_np
    cdef double* stack = <double*> malloc(4 * (depth + 1) * sizeof(double))
    cdef double jet[12]
    cdef double d[3]
    cdef double T, F, Tn, slope, dv, tol_eff
    cdef int k, st, eo, it, j
    cdef bint done
    try:
        with nogil:
            for i in range(n):
                eo = -1
                st = 0
                T = T_init[i]
                if not isfinite(T):
                    st = eval_flow(&codes[0], &args[0], &starts[0], t[i], &r0[i, 0], stack, jet, &eo)
                    T = 0.0
                    for j in range(3):
                        d[j] = r1[i, j] - jet[4 * j]
                        T += d[j] * d[j]
                    T = sqrt(T)
                it = 0
                done = False
                while st == 0 and not done:
                    if it >= maxiter:
                        st = STATUS_MAXITER
                        break
                    st = eval_flow(&codes[0], &args[0], &starts[0], t[i] - T, &r0[i, 0], stack, jet, &eo)
                    if st != 0:
                        break
                    F = 0.0
                    dv = 0.0
                    for j in range(3):
                        d[j] = r1[i, j] - jet[4 * j]
                        F += d[j] * d[j]
                        dv += d[j] * jet[4 * j + 1]
                    F = sqrt(F)
                    if newton and F > 0.0:
                        slope = 1.0 - dv / F
                        if fabs(slope) >= NEWTON_MIN_SLOPE:
                            Tn = T - (T - F) / slope
                        else:
                            Tn = F
                        if Tn < 0.0:
                            Tn = 0.0
                    else:
                        Tn = F
                    tol_eff = 8.0 * DBL_EPS * (T if T > F else F)
                    if tol_eff < tol:
                        tol_eff = tol
                    done = fabs(T - F) <= tol_eff
                    T = Tn
                    it += 1
                Tout[i] = T
                iters[i] = it
                if st == 0:
                    st = eval_flow(&codes[0], &args[0], &starts[0], t[i] - T, &r0[i, 0], stack, jet, &eo)
                    if st == 0:
                        for j in range(12):
                            jets_out[i, j // 4, j % 4] = jet[j]
                status[i] = st
                err_op[i] = eo
    finally:
        free(stack)
    return T_np, iters_np, status_np, jets_np, err_np
