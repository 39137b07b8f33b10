# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Newton power-flow kernel.

Same iteration contract as the pure-numpy fallback; the mismatch and
Jacobian assembly run as C loops and the linear step uses LAPACK dgesv.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt
from scipy.linalg.cython_lapack cimport dgesv

cnp.import_array()

COMPILED = True


cdef int _newton_core(double complex[:, ::1] ybus,
                      long[::1] ns,
                      double complex[::1] V,
                      double complex[::1] s_spec,
                      double tol,
                      int max_iter,
                      double complex[::1] I_buf,
                      double complex[::1] F_buf,
                      double[::1, :] J_buf,
                      double[::1] rhs_buf,
                      int[::1] ipiv_buf,
                      double* out_res) nogil:
    """Runs Newton in place on V; returns iterations taken (or -iter-1 on
    linear-solve failure). out_res carries the final mismatch norm."""
    cdef int n = ybus.shape[0]
    cdef int k = ns.shape[0]
    cdef int k2 = 2 * k
    cdef int it, a, b, info, one = 1
    cdef int ia, ib
    cdef double res, ar, ai
    cdef double complex acc, dc, vA, yC

    if k == 0:
        out_res[0] = 0.0
        return 0

    for it in range(max_iter):
        # I = Y V
        for a in range(n):
            acc = 0
            for b in range(n):
                acc = acc + ybus[a, b] * V[b]
            I_buf[a] = acc
        # mismatch at non-slack rows
        res = 0.0
        for a in range(k):
            ia = ns[a]
            F_buf[a] = V[ia] * I_buf[ia].conjugate() - s_spec[a]
            ar = fabs(F_buf[a].real)
            ai = fabs(F_buf[a].imag)
            if ar * ar + ai * ai > res:
                res = ar * ar + ai * ai
        res = sqrt(res)
        if res < tol:
            out_res[0] = res
            return it
        # J = [[Re dS/dE, Re dS/dF], [Im dS/dE, Im dS/dF]]  (column-major buffer)
        for a in range(k):
            ia = ns[a]
            vA = V[ia]
            for b in range(k):
                ib = ns[b]
                yC = ybus[ia, ib].conjugate()
                dc = vA * yC
                if a == b:
                    dc = dc + I_buf[ia].conjugate()
                # dS/dE = dc ; dS/dF = i*conj(I) - i*V*conj(Y) handled via parts
                J_buf[a, b] = dc.real
                J_buf[k + a, b] = dc.imag
                if a == b:
                    # i*(conj(I) - V conj(Y)): real = -(imag part), imag = +(real part)
                    dc = I_buf[ia].conjugate() - vA * yC
                else:
                    dc = -vA * yC
                J_buf[a, k + b] = -dc.imag
                J_buf[k + a, k + b] = dc.real
            rhs_buf[a] = F_buf[a].real
            rhs_buf[k + a] = F_buf[a].imag
        dgesv(&k2, &one, &J_buf[0, 0], &k2, &ipiv_buf[0], &rhs_buf[0], &k2, &info)
        if info != 0:
            out_res[0] = res
            return -it - 1
        for a in range(k):
            ia = ns[a]
            V[ia] = V[ia] - (rhs_buf[a] + 1j * rhs_buf[k + a])

    # final residual after exhausting iterations
    for a in range(n):
        acc = 0
        for b in range(n):
            acc = acc + ybus[a, b] * V[b]
        I_buf[a] = acc
    res = 0.0
    for a in range(k):
        ia = ns[a]
        F_buf[a] = V[ia] * I_buf[ia].conjugate() - s_spec[a]
        ar = fabs(F_buf[a].real)
        ai = fabs(F_buf[a].imag)
        if ar * ar + ai * ai > res:
            res = ar * ar + ai * ai
    out_res[0] = sqrt(res)
    return max_iter


def newton_solve(ybus, ns, slack, v_slack, p_spec, q_spec, v0, tol, max_iter):
    Y = np.ascontiguousarray(ybus, dtype=np.complex128)
    ns_arr = np.ascontiguousarray(ns, dtype=np.int64)
    V = np.array(v0, dtype=np.complex128)
    V[np.asarray(slack, dtype=np.int64)] = v_slack
    s_spec = np.ascontiguousarray(
        p_spec[ns_arr] + 1j * q_spec[ns_arr], dtype=np.complex128)

    cdef int n = Y.shape[0]
    cdef int k = ns_arr.shape[0]
    I_buf = np.empty(n, dtype=np.complex128)
    F_buf = np.empty(max(k, 1), dtype=np.complex128)
    J_buf = np.empty((2 * max(k, 1), 2 * max(k, 1)), dtype=np.float64, order="F")
    rhs_buf = np.empty(2 * max(k, 1), dtype=np.float64)
    ipiv_buf = np.empty(2 * max(k, 1), dtype=np.int32)
    cdef double res = 0.0
    cdef int rc = _newton_core(Y, ns_arr, V, s_spec, tol, int(max_iter),
                               I_buf, F_buf, J_buf, rhs_buf, ipiv_buf, &res)
    if rc < 0:
        return V, -rc - 1, res, False
    return V, rc, res, res < tol


def newton_solve_many(ybus, ns, slack, v_slack, p_batch, q_batch, v0, tol, max_iter):
    Y = np.ascontiguousarray(ybus, dtype=np.complex128)
    ns_arr = np.ascontiguousarray(ns, dtype=np.int64)
    slack_arr = np.asarray(slack, dtype=np.int64)
    vs = np.asarray(v_slack, dtype=np.complex128)
    P = np.ascontiguousarray(p_batch, dtype=np.float64)
    Q = np.ascontiguousarray(q_batch, dtype=np.float64)
    v_start = np.array(v0, dtype=np.complex128)
    v_start[slack_arr] = vs

    cdef int n = Y.shape[0]
    cdef int k = ns_arr.shape[0]
    cdef Py_ssize_t nsamp = P.shape[0]
    V_out = np.empty((nsamp, n), dtype=np.complex128)
    iters = np.empty(nsamp, dtype=np.int64)
    resids = np.empty(nsamp, dtype=np.float64)
    ok = np.empty(nsamp, dtype=bool)

    I_buf = np.empty(n, dtype=np.complex128)
    F_buf = np.empty(max(k, 1), dtype=np.complex128)
    J_buf = np.empty((2 * max(k, 1), 2 * max(k, 1)), dtype=np.float64, order="F")
    rhs_buf = np.empty(2 * max(k, 1), dtype=np.float64)
    ipiv_buf = np.empty(2 * max(k, 1), dtype=np.int32)
    s_spec = np.empty(max(k, 1), dtype=np.complex128)
    V_work = np.empty(n, dtype=np.complex128)

    cdef double complex[:, ::1] Ym = Y
    cdef long[::1] ns_m = ns_arr
    cdef double complex[::1] s_m = s_spec
    cdef double complex[::1] v_m = V_work
    cdef double[:, ::1] Pm = P
    cdef double[:, ::1] Qm = Q
    cdef double complex[::1] v0_m = v_start
    cdef double res = 0.0
    cdef int rc
    cdef Py_ssize_t s
    cdef int a

    for s in range(nsamp):
        for a in range(n):
            v_m[a] = v0_m[a]
        for a in range(k):
            s_m[a] = Pm[s, ns_m[a]] + 1j * Qm[s, ns_m[a]]
        rc = _newton_core(Ym, ns_m, v_m, s_m, tol, int(max_iter),
                          I_buf, F_buf, J_buf, rhs_buf, ipiv_buf, &res)
        V_out[s] = V_work
        if rc < 0:
            iters[s] = -rc - 1
            ok[s] = False
        else:
            iters[s] = rc
            ok[s] = res < tol
        resids[s] = res
    return V_out, iters, resids, ok
