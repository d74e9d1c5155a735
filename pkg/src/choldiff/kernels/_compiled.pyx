# cython: language_level=3
"""Compiled kernel backend; contract documented in ``_numpy_impl``."""
import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def girsanov_sqrt_model(U, dts, C, Cinv, kappa, level, vdiag):
    U = np.ascontiguousarray(U, dtype=np.float64)
    dts = np.ascontiguousarray(dts, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    Cinv = np.ascontiguousarray(Cinv, dtype=np.float64)
    kappa = np.ascontiguousarray(kappa, dtype=np.float64)
    level = np.ascontiguousarray(level, dtype=np.float64)
    vdiag = np.ascontiguousarray(vdiag, dtype=np.float64)

    cdef double[:, :, ::1] u = U
    cdef double[::1] dt = dts
    cdef double[:, ::1] c = C
    cdef double[:, ::1] ci = Cinv
    cdef double[::1] kap = kappa
    cdef double[::1] lev = level
    cdef double[::1] vd = vdiag

    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t p = u.shape[1]
    cdef Py_ssize_t d = u.shape[2]
    if d > 16:
        raise ValueError("compiled kernel supports at most 16 dimensions")

    log_g_arr = np.empty(n, dtype=np.float64)
    ok_arr = np.empty(n, dtype=np.uint8)
    cdef double[::1] log_g = log_g_arr
    cdef cnp.uint8_t[::1] ok = ok_arr

    cdef double psi[16]
    cdef Py_ssize_t k, j, r, i
    cdef double w, sq, stoch, time_int, acc, neg_inf
    cdef bint valid
    neg_inf = -np.inf

    for k in range(n):
        stoch = 0.0
        time_int = 0.0
        valid = True
        for j in range(p):
            # w_i = [C u]_i = 2 sqrt(x_i); domain requires w_i > 0
            for i in range(d):
                w = 0.0
                for r in range(i + 1):
                    w += c[i, r] * u[k, j, r]
                if w <= 0.0:
                    valid = False
                    break
                sq = 0.5 * w
                psi[i] = (kap[i] * (lev[i] - sq * sq) - 0.25 * vd[i]) / sq
            if not valid:
                break
            if j < p - 1:
                # mu_U = Cinv @ psi (Cinv lower triangular)
                for r in range(d):
                    acc = 0.0
                    for i in range(r + 1):
                        acc += ci[r, i] * psi[i]
                    stoch += acc * (u[k, j + 1, r] - u[k, j, r])
                    time_int += 0.5 * acc * acc * dt[k]
        if valid:
            log_g[k] = stoch - time_int
            ok[k] = 1
        else:
            log_g[k] = neg_inf
            ok[k] = 0

    return log_g_arr, ok_arr.astype(bool)
