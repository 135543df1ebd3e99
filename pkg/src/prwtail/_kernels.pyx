# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled path kernels.  Semantics match ``_fallback`` operation for operation."""
import numpy as np

from libc.math cimport NAN


def sup_advance(const double[:, ::1] log_a, const double[:, ::1] log_b,
                double[::1] log_pi, double[::1] log_m, long long[::1] steps,
                double log_tau, long long cap):
    cdef Py_ssize_t n = log_a.shape[0]
    cdef Py_ssize_t k = log_a.shape[1]
    cdef Py_ssize_t i, j
    cdef double lp, lm, term
    cdef long long st
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] done = done_arr
    with nogil:
        for i in range(n):
            lp = log_pi[i]
            lm = log_m[i]
            st = steps[i]
            for j in range(k):
                term = lp + log_b[i, j]
                if term > lm:
                    lm = term
                lp = lp + log_a[i, j]
                st = st + 1
                if lp <= log_tau or st >= cap:
                    done[i] = 1
                    break
            log_pi[i] = lp
            log_m[i] = lm
            steps[i] = st
    return done_arr.view(np.bool_)


def walk_advance(const double[:, ::1] z, double[::1] s, double s_stop):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t k = z.shape[1]
    cdef Py_ssize_t i, j
    cdef double x
    pos_arr = np.empty((n, k), dtype=np.float64)
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] pos = pos_arr
    cdef unsigned char[::1] done = done_arr
    with nogil:
        for i in range(n):
            x = s[i]
            j = 0
            while j < k:
                x = x + z[i, j]
                pos[i, j] = x
                j = j + 1
                if x > s_stop:
                    done[i] = 1
                    break
            while j < k:
                pos[i, j] = NAN
                j = j + 1
            s[i] = x
    return pos_arr, done_arr.view(np.bool_)
