# cython: language_level=3
"""Compiled simulation kernels.

Semantics and floating-point operation order are identical to the NumPy
twin in ``_kernels_py.py``; the build disables FP contraction so both
backends agree bit for bit.
"""

from libc.stdlib cimport free, malloc

import numpy as np

BACKEND = "cython"


def fill_paths(const double[:, :, ::1] w, const double[::1] kappa0, const double[::1] kappa_prev0,
               const double[::1] mu, const double[::1] zeta, const double[::1] lam, const double[::1] sigma,
               const double[::1] rho, const double[::1] sqrt1mr2, double[:, :, ::1] out):
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t H = w.shape[1]
    cdef Py_ssize_t C = kappa0.shape[0]
    cdef Py_ssize_t p, t, c
    cdef double m, z, kc, prevc
    with nogil:
        for p in range(n):
            for c in range(C):
                out[p, 0, c] = kappa0[c]
            for t in range(H):
                m = out[p, t, 0]
                for c in range(1, C):
                    if out[p, t, c] < m:
                        m = out[p, t, c]
                for c in range(C):
                    kc = out[p, t, c]
                    prevc = kappa_prev0[c] if t == 0 else out[p, t - 1, c]
                    z = rho[c] * w[p, t, 0] + sqrt1mr2[c] * w[p, t, 1 + c]
                    out[p, t + 1, c] = kc + mu[c] + zeta[c] * (kc - prevc) + sigma[c] * z + lam[c] * (m - kc)
    return np.asarray(out)


def extremal_stats(const double[:, :, ::1] w, const double[::1] kappa0, const double[::1] kappa_prev0,
                   const double[::1] mu, const double[::1] zeta, const double[::1] lam, const double[::1] sigma,
                   const double[::1] rho, const double[::1] sqrt1mr2,
                   Py_ssize_t burn_in, Py_ssize_t mid, double[:, ::1] out_stats):
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t H = w.shape[1]
    cdef Py_ssize_t C = kappa0.shape[0]
    cdef Py_ssize_t p, t, c
    cdef double m, mmax, z, kc, m_prev, sp1, sp2
    cdef double *kcur
    cdef double *kprev
    cdef double *knext
    cdef double *tmp
    kcur = <double *> malloc(C * sizeof(double))
    kprev = <double *> malloc(C * sizeof(double))
    knext = <double *> malloc(C * sizeof(double))
    if kcur == NULL or kprev == NULL or knext == NULL:
        free(kcur); free(kprev); free(knext)
        raise MemoryError()
    try:
        with nogil:
            for p in range(n):
                for c in range(C):
                    kcur[c] = kappa0[c]
                    kprev[c] = kappa_prev0[c]
                m_prev = kcur[0]
                for c in range(1, C):
                    if kcur[c] < m_prev:
                        m_prev = kcur[c]
                if burn_in == 0:
                    out_stats[p, 0] = m_prev
                if mid == 0:
                    out_stats[p, 1] = m_prev
                sp1 = 0.0
                sp2 = 0.0
                for t in range(1, H + 1):
                    for c in range(C):
                        kc = kcur[c]
                        z = rho[c] * w[p, t - 1, 0] + sqrt1mr2[c] * w[p, t - 1, 1 + c]
                        knext[c] = kc + mu[c] + zeta[c] * (kc - kprev[c]) + sigma[c] * z + lam[c] * (m_prev - kc)
                    tmp = kprev
                    kprev = kcur
                    kcur = knext
                    knext = tmp
                    m = kcur[0]
                    mmax = kcur[0]
                    for c in range(1, C):
                        if kcur[c] < m:
                            m = kcur[c]
                        if kcur[c] > mmax:
                            mmax = kcur[c]
                    if t > burn_in:
                        if t <= mid:
                            sp1 = sp1 + (mmax - m)
                        else:
                            sp2 = sp2 + (mmax - m)
                    if t == burn_in:
                        out_stats[p, 0] = m
                    if t == mid:
                        out_stats[p, 1] = m
                    m_prev = m
                out_stats[p, 2] = m_prev
                out_stats[p, 3] = sp1
                out_stats[p, 4] = sp2
    finally:
        free(kcur)
        free(kprev)
        free(knext)
    return np.asarray(out_stats)
