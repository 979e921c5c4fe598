# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops for Galerkin pair assembly.

The pure-python twin lives in ``_accel_py``; the active implementation is
selected at import time by ``fracneumann.backend``.
"""

import numpy as np

cimport numpy as cnp

from libc.math cimport fabs, pow


def power_pair_accumulate(double[:, ::1] A,
                          double[::1] x, double[::1] y, double[::1] w,
                          double[:, ::1] psi, int[:, ::1] idx,
                          double coeff, double expo):
    """A[idx[p,a], idx[p,b]] += coeff * w[p] * |x[p]-y[p]|**expo * psi[p,a] * psi[p,b].

    The upper triangle (a <= b) is computed once and mirrored so the result
    is symmetric to the bit.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = psi.shape[1]
    cdef Py_ssize_t p, a, b
    cdef double kw, pa, v
    for p in range(n):
        kw = coeff * w[p] * pow(fabs(x[p] - y[p]), expo)
        for a in range(m):
            pa = kw * psi[p, a]
            A[idx[p, a], idx[p, a]] += pa * psi[p, a]
            for b in range(a + 1, m):
                v = pa * psi[p, b]
                A[idx[p, a], idx[p, b]] += v
                A[idx[p, b], idx[p, a]] += v


def weighted_pair_accumulate(double[:, ::1] A,
                             double[::1] kw,
                             double[:, ::1] psi, int[:, ::1] idx):
    """A[idx[p,a], idx[p,b]] += kw[p] * psi[p,a] * psi[p,b] (kernel values precomputed)."""
    cdef Py_ssize_t n = kw.shape[0]
    cdef Py_ssize_t m = psi.shape[1]
    cdef Py_ssize_t p, a, b
    cdef double pa, v
    for p in range(n):
        for a in range(m):
            pa = kw[p] * psi[p, a]
            A[idx[p, a], idx[p, a]] += pa * psi[p, a]
            for b in range(a + 1, m):
                v = pa * psi[p, b]
                A[idx[p, a], idx[p, b]] += v
                A[idx[p, b], idx[p, a]] += v
