# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gauss-Seidel sweeps for the hard-margin dual.

Mirrors qp_backend._py_dual_coordinate_ascent operation for operation so
both lanes agree to the last bit on identical inputs.
"""

from libc.math cimport INFINITY


def dual_coordinate_ascent(double[:, ::1] gram,
                           double[::1] alpha,
                           double[::1] margins,
                           double kkt_tol,
                           int max_sweeps):
    cdef Py_ssize_t n = gram.shape[0]
    cdef Py_ssize_t q, j
    cdef int sweep
    cdef double delta, updated, step, resid, viol
    resid = INFINITY
    for sweep in range(1, max_sweeps + 1):
        for q in range(n):
            delta = (1.0 - margins[q]) / gram[q, q]
            updated = alpha[q] + delta
            if updated < 0.0:
                updated = 0.0
            step = updated - alpha[q]
            if step != 0.0:
                alpha[q] = updated
                for j in range(n):
                    margins[j] = margins[j] + step * gram[q, j]
        resid = 0.0
        for q in range(n):
            viol = 1.0 - margins[q]
            if alpha[q] > 0.0:
                if viol < 0.0:
                    viol = -viol
            elif viol < 0.0:
                viol = 0.0
            if viol > resid:
                resid = viol
        if resid <= kkt_tol:
            return sweep, resid
    return max_sweeps, resid
