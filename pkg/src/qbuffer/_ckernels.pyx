# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled detection kernels.

Semantics match qbuffer._pykernels exactly; both operate on float64
C-contiguous arrays prepared by qbuffer.kernels. The dead-time scan is
inherently sequential (each decision depends on the previous kept click),
which is why it lives here rather than in vectorized numpy.
"""

from libc.math cimport INFINITY, floor

import numpy as np


def dead_time_filter(const double[::1] times, double dead_time):
    """Non-paralyzable dead-time mask over sorted click times."""
    cdef Py_ssize_t n = times.shape[0]
    mask = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] mv = mask
    cdef double last = -INFINITY
    cdef Py_ssize_t i
    for i in range(n):
        if times[i] - last >= dead_time:
            mv[i] = 1
            last = times[i]
    return mask.view(np.bool_)


def bin_counts(const double[::1] times, double t0, double bin_width,
               Py_ssize_t n_bins):
    """Left-closed fixed-width binning with an out-of-range overflow tally."""
    counts = np.zeros(n_bins, dtype=np.int64)
    cdef long long[::1] cv = counts
    cdef Py_ssize_t i, n = times.shape[0]
    cdef double b
    cdef long long overflow = 0
    for i in range(n):
        b = floor((times[i] - t0) / bin_width)
        if 0.0 <= b < <double> n_bins:
            cv[<Py_ssize_t> b] += 1
        else:
            overflow += 1
    return counts, int(overflow)
