"""Pure-Python implementations of the hot detection kernels.

These are the import-time fallback for :mod:`qbuffer._ckernels` and the
reference its compiled twin must match bit-for-bit. Inputs are pre-sanitized
by :mod:`qbuffer.kernels`: float64, C-contiguous, and (for the dead-time
scan) sorted ascending.
"""

import math

import numpy as np


def dead_time_filter(times, dead_time):
    """Non-paralyzable dead-time mask over sorted click times.

    A click is kept iff it falls at least ``dead_time`` after the previous
    kept click; suppressed clicks do not extend the dead window.
    """
    n = times.shape[0]
    mask = np.zeros(n, dtype=bool)
    last = -math.inf
    view = times.tolist()
    for i in range(n):
        t = view[i]
        if t - last >= dead_time:
            mask[i] = True
            last = t
    return mask


def bin_counts(times, t0, bin_width, n_bins):
    """Left-closed fixed-width binning with an out-of-range overflow tally."""
    idx = np.floor((times - t0) / bin_width)
    in_range = (idx >= 0.0) & (idx < n_bins)
    counts = np.bincount(idx[in_range].astype(np.int64), minlength=n_bins)
    counts = counts.astype(np.int64)
    overflow = int(times.shape[0] - np.count_nonzero(in_range))
    return counts, overflow
