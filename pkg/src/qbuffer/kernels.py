"""Backend dispatch for the hot detection kernels.

The compiled extension is preferred when it imported cleanly; the
pure-Python module is the fallback and the semantic reference. Set
``QBUF_KERNELS=python`` or ``QBUF_KERNELS=compiled`` to force a backend
(the latter raises if the extension is missing). Both backends produce
bit-identical results, which ``tests/test_kernels.py`` asserts.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels
from .errors import InputDomainError

try:
    from . import _ckernels
except ImportError:
    _ckernels = None


def available_backends() -> dict:
    """Name -> implementation module, for benchmarks and parity tests."""
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["compiled"] = _ckernels
    return backends


def _select():
    forced = os.environ.get("QBUF_KERNELS", "").strip().lower()
    if forced == "python":
        return "python", _pykernels
    if forced == "compiled":
        if _ckernels is None:
            raise ImportError(
                "QBUF_KERNELS=compiled but qbuffer._ckernels is not built")
        return "compiled", _ckernels
    if forced:
        raise InputDomainError(f"unknown kernel backend {forced!r}")
    if _ckernels is not None:
        return "compiled", _ckernels
    return "python", _pykernels


BACKEND, _impl = _select()


def _clean_times(times) -> np.ndarray:
    return np.ascontiguousarray(times, dtype=np.float64)


def dead_time_filter(times, dead_time: float) -> np.ndarray:
    """Boolean keep-mask for sorted click times under non-paralyzable
    dead time."""
    if dead_time < 0:
        raise InputDomainError(f"dead time {dead_time} must be >= 0")
    return _impl.dead_time_filter(_clean_times(times), float(dead_time))


def bin_counts(times, t0: float, bin_width: float, n_bins: int):
    """(counts, overflow) for left-closed bins [t0 + k*w, t0 + (k+1)*w)."""
    if bin_width <= 0:
        raise InputDomainError(f"bin width {bin_width} must be > 0")
    if n_bins < 1:
        raise InputDomainError(f"bin count {n_bins} must be >= 1")
    return _impl.bin_counts(_clean_times(times), float(t0),
                            float(bin_width), int(n_bins))
