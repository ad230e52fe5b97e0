"""Click statistics for weak coherent pulses on single-photon detectors.

A coherent pulse of mean photon number mu seen by a detector of efficiency
eta clicks with probability 1 - exp(-mu * eta) (Poisson photon statistics);
dark counts contribute 1 - exp(-rate * window) over a counting window, and
the two are combined as the complement of no click from either source.
Monte Carlo sampling realizes the same model per trigger, adding Gaussian
timing jitter and non-paralyzable dead time.

All randomness flows through one seed per call; identical (inputs, seed)
give identical click sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputDomainError


@dataclass(frozen=True)
class DetectorModel:
    """Efficiency, dark rate, dead time and timing jitter of one detector."""

    efficiency: float = 0.90
    dark_rate_hz: float = 100.0
    dead_time_s: float = 50e-9
    jitter_sigma_s: float = 50e-12

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise InputDomainError("efficiency must lie in [0, 1]")
        if self.dark_rate_hz < 0 or self.dead_time_s < 0 \
                or self.jitter_sigma_s < 0:
            raise InputDomainError("detector parameters must be >= 0")


@dataclass(frozen=True)
class ClickSet:
    """Time-ordered detector clicks."""

    times: np.ndarray
    detector_ids: np.ndarray
    acquisition_s: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.float64)
        ids = np.ascontiguousarray(self.detector_ids, dtype=np.int64)
        if t.shape != ids.shape:
            raise InputDomainError("times and detector ids must align")
        t.flags.writeable = False
        ids.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "detector_ids", ids)

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time_s,detector_id\n")
            for t, d in zip(self.times.tolist(), self.detector_ids.tolist()):
                fh.write(f"{t!r},{d}\n")


def merge_clicksets(*clicksets: ClickSet) -> ClickSet:
    """Merge per-detector click sets into one time-ordered set."""
    if not clicksets:
        raise InputDomainError("need at least one click set")
    times = np.concatenate([c.times for c in clicksets])
    ids = np.concatenate([c.detector_ids for c in clicksets])
    order = np.argsort(times, kind="stable")
    acq = max(c.acquisition_s for c in clicksets)
    return ClickSet(times[order], ids[order], acq)


@dataclass(frozen=True)
class Histogram:
    """Fixed-width time-tag histogram; bin k is [t0 + k*w, t0 + (k+1)*w)."""

    t0: float
    bin_width: float
    counts: np.ndarray
    overflow: int = 0

    def __post_init__(self):
        if self.bin_width <= 0:
            raise InputDomainError("bin width must be > 0")
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        if (c < 0).any():
            raise InputDomainError("counts must be non-negative")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + int(self.overflow)

    def bin_start(self, k: int) -> float:
        return self.t0 + k * self.bin_width

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("bin_start_s,counts\n")
            for k, c in enumerate(self.counts.tolist()):
                fh.write(f"{self.bin_start(k)!r},{c}\n")


def click_probability(mu: float, det: DetectorModel, window: float) -> float:
    """Probability of at least one click from a pulse of mean photon number
    ``mu`` within a counting window."""
    if mu < 0:
        raise InputDomainError(f"mean photon number {mu} must be >= 0")
    if window < 0:
        raise InputDomainError(f"window {window} must be >= 0")
    no_signal = math.exp(-mu * det.efficiency)
    no_dark = math.exp(-det.dark_rate_hz * window)
    return 1.0 - no_signal * no_dark


def _pulse_arrays(pulses) -> tuple[np.ndarray, np.ndarray]:
    """Accept [(t, mu), ...] or a (times, mus) pair of arrays."""
    if isinstance(pulses, tuple) and len(pulses) == 2 \
            and not np.isscalar(pulses[0]):
        t = np.asarray(pulses[0], dtype=np.float64)
        mu = np.asarray(pulses[1], dtype=np.float64)
    else:
        arr = np.asarray(list(pulses), dtype=np.float64)
        if arr.size == 0:
            return np.empty(0), np.empty(0)
        t, mu = arr[:, 0], arr[:, 1]
    if t.shape != mu.shape:
        raise InputDomainError("pulse times and amplitudes must align")
    if (mu < 0).any():
        raise InputDomainError("mean photon numbers must be >= 0")
    return t, mu


def sample_clicks(pulses, det: DetectorModel, acquisition: float, seed,
                  detector_id: int = 0) -> ClickSet:
    """Monte Carlo click times for a pulse sequence on one detector.

    Signal clicks are Bernoulli-thinned pulses at their arrival time plus
    Gaussian jitter; dark clicks are Poisson-distributed uniformly over the
    acquisition; clicks within the dead time of a prior kept click on this
    detector are suppressed. Draw order is fixed, so a given seed always
    yields the same click set.
    """
    t, mu = _pulse_arrays(pulses)
    if acquisition < 0:
        raise InputDomainError("acquisition must be >= 0")
    if t.size and (t.min() < 0 or t.max() > acquisition):
        raise InputDomainError("acquisition must cover all pulse times")
    rng = np.random.default_rng(seed)

    p_click = 1.0 - np.exp(-mu * det.efficiency)
    fired = rng.random(t.shape[0]) < p_click
    signal_times = t[fired]
    if det.jitter_sigma_s > 0 and signal_times.size:
        signal_times = signal_times + rng.normal(
            0.0, det.jitter_sigma_s, signal_times.size)

    n_dark = rng.poisson(det.dark_rate_hz * acquisition) \
        if det.dark_rate_hz > 0 else 0
    dark_times = rng.random(n_dark) * acquisition

    times = np.concatenate([signal_times, dark_times])
    times = times[np.argsort(times, kind="stable")]
    keep = kernels.dead_time_filter(times, det.dead_time_s)
    times = times[keep]
    return ClickSet(times, np.full(times.shape[0], detector_id,
                                   dtype=np.int64), acquisition)


def histogram(clicks: ClickSet, t0: float, bin_width: float,
              n_bins: int) -> Histogram:
    """Bin click times; out-of-range clicks land in the overflow tally."""
    counts, overflow = kernels.bin_counts(clicks.times, t0, bin_width, n_bins)
    return Histogram(t0, bin_width, counts, overflow)


def expected_counts(pulses, det: DetectorModel, n_reps: int,
                    window: float = 0.0) -> np.ndarray:
    """Noise-free expectation: n_reps * click_probability per pulse."""
    if n_reps < 0:
        raise InputDomainError("repetition count must be >= 0")
    t, mu = _pulse_arrays(pulses)
    del t
    p = 1.0 - (np.exp(-mu * det.efficiency)
               * math.exp(-det.dark_rate_hz * window))
    return n_reps * p


def count_triggered(clicks: ClickSet, period: float, offset: float,
                    window: float) -> int:
    """Number of distinct trigger periods with a click inside the gate
    [offset - window/2, offset + window/2) relative to the trigger."""
    if period <= 0 or window < 0:
        raise InputDomainError("period must be > 0 and window >= 0")
    t = clicks.times
    if t.size == 0:
        return 0
    trigger = np.floor(t / period)
    rel = t - trigger * period
    hit = (rel >= offset - window / 2.0) & (rel < offset + window / 2.0)
    return int(np.unique(trigger[hit]).size)
