"""Preset experiments and their analysis.

Two measurement campaigns are built in:

* a retrieval-time sweep: the buffer is driven to hold a pulse for 0..7
  storage cycles, and the retrieved pulses are time-tagged into a histogram
  whose peaks decay geometrically with the per-cycle loss;
* a polarization sweep: the launch half-wave plate is rotated through a full
  fringe period at several retrieval settings, the two beamsplitter ports
  are counted in the computational and the superposition basis, and a
  fringe visibility is extracted per setting.

Counting conventions: ``eta`` labels retrieval settings starting at 1 for a
pulse reflected straight back without entering the storage line, so
``cycles = eta - 1``; the retrieval-time axis places peak ``eta`` at
``eta * delta_t``. Count analysis works on background-subtracted,
saturation-corrected ("linearized") counts: with click probability
p = 1 - exp(-(mu_port * eff + dark_rate * window)), the quantity
n * (-ln(1 - c/n) - dark_rate * window) is proportional to the detected
photon number, which keeps fringe visibilities and decay slopes free of the
exponential saturation bias of raw click counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .components import BufferTopology, PulseRecord, pbs_project
from .detection import (
    ClickSet,
    DetectorModel,
    click_probability,
    count_triggered,
    histogram,
    merge_clicksets,
    sample_clicks,
)
from .engine import (
    SimLimits,
    simulate,
    storage_period,
    storage_retrieval_schedule,
    validate_schedule,
)
from .errors import CalibrationError, InputDomainError, ScheduleError
from .polarization import STATE_H, JonesOp, apply_unitary, hwp_matrix

#: Measurement-basis rotations in front of the beamsplitter.
BASES = {
    "computational": JonesOp.identity(),
    "logical": hwp_matrix(math.pi / 8.0),
}
BASIS_ORDER = ("computational", "logical")

#: Histogram bin width for the retrieval-time sweep.
HIST_BIN_S = 100e-9

#: Fringe-fit threshold: with at least this many angles the visibility comes
#: from a least-squares sinusoid; below it, from the raw extrema.
FIT_MIN_ANGLES = 8


def default_hwp_grid(n: int = 16) -> tuple:
    """Uniform grid of HWP angles covering one full fringe period (pi/2)."""
    return tuple(float(a) for a in np.linspace(0.0, math.pi / 2.0, n))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run: source, trigger count, sweep axes, mode."""

    preset: str = "custom"
    mu_source: float = 0.1
    n_triggers: int = 60_000
    seed: int = 12345
    eta_list: tuple = tuple(range(1, 9))
    hwp_angles: tuple = field(default_factory=default_hwp_grid)
    basis: str = "both"  # computational | logical | both
    mode: str = "monte-carlo"  # monte-carlo | analytic
    rep_rate_hz: float = 1000.0
    pulse_width_s: float = 50e-9
    count_window_s: float = 100e-9
    drive_width_s: float = 180e-9
    drive_guard_s: float = 20e-9

    def __post_init__(self):
        if self.mu_source < 0:
            raise InputDomainError("source mean photon number must be >= 0")
        if self.n_triggers < 1:
            raise InputDomainError("trigger count must be >= 1")
        etas = tuple(int(e) for e in self.eta_list)
        if not etas or any(e < 1 for e in etas):
            raise InputDomainError("eta values must be integers >= 1")
        object.__setattr__(self, "eta_list", etas)
        object.__setattr__(self, "hwp_angles",
                           tuple(float(a) for a in self.hwp_angles))
        if self.basis not in ("computational", "logical", "both"):
            raise InputDomainError(f"unknown basis {self.basis!r}")
        if self.mode not in ("monte-carlo", "analytic"):
            raise InputDomainError(f"unknown mode {self.mode!r}")
        if self.rep_rate_hz <= 0 or self.pulse_width_s <= 0:
            raise InputDomainError("repetition rate and pulse width must be > 0")
        if self.count_window_s <= 0:
            raise InputDomainError("counting window must be > 0")

    @property
    def acquisition_s(self) -> float:
        return self.n_triggers / self.rep_rate_hz

    @property
    def bases(self) -> tuple:
        if self.basis == "both":
            return BASIS_ORDER
        return (self.basis,)


@dataclass
class PeakRow:
    """One retrieval setting of the timing sweep."""

    eta: int
    cycles: int
    exit_time_s: float
    retrieval_time_s: float  # eta * delta_t, the retrieval-axis position
    mu: float
    expected_counts: float
    sampled_counts: int | None
    expected_counts_linear: float
    sampled_counts_linear: float | None


@dataclass
class RetrievalSweepResult:
    rows: list
    delta_t_s: float
    n_triggers: int
    window_s: float
    histogram: object | None
    clicks: dict
    sim_results: dict = field(default_factory=dict)

    @property
    def span_s(self) -> float:
        """Extent of the retrieval-time axis up to the last peak."""
        return max(r.retrieval_time_s for r in self.rows)


@dataclass
class VisibilityResult:
    """Fringe visibility of one (retrieval setting, basis) sweep."""

    eta: int
    basis: str
    visibility: float
    visibility_per_port: tuple
    angles: tuple
    curve: list  # (angle_rad, normalized port-0 counts, normalized port-1)
    counts: np.ndarray  # raw counts, shape (2, n_angles)
    expected: np.ndarray  # raw expectation, same shape
    n_triggers: int


@dataclass
class DecayFit:
    loss_db_per_cycle: float
    residual_db: float
    n_points: int


@dataclass
class CalibrationResult:
    mode: str
    prep_error_depol: float
    depol_per_cycle: tuple
    bloch_targets: dict
    residuals: dict
    targets: dict


def visibility(c_max: float, c_min: float) -> float:
    """Fringe visibility (c_max - c_min) / (c_max + c_min)."""
    if c_max == 0 and c_min == 0:
        raise InputDomainError("visibility undefined for all-zero counts")
    if not c_max >= c_min >= 0:
        raise InputDomainError(
            f"need c_max >= c_min >= 0, got ({c_max}, {c_min})")
    return (c_max - c_min) / (c_max + c_min)


def linearized_counts(counts, n_triggers: int, det: DetectorModel,
                      window: float) -> np.ndarray:
    """Background-subtracted, saturation-corrected counts.

    Inverts p = 1 - exp(-x) per point and removes the dark-count term, so
    the result is n * mu_port * efficiency up to sampling noise. Values may
    go slightly negative when a near-empty port fluctuates below the dark
    baseline.
    """
    c = np.asarray(counts, dtype=np.float64)
    p = np.clip(c / n_triggers, 0.0, 1.0 - 1e-15)
    return n_triggers * (-np.log1p(-p) - det.dark_rate_hz * window)


def _fit_fringe(angles: np.ndarray, counts: np.ndarray) -> tuple:
    """Least-squares fit of mean + amplitude * cos(4 theta + phase)."""
    design = np.column_stack([
        np.ones_like(angles),
        np.cos(4.0 * angles),
        np.sin(4.0 * angles),
    ])
    beta, *_ = np.linalg.lstsq(design, counts, rcond=None)
    mean = float(beta[0])
    amp = float(math.hypot(beta[1], beta[2]))
    return mean, amp


def visibility_from_curve(angles, counts) -> float:
    """Visibility of one port's angle sweep.

    With >= FIT_MIN_ANGLES points a sinusoidal fit supplies the extrema,
    which is robust against sampling noise; with fewer points the raw
    maximum and minimum samples are used directly.
    """
    a = np.asarray(angles, dtype=np.float64)
    c = np.asarray(counts, dtype=np.float64)
    c = np.maximum(c, 0.0)
    if a.size >= FIT_MIN_ANGLES:
        mean, amp = _fit_fringe(a, c)
        if mean <= 0:
            raise InputDomainError("visibility undefined for all-zero counts")
        return min(1.0, amp / mean)
    return visibility(float(c.max()), float(c.min()))


def fit_decay(peaks) -> DecayFit:
    """Per-cycle loss from a peak-count series.

    ``peaks`` is a sequence of (eta, counts); the fit is the least-squares
    slope of log10(counts) against cycle count (eta - 1), reported in dB per
    cycle. Non-positive counts are excluded.
    """
    pts = [(int(eta) - 1, float(c)) for eta, c in peaks if c > 0]
    if len(pts) < 2:
        raise InputDomainError("need at least 2 peaks with positive counts")
    x = np.array([k for k, _ in pts], dtype=np.float64)
    y = np.log10([c for _, c in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    rms_db = 10.0 * float(np.sqrt(np.mean(resid ** 2)))
    return DecayFit(-10.0 * float(slope), rms_db, len(pts))


# -- engine plumbing --------------------------------------------------------


def _substream(seed: int, *key: int) -> np.random.SeedSequence:
    """Deterministic random substream for one sampling task."""
    return np.random.SeedSequence([int(seed)] + [int(k) for k in key])


def _source_pulse(config: ExperimentConfig, pol) -> PulseRecord:
    return PulseRecord(id=0, t=0.0, width=config.pulse_width_s,
                       mu=config.mu_source, pol=pol)


def _checked_schedule(topology, config, eta, limits):
    """Build and validate the store/retrieve schedule for one setting."""
    probe = _source_pulse(config, STATE_H)
    sched = storage_retrieval_schedule(
        topology, probe, eta - 1, drive_width=config.drive_width_s,
        guard=config.drive_guard_s)
    violations = validate_schedule(topology, sched, [probe], limits)
    errors = [v for v in violations if v.severity == "error"]
    if errors:
        raise ScheduleError(
            f"schedule for eta={eta} is unsafe: "
            + "; ".join(v.message for v in errors), violations)
    return sched


def _retrieve(topology, config, eta, pol, schedule, limits):
    """Run one pulse through the buffer; return (retained pulse, result)."""
    res = simulate(topology, schedule, [_source_pulse(config, pol)], limits)
    main = res.retrieved_with_cycles(eta - 1)
    if len(main) != 1:
        raise ScheduleError(
            f"schedule for eta={eta} produced {len(main)} retrievals at "
            f"cycles={eta - 1} instead of exactly one")
    return main[0], res


def _trigger_pulses(retrieved, config: ExperimentConfig):
    """(times, mus) of every retrieved pulse repeated over all triggers."""
    period = 1.0 / config.rep_rate_hz
    triggers = np.arange(config.n_triggers, dtype=np.float64) * period
    times = np.concatenate([triggers + p.t for p in retrieved])
    mus = np.concatenate([np.full(config.n_triggers, p.mu)
                          for p in retrieved])
    order = np.argsort(times, kind="stable")
    return times[order], mus[order]


def run_retrieval_sweep(config: ExperimentConfig, topology: BufferTopology,
                        det: DetectorModel, limits: SimLimits | None = None
                        ) -> RetrievalSweepResult:
    """Timing sweep over the configured retrieval settings.

    Each setting runs its own schedule; expected counts come from the click
    model, sampled counts (monte-carlo mode) from per-trigger sampling and
    gated counting around the known exit time.
    """
    limits = limits or SimLimits()
    delta_t = storage_period(topology)
    period = 1.0 / config.rep_rate_hz
    n = config.n_triggers
    window = config.count_window_s

    rows: list[PeakRow] = []
    clicks: dict[int, ClickSet] = {}
    sims: dict[int, object] = {}
    for eta in config.eta_list:
        sched = _checked_schedule(topology, config, eta, limits)
        main, sim = _retrieve(topology, config, eta, STATE_H, sched, limits)
        sims[eta] = sim
        retrieved = sim.retrieved
        if main.t + window >= period:
            raise InputDomainError(
                f"exit time {main.t} of eta={eta} exceeds the trigger period")
        p = click_probability(main.mu, det, window)
        expected = n * p
        expected_lin = n * main.mu * det.efficiency
        sampled = sampled_lin = None
        if config.mode == "monte-carlo":
            cs = sample_clicks(_trigger_pulses(retrieved, config), det,
                               config.acquisition_s,
                               _substream(config.seed, 0, eta))
            sampled = count_triggered(cs, period, main.t, window)
            sampled_lin = float(linearized_counts(
                [sampled], n, det, window)[0])
            clicks[eta] = cs
        rows.append(PeakRow(eta, eta - 1, main.t, eta * delta_t, main.mu,
                            expected, sampled, expected_lin, sampled_lin))

    hist = None
    if clicks:
        merged = merge_clicksets(*clicks.values())
        offsets = np.sort(np.mod(merged.times, period))
        folded = ClickSet(offsets, np.zeros(offsets.size, dtype=np.int64),
                          period)
        n_bins = int(math.ceil((max(r.exit_time_s for r in rows) + delta_t)
                               / HIST_BIN_S))
        hist = histogram(folded, 0.0, HIST_BIN_S, n_bins)
    return RetrievalSweepResult(rows, delta_t, n, window, hist, clicks, sims)


def run_hwp_sweep(config: ExperimentConfig, topology: BufferTopology,
                  detectors, limits: SimLimits | None = None) -> list:
    """Polarization fringe sweep; one VisibilityResult per (eta, basis).

    ``detectors`` is the pair of port detectors (a single model is accepted
    and used for both ports).
    """
    limits = limits or SimLimits()
    if isinstance(detectors, DetectorModel):
        detectors = (detectors, detectors)
    det0, det1 = detectors

    angles = np.asarray(config.hwp_angles, dtype=np.float64)
    if np.unique(angles).size < 4 or \
            angles.max() - angles.min() < math.pi / 2.0 - 1e-9:
        raise InputDomainError(
            "need at least 4 distinct HWP angles spanning a full fringe "
            "period (pi/2)")

    period = 1.0 / config.rep_rate_hz
    n = config.n_triggers
    window = config.count_window_s
    results: list[VisibilityResult] = []

    for eta in config.eta_list:
        sched = _checked_schedule(topology, config, eta, limits)
        # Propagation is independent of the measurement basis: run the
        # engine once per angle and project the same retrieved pulse twice.
        retained = []
        for theta in angles:
            pol = apply_unitary(STATE_H, hwp_matrix(float(theta)))
            retained.append(_retrieve(topology, config, eta, pol, sched,
                                      limits))
        for basis in config.bases:
            u = BASES[basis]
            expected = np.zeros((2, angles.size))
            counts = np.zeros((2, angles.size))
            for i, (main, sim) in enumerate(retained):
                ports = pbs_project(main, u)
                for port, (det, pulse) in enumerate(
                        zip((det0, det1), ports)):
                    expected[port, i] = n * click_probability(
                        pulse.mu, det, window)
                    if config.mode == "monte-carlo":
                        port_pulses = [pbs_project(s, u)[port]
                                       for s in sim.retrieved]
                        cs = sample_clicks(
                            _trigger_pulses(port_pulses, config), det,
                            config.acquisition_s,
                            _substream(config.seed, 1, eta,
                                       BASIS_ORDER.index(basis), i, port),
                            detector_id=port)
                        counts[port, i] = count_triggered(
                            cs, period, main.t, window)
            raw = counts if config.mode == "monte-carlo" else expected
            lin = np.stack([
                linearized_counts(raw[port], n,
                                  (det0, det1)[port], window)
                for port in (0, 1)
            ])
            vis = tuple(visibility_from_curve(angles, lin[port])
                        for port in (0, 1))
            # Normalize by the per-angle two-port total, so the two curves
            # are complementary and bounded by [0, 1].
            norm = np.maximum(lin, 0.0)
            totals = norm.sum(axis=0)
            norm = np.where(totals > 0, norm / np.where(totals > 0,
                                                        totals, 1.0), 0.0)
            curve = [(float(a), float(norm[0, i]), float(norm[1, i]))
                     for i, a in enumerate(angles)]
            results.append(VisibilityResult(
                eta, basis, float(np.mean(vis)), vis,
                tuple(float(a) for a in angles), curve, counts, expected, n))
    return results


def average_visibility_by_eta(results) -> dict:
    """Mean visibility over bases, keyed by retrieval setting."""
    by_eta: dict[int, list] = {}
    for r in results:
        by_eta.setdefault(r.eta, []).append(r.visibility)
    return {eta: float(np.mean(v)) for eta, v in sorted(by_eta.items())}


# -- calibration ------------------------------------------------------------


def _analytic_visibility_of_bloch(b: float, mu_ret: float, config,
                                  det: DetectorModel) -> float:
    """Visibility the sweep analysis reports for a net Bloch shrink ``b``.

    Synthesizes the expected port counts of the fringe sweep for a launch
    state shrunk to Bloch length ``b`` and feeds them through the same
    linearize-and-fit analysis as the real experiment.
    """
    angles = np.asarray(config.hwp_angles, dtype=np.float64)
    p_port0 = (1.0 + b * np.cos(4.0 * angles)) / 2.0
    vis = []
    for port, prob in ((0, p_port0), (1, 1.0 - p_port0)):
        raw = np.array([config.n_triggers * click_probability(
            mu_ret * q, det, config.count_window_s) for q in prob])
        lin = linearized_counts(raw, config.n_triggers, det,
                                config.count_window_s)
        vis.append(visibility_from_curve(angles, lin))
    return float(np.mean(vis))


def _solve_bloch(target: float, mu_ret: float, config, det) -> float:
    """Invert the analysis: Bloch length whose visibility equals target."""
    f = lambda b: _analytic_visibility_of_bloch(b, mu_ret, config, det)
    hi = f(1.0)
    if target > hi + 1e-9:
        raise CalibrationError(
            f"target visibility {target} exceeds the maximum {hi:.6f} "
            "reachable with a fully polarized state")
    lo_b, hi_b = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo_b + hi_b)
        if f(mid) < target:
            lo_b = mid
        else:
            hi_b = mid
    return 0.5 * (lo_b + hi_b)


def calibrate(targets: dict, topology: BufferTopology,
              config: ExperimentConfig, det: DetectorModel,
              mode: str = "table",
              limits: SimLimits | None = None) -> CalibrationResult:
    """Choose depolarization parameters that reproduce visibility targets.

    ``targets`` maps retrieval setting eta to the desired average
    visibility. Table mode solves one net Bloch shrink per target and
    spreads it over the intervening cycles, reproducing every target
    exactly in analytic mode; it needs an eta = 1 entry to anchor the
    preparation error. Physical mode fits a single per-cycle probability by
    least squares in the log domain and reports the per-target residuals.
    """
    if mode not in ("table", "physical"):
        raise InputDomainError(f"unknown calibration mode {mode!r}")
    targets = {int(eta): float(v) for eta, v in targets.items()}
    if not targets or any(not 0.0 < v <= 1.0 for v in targets.values()):
        raise CalibrationError("targets must be visibilities in (0, 1]")
    if 1 not in targets:
        raise CalibrationError(
            "calibration needs an eta=1 target to anchor the preparation "
            "error")
    limits = limits or SimLimits()

    base = replace(topology, prep_error_depol=0.0, depol_per_cycle=(0.0,))
    bloch: dict[int, float] = {}
    mu_ret: dict[int, float] = {}
    for eta in sorted(targets):
        sched = _checked_schedule(base, config, eta, limits)
        main, _ = _retrieve(base, config, eta, STATE_H, sched, limits)
        mu_ret[eta] = main.mu
        bloch[eta] = _solve_bloch(targets[eta], main.mu, config, det)

    cycles = {eta: eta - 1 for eta in sorted(targets)}
    ks = [cycles[eta] for eta in sorted(targets)]
    bs = [bloch[eta] for eta in sorted(targets)]
    prep = 1.0 - bs[0]

    if mode == "table":
        for (k0, b0), (k1, b1) in zip(zip(ks, bs), zip(ks[1:], bs[1:])):
            if b1 > b0 + 1e-12:
                raise CalibrationError(
                    f"targets imply Bloch length growing from cycle {k0} to "
                    f"{k1}; no depolarization table can do that")
        table = [0.0] * max(max(ks), 1)
        for (k0, b0), (k1, b1) in zip(zip(ks, bs), zip(ks[1:], bs[1:])):
            retention = (min(b1 / b0, 1.0)) ** (1.0 / (k1 - k0)) \
                if b0 > 0 else 1.0
            for k in range(k0 + 1, k1 + 1):
                table[k - 1] = 1.0 - retention
        depol = tuple(table)
        achieved = {
            eta: _analytic_visibility_of_bloch(
                bloch_of(prep, depol, cycles[eta]), mu_ret[eta], config, det)
            for eta in sorted(targets)
        }
    else:
        pos = [(k, b) for k, b in zip(ks, bs) if k > 0]
        if pos and bs[0] > 0:
            num = sum(k * (math.log(b) - math.log(bs[0])) for k, b in pos
                      if b > 0)
            den = sum(k * k for k, _ in pos)
            ln_r = num / den if den else 0.0
            if ln_r > 1e-12:
                raise CalibrationError(
                    "targets increase with cycle count; a constant "
                    "depolarization cannot fit them")
            p = 1.0 - math.exp(min(ln_r, 0.0))
        else:
            p = 0.0
        depol = (p,)
        achieved = {
            eta: _analytic_visibility_of_bloch(
                bs[0] * (1.0 - p) ** cycles[eta], mu_ret[eta], config, det)
            for eta in sorted(targets)
        }

    residuals = {eta: achieved[eta] - targets[eta] for eta in sorted(targets)}
    return CalibrationResult(mode, prep, depol, bloch, residuals, targets)


def bloch_of(prep: float, depol_table: tuple, cycles: int) -> float:
    """Net Bloch shrink after preparation error and ``cycles`` cycles."""
    b = 1.0 - prep
    for k in range(1, cycles + 1):
        b *= 1.0 - depol_table[min(k, len(depol_table)) - 1]
    return b


def apply_calibration(topology: BufferTopology,
                      cal: CalibrationResult) -> BufferTopology:
    return replace(topology, prep_error_depol=cal.prep_error_depol,
                   depol_per_cycle=cal.depol_per_cycle)


# -- exporters ----------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_peaks_csv(rows, path) -> None:
    cols = ("eta", "cycles", "exit_time_s", "retrieval_time_s", "mu",
            "expected_counts", "sampled_counts", "expected_counts_linear",
            "sampled_counts_linear")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(getattr(r, c)) for c in cols) + "\n")


def write_sweep_csv(results, path) -> None:
    """Fringe-sweep table: one row per (eta, basis, angle, port)."""
    with open(path, "w", newline="") as fh:
        fh.write("eta,basis,angle_rad,port,counts,normalized_counts\n")
        for r in results:
            raw = r.counts if np.any(r.counts) else r.expected
            for i, (angle, n0, n1) in enumerate(r.curve):
                for port, norm in ((0, n0), (1, n1)):
                    fh.write(f"{r.eta},{r.basis},{angle!r},{port},"
                             f"{_fmt(float(raw[port, i]))},{norm!r}\n")


def sweep_rows(results) -> list:
    """The write_sweep_csv table as dicts, for JSON output."""
    out = []
    for r in results:
        raw = r.counts if np.any(r.counts) else r.expected
        for i, (angle, n0, n1) in enumerate(r.curve):
            for port, norm in ((0, n0), (1, n1)):
                out.append({
                    "eta": r.eta, "basis": r.basis, "angle_rad": angle,
                    "port": port, "counts": float(raw[port, i]),
                    "normalized_counts": norm,
                })
    return out
