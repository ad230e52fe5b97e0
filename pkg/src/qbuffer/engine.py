"""Discrete-event propagation of pulses through the buffer.

One storage cycle is: a full traversal of the delay loop, routing at the
coupler, a round trip along the storage line, and re-entry into the loop.
The engine tracks each pulse record through these stages under a drive
schedule:

* A pulse entering the coupler splits into the two counter-propagating loop
  directions. The "near" direction meets the modulator ``modulator_offset_m``
  after entry, the "far" direction meets it near the end of the traversal.
  The phase difference accumulated from every drive window overlapping the
  two passage intervals fixes the power split at recombination:
  R = cos^2(dphi/2) back out the entry port, T = 1 - R out the other port.
* The external port leads through the circulator to the measurement stage;
  the internal port leads down the storage line to the grating mirror and
  back, which increments the cycle counter and applies the per-cycle
  depolarization.

Events are processed in strict global time order with a monotonic sequence
number as tie-breaker, so results are bit-for-bit reproducible. Every pure
loss factor is folded into ``path_transmission``, and after a run the engine
audits that, per source pulse, the split fractions over all terminal records
sum to one.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .components import (
    BufferTopology,
    DrivePulse,
    PulseRecord,
    db_to_transmission,
    overlap_fraction,
    sagnac_transfer,
)
from .errors import ContractViolationError, InputDomainError
from .polarization import apply_depolarizing


class EventLogEntry(NamedTuple):
    time_s: float
    pulse_id: int
    component: str
    port: str
    mu: float
    cycles: int


class ModulatorPassage(NamedTuple):
    """One pass of a pulse through the modulator, with drive overlaps."""

    root_id: int
    pulse_id: int
    traversal: int
    direction: str  # "near" or "far"
    t_start: float
    t_end: float
    overlaps: tuple  # ((drive_index, fraction), ...) with fraction > 0


@dataclass(frozen=True)
class DriveSchedule:
    """Time-ordered, non-overlapping high-voltage gates."""

    pulses: tuple = ()

    def __post_init__(self):
        pulses = tuple(self.pulses)
        prev_end = -math.inf
        prev_start = -math.inf
        for d in pulses:
            if not isinstance(d, DrivePulse):
                raise InputDomainError("schedule entries must be DrivePulse")
            if d.t_start <= prev_start:
                raise InputDomainError(
                    "drive start times must be strictly increasing")
            if d.t_start < prev_end:
                raise InputDomainError(
                    f"drive at t={d.t_start} overlaps the previous one")
            prev_start, prev_end = d.t_start, d.t_end
        object.__setattr__(self, "pulses", pulses)

    def __len__(self):
        return len(self.pulses)


@dataclass(frozen=True)
class SimLimits:
    """Safety bounds on recirculation.

    ``mu_floor`` discards numerical-dust descendants from partial switching;
    exact vacuum pulses (mu == 0) are deliberately kept alive so that empty
    triggers still produce timing records.
    """

    max_cycles: int = 64
    mu_floor: float = 1e-12

    def __post_init__(self):
        if self.max_cycles < 0 or self.mu_floor < 0:
            raise InputDomainError("limits must be non-negative")


@dataclass
class Violation:
    severity: str  # "error" or "warning"
    code: str
    message: str
    drive_index: int


@dataclass
class SimulationResult:
    retrieved: list
    discarded: list  # (PulseRecord, reason)
    event_log: list
    passages: list
    inputs: list = field(default_factory=list)

    def retrieved_with_cycles(self, cycles: int) -> list:
        return [p for p in self.retrieved if p.cycles == cycles]

    def write_event_log_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time_s,pulse_id,component,port,mu,cycles\n")
            for e in self.event_log:
                fh.write(f"{e.time_s!r},{e.pulse_id},{e.component},"
                         f"{e.port},{e.mu!r},{e.cycles}\n")


def storage_period(topology: BufferTopology) -> float:
    """Duration of one stored cycle: loop delay plus storage round trip."""
    return topology.loop_delay_s() + 2.0 * topology.storage_delay_s()


def _drive_phases(schedule: DriveSchedule, start: float, width: float,
                  v_pi: float) -> tuple[float, list]:
    """Total phase on one passage and the contributing (index, fraction)."""
    phi = 0.0
    parts = []
    for i, d in enumerate(schedule.pulses):
        f = overlap_fraction(d, start, width)
        if f > 0.0:
            phi += math.pi * (d.voltage / v_pi) * f
            parts.append((i, f))
    return phi, parts


def simulate(topology: BufferTopology, schedule: DriveSchedule,
             inputs: list, limits: SimLimits | None = None
             ) -> SimulationResult:
    """Propagate ``inputs`` through the buffer under ``schedule``.

    Inputs are pulse records at the routing-stage entry, ordered by time.
    Returns the pulses that exit toward the measurement stage, the pulses
    discarded by the safety limits, a time-ordered event log, and the list
    of modulator passages for schedule diagnostics.
    """
    if limits is None:
        limits = SimLimits()
    if not isinstance(schedule, DriveSchedule):
        schedule = DriveSchedule(tuple(schedule))
    for a, b in zip(inputs, inputs[1:]):
        if b.t < a.t:
            raise InputDomainError("input pulses must be time-ordered")

    d_loop = topology.loop_delay_s()
    d_near = topology.near_passage_delay_s()
    d_far = topology.far_passage_delay_s()
    d_storage = topology.storage_delay_s()
    d_in = 0.0   # patch-cord delays are folded into the loss budget only
    d_out = 0.0
    tr_traversal = db_to_transmission(topology.traversal_loss_db())
    tr_storage_rt = (db_to_transmission(
        2.0 * topology.element_loss_db("storage_fiber"))
        * topology.fbg_reflectivity)
    tr_in = db_to_transmission(topology.element_loss_db("input_path"))
    tr_out = db_to_transmission(
        topology.element_loss_db("circulator")
        + topology.element_loss_db("output_path"))

    retrieved: list = []
    discarded: list = []
    log: list = []
    passages: list = []

    next_id = max((p.id for p in inputs), default=-1) + 1
    seq = 0
    heap: list = []  # (time, seq, kind, pulse)

    def push(t, kind, pulse):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, pulse))
        seq += 1

    def fresh_id():
        nonlocal next_id
        i = next_id
        next_id += 1
        return i

    def deposit(pulse, reason):
        discarded.append((pulse, reason))

    for p in inputs:
        log.append(EventLogEntry(p.t, p.id, "routing", "in", p.mu, p.cycles))
        pol = apply_depolarizing(p.pol, topology.prep_error_depol)
        entered = replace(p, t=p.t + d_in, mu=p.mu * tr_in, pol=pol,
                          port="coupler.a",
                          path_transmission=p.path_transmission * tr_in)
        push(entered.t, "coupler.a", entered)

    while heap:
        t, _, kind, pulse = heapq.heappop(heap)

        if kind == "exit":
            out = replace(pulse, t=t + d_out, mu=pulse.mu * tr_out,
                          port="measurement.in",
                          path_transmission=pulse.path_transmission * tr_out)
            log.append(EventLogEntry(out.t, out.id, "circulator", "out",
                                     out.mu, out.cycles))
            if 0.0 < out.mu < limits.mu_floor:
                deposit(out, "negligible")
            else:
                log.append(EventLogEntry(out.t, out.id, "measurement", "in",
                                         out.mu, out.cycles))
                retrieved.append(out)
            continue

        if kind == "storage":
            # Down the storage line, off the grating mirror, and back.
            t_fbg = t + d_storage
            log.append(EventLogEntry(t_fbg, pulse.id, "fbg", "reflect",
                                     pulse.mu, pulse.cycles))
            t_back = t + 2.0 * d_storage
            cyc = pulse.cycles + 1
            pol = apply_depolarizing(pulse.pol, topology.depol_for_cycle(cyc))
            back = replace(pulse, t=t_back, mu=pulse.mu * tr_storage_rt,
                           pol=pol, cycles=cyc, port="coupler.b",
                           path_transmission=(pulse.path_transmission
                                              * tr_storage_rt))
            if cyc > limits.max_cycles:
                deposit(back, "cycle limit")
            elif 0.0 < back.mu < limits.mu_floor:
                deposit(back, "negligible")
            else:
                push(t_back, "coupler.b", back)
            continue

        # Coupler arrival from the external side ("coupler.a") or the
        # storage side ("coupler.b"): one full loop traversal.
        entry_port = kind.split(".")[1]
        log.append(EventLogEntry(t, pulse.id, "coupler", f"in_{entry_port}",
                                 pulse.mu, pulse.cycles))
        near = (t + d_near, pulse.width)
        far = (t + d_far, pulse.width)
        phi_near, ov_near = _drive_phases(schedule, *near, topology.v_pi)
        phi_far, ov_far = _drive_phases(schedule, *far, topology.v_pi)
        for direction, (start, width), ov in (("near", near, ov_near),
                                              ("far", far, ov_far)):
            passages.append(ModulatorPassage(
                pulse.root_id, pulse.id, pulse.cycles, direction,
                start, start + width, tuple(ov)))
            log.append(EventLogEntry(start, pulse.id, "modulator", direction,
                                     pulse.mu, pulse.cycles))

        refl, trans = sagnac_transfer(phi_near - phi_far)
        t_rec = t + d_loop
        base = replace(pulse, t=t_rec, mu=pulse.mu * tr_traversal,
                       path_transmission=(pulse.path_transmission
                                          * tr_traversal))
        # Reflection leaves by the entry port, transmission by the other.
        if entry_port == "a":
            branches = (("exit", refl), ("storage", trans))
        else:
            branches = (("storage", refl), ("exit", trans))
        first_branch = True
        for dest, fraction in branches:
            if fraction == 0.0:
                continue
            child_id = base.id if first_branch else fresh_id()
            first_branch = False
            child = replace(base, id=child_id, mu=base.mu * fraction,
                            port=f"coupler.out_{dest}")
            log.append(EventLogEntry(t_rec, child.id, "coupler",
                                     f"out_{dest}", child.mu, child.cycles))
            if dest == "storage" and 0.0 < child.mu < limits.mu_floor:
                deposit(child, "negligible")
            else:
                push(t_rec, dest, child)

    retrieved.sort(key=lambda p: (p.t, p.id))
    discarded.sort(key=lambda pr: (pr[0].t, pr[0].id))
    # Same-instant entries of one pulse keep their causal (append) order.
    log = [e for _, e in sorted(
        enumerate(log), key=lambda ie: (ie[1].time_s, ie[1].pulse_id, ie[0]))]
    passages.sort(key=lambda m: (m.t_start, m.pulse_id))
    result = SimulationResult(retrieved, discarded, log, passages,
                              inputs=list(inputs))
    _audit_conservation(result)
    return result


def _audit_conservation(result: SimulationResult) -> None:
    """Check that split fractions over all terminal records sum to one.

    For every terminal record, mu / path_transmission equals the source mu
    times the product of split fractions along its branch, so the terminal
    sum must reproduce the source mu exactly (to rounding).
    """
    per_root: dict[int, float] = {}
    for p in result.retrieved:
        per_root[p.root_id] = per_root.get(p.root_id, 0.0) + \
            p.mu / p.path_transmission
    for p, _ in result.discarded:
        per_root[p.root_id] = per_root.get(p.root_id, 0.0) + \
            p.mu / p.path_transmission
    for src in result.inputs:
        total = per_root.get(src.root_id, 0.0)
        ref = src.mu / src.path_transmission if src.path_transmission else 0.0
        if abs(total - ref) > 1e-9 * max(ref, 1.0):
            raise ContractViolationError(
                f"power audit failed for source pulse {src.id}: "
                f"{total} != {ref}")


def validate_schedule(topology: BufferTopology, schedule: DriveSchedule,
                      inputs: list, limits: SimLimits | None = None
                      ) -> list[Violation]:
    """Diagnose a drive schedule against the pulses it will act on.

    Flags, per drive window:

    * ``unintended-readout`` (error): the window touches modulator passages
      of the same pulse lineage in two different traversals, i.e. it is
      still open when the pulse returns from the grating mirror. The safe
      margin is the storage round trip plus twice the near-arm delay.
    * ``both-directions`` (error): the window covers both counter-propagating
      passages of one traversal, cancelling its own switching phase.
    * ``no-op-drive`` (warning): the window overlaps no optical passage.
    """
    if not isinstance(schedule, DriveSchedule):
        schedule = DriveSchedule(tuple(schedule))
    result = simulate(topology, schedule, inputs, limits)
    by_drive: dict[int, list[ModulatorPassage]] = {i: [] for i in
                                                   range(len(schedule))}
    for m in result.passages:
        for i, _f in m.overlaps:
            by_drive[i].append(m)

    violations: list[Violation] = []
    for i, hits in sorted(by_drive.items()):
        if not hits:
            d = schedule.pulses[i]
            violations.append(Violation(
                "warning", "no-op-drive",
                f"drive {i} at t={d.t_start:.3e}s overlaps no optical "
                "passage", i))
            continue
        roots: dict[int, list[ModulatorPassage]] = {}
        for m in hits:
            roots.setdefault(m.root_id, []).append(m)
        for root, ms in sorted(roots.items()):
            traversals = sorted({m.traversal for m in ms})
            if len(traversals) > 1:
                violations.append(Violation(
                    "error", "unintended-readout",
                    f"drive {i} is still open when pulse {root} returns "
                    f"from the storage line (touches traversals "
                    f"{traversals})", i))
            for trav in traversals:
                dirs = {m.direction for m in ms if m.traversal == trav}
                if len(dirs) == 2:
                    violations.append(Violation(
                        "error", "both-directions",
                        f"drive {i} covers both loop directions of pulse "
                        f"{root} in traversal {trav}", i))
    return violations


def storage_retrieval_schedule(topology: BufferTopology, input_pulse,
                               cycles: int, drive_width: float = 180e-9,
                               voltage: float | None = None,
                               guard: float = 20e-9) -> DriveSchedule:
    """Schedule that stores a pulse and retrieves it after ``cycles`` cycles.

    Drives target the far-arm modulator passage, opening ``guard`` seconds
    before the pulse reaches the modulator. Placing the window at the late
    passage keeps it clear of the short-arm passage of the same traversal,
    and, provided the drive is shorter than the storage round trip plus
    twice the near-arm delay, of the return pass as well. ``cycles == 0``
    needs no drive at all: the balanced loop already reflects the pulse to
    the measurement stage.
    """
    if cycles < 0:
        raise InputDomainError("cycle count must be >= 0")
    if guard < 0:
        raise InputDomainError("guard must be >= 0")
    if cycles == 0:
        return DriveSchedule()
    if voltage is None:
        voltage = topology.v_pi
    t0 = input_pulse.t  # coupler entry; patch delays are loss-only
    period = storage_period(topology)
    d_far = topology.far_passage_delay_s()
    store = DrivePulse(t0 + d_far - guard, drive_width, voltage)
    retrieve = DrivePulse(t0 + cycles * period + d_far - guard,
                          drive_width, voltage)
    return DriveSchedule((store, retrieve))


def train_schedule(topology: BufferTopology, pulses, cycles: int,
                   drive_width: float = 180e-9, voltage: float | None = None,
                   guard: float = 20e-9) -> DriveSchedule:
    """Store-and-retrieve schedule for every pulse of a train."""
    drives: list[DrivePulse] = []
    for p in pulses:
        drives.extend(storage_retrieval_schedule(
            topology, p, cycles, drive_width, voltage, guard).pulses)
    drives.sort(key=lambda d: d.t_start)
    return DriveSchedule(tuple(drives))
