"""Parameterized models of the buffer's optical elements.

The physical layout: a pulsed source (intensity-modulated laser plus
attenuator) launches weak coherent pulses through a half-wave plate and a
circulator into a routing stage. The routing stage is a fiber Sagnac loop: a
50:50 coupler whose two pigtails are joined by a delay fiber containing a
gated phase modulator placed asymmetrically, a few tens of meters from one
coupler port. The loop's second coupler port feeds a storage line terminated
by a grating mirror. Balanced, the loop reflects; a pi phase difference
between the counter-propagating directions routes the pulse across.

Everything here is a pure transfer rule acting on immutable pulse records;
propagation ordering lives in :mod:`qbuffer.engine`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ContractViolationError, InputDomainError
from .polarization import STATE_H, STATE_V, JonesOp, PolState

#: Vacuum speed of light, m/s.
C_VACUUM = 299_792_458.0

#: Loss applied per element and pass when not overridden, in dB.
DEFAULT_ELEMENT_LOSS_DB = {
    "circulator": 0.6,        # per pass through the output circulator
    "coupler": 0.0,           # excess loss of the loop coupler, per traversal
    "loop_fiber": 0.2,        # delay-loop fiber, per traversal
    "storage_fiber": 0.02,    # storage line, per one-way trip
    "input_path": 0.0,        # source side patch cords
    "output_path": 0.0,       # measurement side patch cords
}


def db_to_transmission(loss_db: float) -> float:
    """Power transmission of a ``loss_db`` attenuation."""
    return 10.0 ** (-loss_db / 10.0)


def fiber_delay(length_m: float, group_index: float) -> float:
    """Group delay of ``length_m`` of fiber: length * n_g / c."""
    if length_m < 0:
        raise InputDomainError(f"fiber length {length_m} m must be >= 0")
    if group_index < 1.0:
        raise InputDomainError(f"group index {group_index} must be >= 1")
    return length_m * group_index / C_VACUUM


@dataclass(frozen=True)
class PulseRecord:
    """One optical pulse in flight.

    ``t`` is the arrival time at the current port, ``mu`` the mean photon
    number of the weak coherent state, ``cycles`` the number of completed
    storage-line round trips. ``root_id`` names the source pulse this record
    descends from and ``path_transmission`` accumulates every pure-loss
    factor met along its path (splitting fractions excluded), which makes a
    closed power audit possible.
    """

    id: int
    t: float
    width: float
    mu: float
    pol: PolState
    port: str = "routing.in"
    cycles: int = 0
    root_id: int = -1
    path_transmission: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise InputDomainError(f"pulse width {self.width} must be > 0")
        if self.mu < 0:
            raise InputDomainError(f"mean photon number {self.mu} must be >= 0")
        if self.cycles < 0:
            raise InputDomainError(f"cycle count {self.cycles} must be >= 0")
        if self.root_id < 0:
            object.__setattr__(self, "root_id", self.id)


@dataclass(frozen=True)
class DrivePulse:
    """One high-voltage gate applied to the loop phase modulator."""

    t_start: float
    width: float = 180e-9
    voltage: float = 900.0

    def __post_init__(self):
        if self.width <= 0:
            raise InputDomainError(f"drive width {self.width} must be > 0")
        if self.voltage < 0:
            raise InputDomainError(f"drive voltage {self.voltage} must be >= 0")

    @property
    def t_end(self) -> float:
        return self.t_start + self.width


@dataclass(frozen=True)
class BufferTopology:
    """Geometry, loss budget and decoherence knobs of the buffer.

    ``depol_per_cycle`` may be a single probability applied on every storage
    cycle or a sequence indexed by cycle number (the last entry repeats for
    later cycles). ``prep_error_depol`` is a one-shot channel applied at the
    routing-stage input, standing in for state-preparation-and-measurement
    imperfection.
    """

    loop_length_m: float = 1000.0
    storage_length_m: float = 100.0
    group_index: float = 1.468
    modulator_offset_m: float = 10.0
    v_pi: float = 900.0
    modulator_loss_db: float = 0.4
    per_element_loss_db: dict = field(default_factory=dict)
    fbg_reflectivity: float = 1.0
    depol_per_cycle: tuple = (0.0,)
    prep_error_depol: float = 0.0

    def __post_init__(self):
        if self.loop_length_m <= 0:
            raise InputDomainError("loop length must be > 0")
        if self.storage_length_m < 0:
            raise InputDomainError("storage length must be >= 0")
        if self.group_index < 1.0:
            raise InputDomainError("group index must be >= 1")
        if not 0.0 < self.modulator_offset_m < self.loop_length_m:
            raise InputDomainError(
                "modulator offset must lie strictly inside the loop")
        if self.v_pi <= 0:
            raise InputDomainError("half-wave voltage must be > 0")
        if self.modulator_loss_db < 0:
            raise InputDomainError("modulator loss must be >= 0")
        if not 0.0 <= self.fbg_reflectivity <= 1.0:
            raise InputDomainError("grating reflectivity must lie in [0, 1]")
        losses = dict(DEFAULT_ELEMENT_LOSS_DB)
        unknown = set(self.per_element_loss_db) - set(losses)
        if unknown:
            raise InputDomainError(f"unknown loss elements {sorted(unknown)}")
        losses.update(self.per_element_loss_db)
        if any(v < 0 for v in losses.values()):
            raise InputDomainError("element losses must be >= 0")
        object.__setattr__(self, "per_element_loss_db", losses)
        depol = self.depol_per_cycle
        if isinstance(depol, (int, float)):
            depol = (float(depol),)
        depol = tuple(float(p) for p in depol)
        if not depol:
            depol = (0.0,)
        if any(not 0.0 <= p <= 1.0 for p in depol):
            raise InputDomainError("per-cycle depolarization must lie in [0, 1]")
        object.__setattr__(self, "depol_per_cycle", depol)
        if not 0.0 <= self.prep_error_depol <= 1.0:
            raise InputDomainError("preparation depolarization must lie in [0, 1]")

    # -- derived timing -----------------------------------------------------

    def loop_delay_s(self) -> float:
        return fiber_delay(self.loop_length_m, self.group_index)

    def storage_delay_s(self) -> float:
        """One-way trip along the storage line."""
        return fiber_delay(self.storage_length_m, self.group_index)

    def near_passage_delay_s(self) -> float:
        """Coupler entry to modulator along the short arm."""
        return fiber_delay(self.modulator_offset_m, self.group_index)

    def far_passage_delay_s(self) -> float:
        """Coupler entry to modulator along the long arm."""
        return fiber_delay(self.loop_length_m - self.modulator_offset_m,
                           self.group_index)

    # -- derived loss budget ------------------------------------------------

    def element_loss_db(self, name: str) -> float:
        return self.per_element_loss_db[name]

    def traversal_loss_db(self) -> float:
        """Loss of one full loop traversal (either direction)."""
        return (self.modulator_loss_db
                + self.element_loss_db("loop_fiber")
                + self.element_loss_db("coupler"))

    def storage_round_trip_loss_db(self) -> float:
        fbg_db = math.inf if self.fbg_reflectivity == 0.0 else \
            -10.0 * math.log10(self.fbg_reflectivity)
        return 2.0 * self.element_loss_db("storage_fiber") + fbg_db

    def cycle_loss_db(self) -> float:
        """Loss added per stored cycle: one traversal plus one storage
        round trip."""
        return self.traversal_loss_db() + self.storage_round_trip_loss_db()

    def direct_pass_loss_db(self) -> float:
        """Routing-stage input to measurement-stage input, zero cycles."""
        return (self.element_loss_db("input_path")
                + self.traversal_loss_db()
                + self.element_loss_db("circulator")
                + self.element_loss_db("output_path"))

    def depol_for_cycle(self, cycle: int) -> float:
        """Depolarization probability applied on storage cycle ``cycle``
        (1-based). Cycles past the end of the table reuse the last entry."""
        if cycle < 1:
            raise InputDomainError("cycle numbers are 1-based")
        table = self.depol_per_cycle
        return table[min(cycle, len(table)) - 1]


# -- transfer rules ---------------------------------------------------------


def generate_pulse_train(rep_rate: float, pulse_width: float, mu: float,
                         n: int, pol: PolState) -> list[PulseRecord]:
    """``n`` identical pulses at times k / rep_rate, k = 0..n-1."""
    if rep_rate <= 0:
        raise InputDomainError(f"repetition rate {rep_rate} must be > 0")
    if pulse_width <= 0:
        raise InputDomainError(f"pulse width {pulse_width} must be > 0")
    if n < 1:
        raise InputDomainError(f"pulse count {n} must be >= 1")
    if mu < 0:
        raise InputDomainError(f"mean photon number {mu} must be >= 0")
    return [
        PulseRecord(id=k, t=k / rep_rate, width=pulse_width, mu=mu, pol=pol)
        for k in range(n)
    ]


def attenuate(pulse: PulseRecord, loss_db: float) -> PulseRecord:
    """Scale mean photon number by 10^(-loss_db/10); polarization unchanged."""
    if loss_db < 0:
        raise InputDomainError(f"loss {loss_db} dB must be >= 0")
    tr = db_to_transmission(loss_db)
    return replace(pulse, mu=pulse.mu * tr,
                   path_transmission=pulse.path_transmission * tr)


def overlap_fraction(drive: DrivePulse, passage_start: float,
                     passage_width: float) -> float:
    """Fraction of the optical passage interval covered by the drive window."""
    lo = max(drive.t_start, passage_start)
    hi = min(drive.t_end, passage_start + passage_width)
    return min(1.0, max(0.0, hi - lo) / passage_width)


def modulator_phase(drive: DrivePulse | None, passage_start: float,
                    passage_width: float, v_pi: float) -> float:
    """Phase imparted on one modulator passage.

    phi = pi * (V / V_pi) * f with f the overlapped fraction of the passage;
    a partially covered passage gets a proportionally reduced mean phase.
    """
    if passage_width <= 0:
        raise InputDomainError(f"passage width {passage_width} must be > 0")
    if v_pi <= 0:
        raise InputDomainError(f"half-wave voltage {v_pi} must be > 0")
    if drive is None:
        return 0.0
    f = overlap_fraction(drive, passage_start, passage_width)
    return math.pi * (drive.voltage / v_pi) * f


def sagnac_transfer(delta_phi: float) -> tuple[float, float]:
    """Loop-mirror power split for a direction phase difference ``delta_phi``.

    Returns (R, T): R = cos^2(dphi/2) back out the entry port, T = 1 - R out
    the opposite port, so R + T = 1 holds exactly.
    """
    r = math.cos(delta_phi / 2.0) ** 2
    return r, 1.0 - r


def pbs_project(pulse: PulseRecord, basis_unitary: JonesOp
                ) -> tuple[PulseRecord, PulseRecord]:
    """Split a pulse on a polarizing beamsplitter after a basis rotation.

    The returned pair carries mu * P(H) and mu * P(V) in the rotated frame;
    each output is purely polarized along its port axis.
    """
    if not basis_unitary.is_unitary():
        raise ContractViolationError("basis rotation is not unitary within 1e-9")
    u = basis_unitary.m
    rho = u @ pulse.pol.rho @ u.conj().T
    p_h = min(max(float(rho[0, 0].real), 0.0), 1.0)
    p_v = 1.0 - p_h
    out_h = replace(pulse, mu=pulse.mu * p_h, pol=STATE_H, port="pbs.h")
    out_v = replace(pulse, mu=pulse.mu * p_v, pol=STATE_V, port="pbs.v")
    return out_h, out_v
