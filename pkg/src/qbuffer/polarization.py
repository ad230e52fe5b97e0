"""2x2 polarization algebra in the {|H>, |V>} basis.

States are density matrices rather than Jones vectors so that pure launch
states and partially depolarized states after many storage cycles share one
representation. Optical elements act as Jones matrices by conjugation
(rho -> U rho U+); gradual loss of polarization coherence is modeled by the
isotropic depolarizing channel rho -> (1-p) rho + p I/2, which shrinks the
Bloch vector by exactly (1-p).

Global optical phase is not tracked here; interferometric phase differences
are handled explicitly by the loop-routing model in :mod:`qbuffer.components`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InputDomainError

# Tolerance for algebraic identities we maintain internally, and the looser
# tolerance applied to user-provided inputs.
ALG_TOL = 1e-12
INPUT_TOL = 1e-9

_I2 = np.eye(2, dtype=np.complex128)


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.shape != (2, 2):
        raise InputDomainError(f"expected a 2x2 matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class PolState:
    """Polarization density matrix. Hermitian, unit trace, PSD."""

    rho: np.ndarray

    def __post_init__(self):
        rho = _as_matrix(self.rho)
        if not np.isfinite(rho).all():
            raise InputDomainError("density matrix contains non-finite entries")
        if abs(np.trace(rho) - 1.0) > INPUT_TOL:
            raise InputDomainError(f"trace(rho) = {np.trace(rho)} != 1")
        if np.abs(rho - rho.conj().T).max() > INPUT_TOL:
            raise InputDomainError("density matrix is not Hermitian")
        ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        if ev.min() < -INPUT_TOL or ev.max() > 1.0 + INPUT_TOL:
            raise InputDomainError(f"eigenvalues {ev} outside [0, 1]")
        rho = rho.copy()
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_jones(cls, vec) -> "PolState":
        """Pure state |v><v| from a (not necessarily normalized) Jones vector."""
        v = np.asarray(vec, dtype=np.complex128).reshape(2)
        n = np.linalg.norm(v)
        if n == 0 or not np.isfinite(n):
            raise InputDomainError("Jones vector must be nonzero and finite")
        v = v / n
        return cls(np.outer(v, v.conj()))

    @property
    def bloch_vector(self) -> np.ndarray:
        """Stokes-like (s1, s2, s3) with |s| = 1 for pure states."""
        r = self.rho
        return np.array(
            [
                2.0 * r[0, 1].real,
                -2.0 * r[0, 1].imag,
                (r[0, 0] - r[1, 1]).real,
            ]
        )

    @property
    def bloch_length(self) -> float:
        return float(np.linalg.norm(self.bloch_vector))

    @property
    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)


@dataclass(frozen=True)
class JonesOp:
    """2x2 Jones matrix of an optical element."""

    m: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.m)
        if not np.isfinite(m).all():
            raise InputDomainError("Jones matrix contains non-finite entries")
        # Passive elements must not amplify.
        smax = np.linalg.norm(m, 2)
        if smax > 1.0 + INPUT_TOL:
            raise InputDomainError(f"largest singular value {smax} exceeds 1")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    def is_unitary(self, tol: float = INPUT_TOL) -> bool:
        return bool(np.abs(self.m @ self.m.conj().T - _I2).max() <= tol)

    @classmethod
    def identity(cls) -> "JonesOp":
        return cls(_I2)


def hwp_matrix(theta: float) -> JonesOp:
    """Half-wave plate with its fast axis at ``theta`` radians.

    Returns [[cos 2t, sin 2t], [sin 2t, -cos 2t]]; unitary and involutive.
    """
    if not math.isfinite(theta):
        raise InputDomainError("HWP angle must be finite")
    c, s = math.cos(2.0 * theta), math.sin(2.0 * theta)
    return JonesOp(np.array([[c, s], [s, -c]], dtype=np.complex128))


def apply_unitary(state: PolState, u: JonesOp) -> PolState:
    """Conjugate a state by a unitary element: rho -> U rho U+."""
    if not u.is_unitary():
        raise ContractViolationError("element is not unitary within 1e-9")
    rho = u.m @ state.rho @ u.m.conj().T
    rho = 0.5 * (rho + rho.conj().T)  # kill rounding drift off Hermitian
    return PolState(rho)


def apply_depolarizing(state: PolState, p: float) -> PolState:
    """Isotropic depolarizing channel rho -> (1-p) rho + p I/2."""
    if not (0.0 <= p <= 1.0):
        raise InputDomainError(f"depolarization probability {p} outside [0, 1]")
    return PolState((1.0 - p) * state.rho + (p / 2.0) * _I2)


def projection_probability(state: PolState, axis) -> float:
    """Probability <a|rho|a> of projecting onto a unit Jones vector ``axis``."""
    a = np.asarray(axis, dtype=np.complex128).reshape(2)
    if abs(np.linalg.norm(a) - 1.0) > INPUT_TOL:
        raise InputDomainError("projection axis must be normalized within 1e-9")
    p = float(np.vdot(a, state.rho @ a).real)
    return min(max(p, 0.0), 1.0)


# Canonical axes and states. D/A are the +-45 degree superpositions.
AXIS_H = np.array([1.0, 0.0], dtype=np.complex128)
AXIS_V = np.array([0.0, 1.0], dtype=np.complex128)
AXIS_D = np.array([1.0, 1.0], dtype=np.complex128) / math.sqrt(2.0)
AXIS_A = np.array([1.0, -1.0], dtype=np.complex128) / math.sqrt(2.0)

STATE_H = PolState.from_jones(AXIS_H)
STATE_V = PolState.from_jones(AXIS_V)
STATE_D = PolState.from_jones(AXIS_D)
STATE_A = PolState.from_jones(AXIS_A)
