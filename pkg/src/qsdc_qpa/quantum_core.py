"""Exact complex-amplitude one- and two-qubit pure states.

Amplitudes are plain Python ``complex`` values (double precision). All
state types are frozen dataclasses, and every operation is a pure function:
measurements take their randomness as an explicit uniform number ``u`` in
[0, 1) so that branches can be forced from tests.

Two-qubit amplitudes are indexed ``c<first><second>``. The first qubit is
the control (the one retained after privacy amplification), the second is
the target (the one measured and discarded).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

NORM_TOL = 1e-12
COLLAPSE_TOL = 1e-12
PHASE_TOL = 1e-9

INV_SQRT2 = 1.0 / math.sqrt(2.0)


class CollapseError(ValueError):
    """Raised when a measurement is asked to collapse onto a branch of
    (numerically) zero probability."""


class Basis(Enum):
    Z = "Z"
    X = "X"


class Bb84Label(Enum):
    """The four BB84 preparation states."""

    PLUS_Z = "+z"
    MINUS_Z = "-z"
    PLUS_X = "+x"
    MINUS_X = "-x"

    @property
    def basis(self) -> Basis:
        return Basis.Z if self in (Bb84Label.PLUS_Z, Bb84Label.MINUS_Z) else Basis.X

    @property
    def orthogonal(self) -> Bb84Label:
        """The other label of the same basis."""
        return _ORTHOGONAL[self]

    def __str__(self) -> str:
        return self.value


_ORTHOGONAL = {
    Bb84Label.PLUS_Z: Bb84Label.MINUS_Z,
    Bb84Label.MINUS_Z: Bb84Label.PLUS_Z,
    Bb84Label.PLUS_X: Bb84Label.MINUS_X,
    Bb84Label.MINUS_X: Bb84Label.PLUS_X,
}

# Fixed enumeration order; used wherever a label is drawn from an integer.
BB84_LABELS: tuple[Bb84Label, ...] = tuple(Bb84Label)

# (positive outcome, negative outcome) of each measurement basis
BASIS_LABELS = {
    Basis.Z: (Bb84Label.PLUS_Z, Bb84Label.MINUS_Z),
    Basis.X: (Bb84Label.PLUS_X, Bb84Label.MINUS_X),
}


def basis_of(label: Bb84Label) -> Basis:
    return label.basis


def _check_finite(*values: complex) -> None:
    for v in values:
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValueError(f"non-finite amplitude {v!r}")


@dataclass(frozen=True, slots=True)
class Qubit:
    """Single-qubit pure state ``a|0> + b|1>``."""

    a: complex
    b: complex

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))
        _check_finite(self.a, self.b)
        if abs(self.norm_squared() - 1.0) > NORM_TOL:
            raise ValueError(f"qubit is not normalized: |a|^2+|b|^2 = {self.norm_squared()!r}")

    def norm_squared(self) -> float:
        return abs(self.a) ** 2 + abs(self.b) ** 2

    def to_array(self) -> np.ndarray:
        return np.array([self.a, self.b], dtype=complex)


@dataclass(frozen=True, slots=True)
class TwoQubitState:
    """Two-qubit pure state over ``|00>, |01>, |10>, |11>``."""

    c00: complex
    c01: complex
    c10: complex
    c11: complex

    def __post_init__(self) -> None:
        for name in ("c00", "c01", "c10", "c11"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        _check_finite(self.c00, self.c01, self.c10, self.c11)
        if abs(self.norm_squared() - 1.0) > NORM_TOL:
            raise ValueError(f"two-qubit state is not normalized: {self.norm_squared()!r}")

    def norm_squared(self) -> float:
        return abs(self.c00) ** 2 + abs(self.c01) ** 2 + abs(self.c10) ** 2 + abs(self.c11) ** 2

    def to_array(self) -> np.ndarray:
        return np.array([self.c00, self.c01, self.c10, self.c11], dtype=complex)

    @classmethod
    def from_array(cls, vec: Iterable[complex]) -> TwoQubitState:
        c00, c01, c10, c11 = (complex(v) for v in vec)
        return cls(c00, c01, c10, c11)


@dataclass(frozen=True, slots=True)
class DensityMatrix2:
    """2x2 Hermitian, unit-trace, positive semidefinite matrix."""

    m00: complex
    m01: complex
    m10: complex
    m11: complex

    def __post_init__(self) -> None:
        for name in ("m00", "m01", "m10", "m11"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        _check_finite(self.m00, self.m01, self.m10, self.m11)
        if abs(self.m01 - self.m10.conjugate()) > NORM_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(self.m00.imag) > NORM_TOL or abs(self.m11.imag) > NORM_TOL:
            raise ValueError("density matrix has complex diagonal")
        if abs(self.trace() - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace is {self.trace()!r}, expected 1")
        lo, hi = self.eigenvalues()
        if lo < -NORM_TOL or hi > 1.0 + NORM_TOL:
            raise ValueError(f"density matrix eigenvalues ({lo}, {hi}) outside [0, 1]")

    def trace(self) -> complex:
        return self.m00 + self.m11

    def eigenvalues(self) -> tuple[float, float]:
        """Ascending eigenvalues, closed form for a 2x2 Hermitian matrix."""
        mean = 0.5 * (self.m00.real + self.m11.real)
        half_diff = 0.5 * (self.m00.real - self.m11.real)
        radius = math.hypot(half_diff, abs(self.m01))
        return mean - radius, mean + radius

    def to_array(self) -> np.ndarray:
        return np.array([[self.m00, self.m01], [self.m10, self.m11]], dtype=complex)

    def max_deviation(self, other: np.ndarray) -> float:
        """Largest entrywise modulus of ``self - other``."""
        return float(np.max(np.abs(self.to_array() - np.asarray(other, dtype=complex))))


_BB84_AMPLITUDES = {
    Bb84Label.PLUS_Z: (1.0, 0.0),
    Bb84Label.MINUS_Z: (0.0, 1.0),
    Bb84Label.PLUS_X: (INV_SQRT2, INV_SQRT2),
    Bb84Label.MINUS_X: (INV_SQRT2, -INV_SQRT2),
}

_BB84_QUBITS = {label: Qubit(*amps) for label, amps in _BB84_AMPLITUDES.items()}


def bb84_to_qubit(label: Bb84Label) -> Qubit:
    return _BB84_QUBITS[label]


def tensor(q1: Qubit, q2: Qubit) -> TwoQubitState:
    """Product state ``q1 (x) q2``; ``q1`` becomes the first (control) qubit."""
    return TwoQubitState(q1.a * q2.a, q1.a * q2.b, q1.b * q2.a, q1.b * q2.b)


def apply_cnot(s: TwoQubitState) -> TwoQubitState:
    """CNOT with the first qubit as control."""
    return TwoQubitState(s.c00, s.c01, s.c11, s.c10)


def apply_h_control(s: TwoQubitState) -> TwoQubitState:
    """Hadamard on the first qubit."""
    return TwoQubitState(
        (s.c00 + s.c10) * INV_SQRT2,
        (s.c01 + s.c11) * INV_SQRT2,
        (s.c00 - s.c10) * INV_SQRT2,
        (s.c01 - s.c11) * INV_SQRT2,
    )


def apply_flip(q: Qubit) -> Qubit:
    """The encoding flip ``i*sigma_y``: (a, b) -> (b, -a).

    Sends each BB84 state to the orthogonal state of its own basis, up to a
    global phase.
    """
    return Qubit(q.b, -q.a)


def measure_second_z(s: TwoQubitState, u: float) -> tuple[int, Qubit]:
    """Measure the second qubit in the Z basis.

    Outcome 0 is selected iff ``u < p0``. Returns the outcome and the
    renormalized conditional state of the first qubit.

    Raises:
        CollapseError: if the selected branch has probability below 1e-12.
    """
    p0 = abs(s.c00) ** 2 + abs(s.c10) ** 2
    if u < p0:
        outcome, a, b, p = 0, s.c00, s.c10, p0
    else:
        outcome, a, b = 1, s.c01, s.c11
        p = abs(a) ** 2 + abs(b) ** 2
    if p < COLLAPSE_TOL:
        raise CollapseError(f"branch {outcome} has probability {p!r}")
    scale = 1.0 / math.sqrt(p)
    return outcome, Qubit(a * scale, b * scale)


def measure_qubit(q: Qubit, basis: Basis, u: float) -> Bb84Label:
    """Projective measurement in ``basis``; returns the collapsed label.

    The positive outcome (``+z`` or ``+x``) is selected iff ``u`` is below
    its Born probability.
    """
    if basis is Basis.Z:
        p_plus = abs(q.a) ** 2
    else:
        p_plus = abs(q.a + q.b) ** 2 * 0.5
    plus, minus = BASIS_LABELS[basis]
    return plus if u < p_plus else minus


def overlap(q1: Qubit, q2: Qubit) -> float:
    """``|<q1|q2>|``."""
    return abs(q1.a.conjugate() * q2.a + q1.b.conjugate() * q2.b)


def equal_up_to_phase(q1: Qubit, q2: Qubit, tol: float = PHASE_TOL) -> bool:
    return overlap(q1, q2) >= 1.0 - tol


def global_phase(q1: Qubit, q2: Qubit) -> complex:
    """Unit phase ``z`` such that ``q2 ~ z * q1`` (meaningful only when the
    states are equal up to phase)."""
    inner = q1.a.conjugate() * q2.a + q1.b.conjugate() * q2.b
    if abs(inner) == 0.0:
        return 1.0 + 0.0j
    return cmath.exp(1j * cmath.phase(inner))


def mixture_density(entries: Iterable[tuple[float, Qubit]]) -> DensityMatrix2:
    """Density matrix of the ensemble ``sum_k w_k |q_k><q_k|``."""
    entries = list(entries)
    if not entries:
        raise ValueError("mixture needs at least one entry")
    total = 0.0
    m00 = m01 = m10 = m11 = 0j
    for w, q in entries:
        if w < 0:
            raise ValueError(f"negative mixture weight {w!r}")
        total += w
        m00 += w * q.a * q.a.conjugate()
        m01 += w * q.a * q.b.conjugate()
        m10 += w * q.b * q.a.conjugate()
        m11 += w * q.b * q.b.conjugate()
    if abs(total - 1.0) > NORM_TOL:
        raise ValueError(f"mixture weights sum to {total!r}, expected 1")
    return DensityMatrix2(m00, m01, m10, m11)
