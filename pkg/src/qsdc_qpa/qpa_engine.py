"""The two-qubit privacy amplification step and its recursive cascade.

One step runs CNOT, H on the control, CNOT, then measures the target in the
Z basis. The control is kept as the condensed qubit. For BB84 inputs the
kept state is again a BB84 state, fixed by the two input labels and the
measured bit; ``QPA_TABLES`` holds that map as hard-coded data, and
``verify_tables`` checks it against the amplitude-level circuit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from qsdc_qpa.quantum_core import (
    BB84_LABELS,
    Bb84Label,
    DensityMatrix2,
    Qubit,
    TwoQubitState,
    apply_cnot,
    apply_h_control,
    bb84_to_qubit,
    measure_second_z,
    mixture_density,
    overlap,
    tensor,
)

PZ, MZ, PX, MX = Bb84Label.PLUS_Z, Bb84Label.MINUS_Z, Bb84Label.PLUS_X, Bb84Label.MINUS_X

# Force a branch of a balanced measurement (p0 = 1/2).
FORCE_OUTCOME_0 = 0.0
FORCE_OUTCOME_1 = 0.999

TABLE_OVERLAP_TOL = 1e-12

Table = Mapping[tuple[Bb84Label, Bb84Label], Bb84Label]


def _table(rows: dict[Bb84Label, tuple[Bb84Label, ...]]) -> dict[tuple[Bb84Label, Bb84Label], Bb84Label]:
    # rows are keyed by the target state; columns run over the control state
    # in the order +z, -z, +x, -x
    return {
        (control, target): out
        for target, row in rows.items()
        for control, out in zip(BB84_LABELS, row)
    }


# Output state of the control qubit, keyed by (control, target), one table
# per measured target bit.
QPA_TABLES: dict[int, dict[tuple[Bb84Label, Bb84Label], Bb84Label]] = {
    0: _table({
        PZ: (PZ, MZ, MX, PX),
        MZ: (MZ, PZ, PX, MX),
        PX: (PX, MX, PZ, MZ),
        MX: (MX, PX, MZ, PZ),
    }),
    1: _table({
        PZ: (MZ, PZ, PX, MX),
        MZ: (PZ, MZ, MX, PX),
        PX: (PX, MX, PZ, MZ),
        MX: (MX, PX, MZ, PZ),
    }),
}


@dataclass(frozen=True)
class QpaOutcome:
    retained: Qubit
    measured_bit: int


@dataclass(frozen=True)
class CascadeRecord:
    """Result of condensing one group of qubits.

    ``group_labels`` is Bob's preparation record for the group, in cascade
    order; ``announced_bits`` are the published target measurement results.
    """

    group_labels: tuple[Bb84Label, ...]
    announced_bits: tuple[int, ...]
    retained: Qubit

    def __post_init__(self) -> None:
        if len(self.announced_bits) != len(self.group_labels) - 1:
            raise ValueError("a cascade over m qubits announces exactly m-1 bits")


def qpa_circuit(q1: Qubit, q2: Qubit) -> TwoQubitState:
    """CNOT, H on the first qubit, CNOT, applied to ``q1 (x) q2``."""
    return apply_cnot(apply_h_control(apply_cnot(tensor(q1, q2))))


def qpa_step(q1: Qubit, q2: Qubit, u: float) -> QpaOutcome:
    bit, retained = measure_second_z(qpa_circuit(q1, q2), u)
    return QpaOutcome(retained, bit)


def table_lookup(
    control: Bb84Label, target: Bb84Label, outcome: int, tables: Mapping[int, Table] = QPA_TABLES
) -> Bb84Label:
    return tables[outcome][(control, target)]


def uniform_stream(randomness: Iterable[float] | np.random.Generator) -> Iterator[float]:
    """Adapt a generator or any iterable of uniforms to a float iterator."""
    if isinstance(randomness, np.random.Generator):
        return iter(lambda: float(randomness.random()), None)
    return iter(randomness)


def cascade(
    group: Sequence[tuple[Bb84Label, Qubit]], randomness: Iterable[float] | np.random.Generator
) -> CascadeRecord:
    """Condense a group into one qubit by folding ``qpa_step`` left to right.

    The retained qubit of each step is the control of the next; the group's
    first qubit is the initial control. One uniform is consumed per step.
    """
    if not group:
        raise ValueError("cannot condense an empty group")
    stream = uniform_stream(randomness)
    labels = tuple(label for label, _ in group)
    retained = group[0][1]
    bits = []
    for _, target in group[1:]:
        try:
            u = next(stream)
        except StopIteration:
            raise ValueError("randomness stream exhausted during cascade") from None
        step = qpa_step(retained, target, u)
        retained = step.retained
        bits.append(step.measured_bit)
    return CascadeRecord(labels, tuple(bits), retained)


def bob_track(
    labels: Sequence[Bb84Label], announced_bits: Sequence[int], tables: Mapping[int, Table] = QPA_TABLES
) -> Bb84Label:
    """Classical tracking of the condensed state from the preparation
    labels and the announced bits."""
    if not labels:
        raise ValueError("labels must be non-empty")
    if len(announced_bits) != len(labels) - 1:
        raise ValueError(
            f"expected {len(labels) - 1} announced bits for {len(labels)} labels, got {len(announced_bits)}"
        )
    state = labels[0]
    for target, bit in zip(labels[1:], announced_bits):
        state = tables[bit][(state, target)]
    return state


def eve_marginal(
    known_control: Bb84Label, outcome: int, tables: Mapping[int, Table] = QPA_TABLES
) -> DensityMatrix2:
    """Eve's state for the condensed qubit when she knows the control but
    the target is a uniformly random BB84 state."""
    return mixture_density(
        (0.25, bb84_to_qubit(tables[outcome][(known_control, t)])) for t in BB84_LABELS
    )


def is_double_latin(table: Table) -> bool:
    """Every row (fixed target) and column (fixed control) is a permutation
    of the four labels."""
    everything = set(BB84_LABELS)
    for fixed in BB84_LABELS:
        if {table[(c, fixed)] for c in BB84_LABELS} != everything:
            return False
        if {table[(fixed, t)] for t in BB84_LABELS} != everything:
            return False
    return True


def branch_probability_zero(control: Bb84Label, target: Bb84Label) -> float:
    s = qpa_circuit(bb84_to_qubit(control), bb84_to_qubit(target))
    return abs(s.c00) ** 2 + abs(s.c10) ** 2


@dataclass
class TableCheck:
    control: Bb84Label
    target: Bb84Label
    outcome: int
    expected: Bb84Label | None
    overlap: float
    passed: bool

    @property
    def deviation(self) -> float:
        return 1.0 - self.overlap


@dataclass
class MarginalCheck:
    control: Bb84Label
    outcome: int
    deviation: float
    passed: bool


@dataclass
class TableReport:
    entries: list[TableCheck] = field(default_factory=list)
    marginals: list[MarginalCheck] = field(default_factory=list)
    double_latin: dict[int, bool] = field(default_factory=dict)
    closure: dict[int, bool] = field(default_factory=dict)
    branch_balance_max_deviation: float = 0.0

    @property
    def branch_balance_ok(self) -> bool:
        return self.branch_balance_max_deviation <= 1e-12

    @property
    def passed(self) -> bool:
        return (
            all(e.passed for e in self.entries)
            and all(m.passed for m in self.marginals)
            and all(self.double_latin.values())
            and all(self.closure.values())
            and self.branch_balance_ok
        )

    @property
    def failures(self) -> list[str]:
        out = [
            f"entry control={e.control} target={e.target} outcome={e.outcome}"
            for e in self.entries
            if not e.passed
        ]
        out += [f"marginal control={m.control} outcome={m.outcome}" for m in self.marginals if not m.passed]
        out += [f"double-latin table {k}" for k, ok in self.double_latin.items() if not ok]
        out += [f"closure table {k}" for k, ok in self.closure.items() if not ok]
        if not self.branch_balance_ok:
            out.append("branch balance")
        return out


def verify_tables(tables: Mapping[int, Table] = QPA_TABLES, marginal_tol: float = 1e-12) -> TableReport:
    """Exhaustively check ``tables`` against the amplitude-level circuit.

    Covers all 32 (control, target, outcome) entries with forced branches,
    BB84 closure, the double-Latin structure, branch balance and the
    no-knowledge marginal for all 8 (control, outcome) pairs.
    """
    report = TableReport()
    forced = {0: FORCE_OUTCOME_0, 1: FORCE_OUTCOME_1}
    for outcome, (control, target) in itertools.product((0, 1), itertools.product(BB84_LABELS, BB84_LABELS)):
        expected = tables[outcome].get((control, target))
        step = qpa_step(bb84_to_qubit(control), bb84_to_qubit(target), forced[outcome])
        if step.measured_bit != outcome or not isinstance(expected, Bb84Label):
            report.entries.append(TableCheck(control, target, outcome, expected, 0.0, False))
            continue
        ov = overlap(step.retained, bb84_to_qubit(expected))
        report.entries.append(
            TableCheck(control, target, outcome, expected, ov, ov >= 1.0 - TABLE_OVERLAP_TOL)
        )

    for outcome, table in tables.items():
        report.closure[outcome] = len(table) == 16 and all(isinstance(v, Bb84Label) for v in table.values())
        report.double_latin[outcome] = report.closure[outcome] and is_double_latin(table)

    report.branch_balance_max_deviation = max(
        abs(branch_probability_zero(c, t) - 0.5) for c in BB84_LABELS for t in BB84_LABELS
    )

    half_identity = 0.5 * np.eye(2)
    for control, outcome in itertools.product(BB84_LABELS, (0, 1)):
        try:
            dev = eve_marginal(control, outcome, tables).max_deviation(half_identity)
        except (KeyError, ValueError):
            dev = float("inf")
        report.marginals.append(MarginalCheck(control, outcome, dev, dev <= marginal_tol))

    return report
