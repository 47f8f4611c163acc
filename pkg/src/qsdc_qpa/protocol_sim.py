"""Four-step direct-communication protocol with privacy amplification.

Bob prepares a batch of BB84 photons and sends it to Alice over a channel
that may be ideal, attacked by an intercept-resend eavesdropper, or
depolarizing. Alice spends a random subset on an error check; if the
detected error rate is below threshold she condenses the rest in groups of
``m`` with the QPA cascade, encodes one message bit per condensed qubit
(identity or ``i*sigma_y``) and returns them over an ideal channel. Bob
tracks every condensed state classically and decodes.

A *batch* is a list of ``(label, qubit)`` pairs indexed by photon position.
The label is Bob's private preparation record kept alongside the photon
for bookkeeping; channel and Alice-side operations act on the qubit only,
apart from analysis flags (Eve's ``knows``).

Randomness comes from one root seed. Each stage draws from its own stream
so stages are reproducible independently of one another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from qsdc_qpa.qpa_engine import CascadeRecord, bob_track, cascade
from qsdc_qpa.quantum_core import (
    BASIS_LABELS,
    BB84_LABELS,
    Basis,
    Bb84Label,
    Qubit,
    apply_flip,
    bb84_to_qubit,
    measure_qubit,
)

STREAM_PREPARE = 1
STREAM_CHANNEL = 2
STREAM_CHECK = 3
STREAM_CONDENSE = 4
STREAM_DECODE = 5
STREAM_EVE_GUESS = 6
STREAM_LEAKAGE = 7

LEAKAGE_CHUNK = 1 << 16

MAX_SEED = 2**64 - 1

_BASES = (Basis.Z, Basis.X)

Batch = list[tuple[Bb84Label, Qubit]]


class ConfigError(ValueError):
    """Invalid protocol or experiment configuration."""


class ErrorEstimationError(ValueError):
    """The check sample contains no basis-matched entries."""


class CapacityError(ValueError):
    """Message longer than the number of condensed qubits."""


def stage_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for ``stream`` derived from the root seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _check_seed(seed: int) -> None:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool) or not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")


class ChannelKind(Enum):
    IDEAL = "ideal"
    INTERCEPT_RESEND = "intercept"
    DEPOLARIZING = "depolarizing"


@dataclass(frozen=True)
class ChannelModel:
    """Forward channel. ``rate`` is the interception probability for
    intercept-resend, the replacement probability for depolarizing, and is
    ignored for the ideal channel."""

    kind: ChannelKind = ChannelKind.IDEAL
    rate: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.kind, ChannelKind):
            object.__setattr__(self, "kind", ChannelKind(self.kind))
        if not (0.0 <= self.rate <= 1.0):
            raise ConfigError(f"channel rate must lie in [0, 1], got {self.rate!r}")


@dataclass(frozen=True)
class ProtocolConfig:
    n_batch: int
    message_bits: tuple[int, ...] = ()
    check_fraction: float = 0.1
    error_threshold: float = 0.05
    group_size_m: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "message_bits", tuple(int(b) for b in self.message_bits))
        self.validate()

    @property
    def check_size(self) -> int:
        return round(self.n_batch * self.check_fraction)

    @property
    def capacity(self) -> int:
        """Number of condensed qubits a completed run produces."""
        return (self.n_batch - self.check_size) // self.group_size_m

    def validate(self) -> None:
        if not isinstance(self.n_batch, int) or self.n_batch < 1:
            raise ConfigError(f"n_batch must be a positive integer, got {self.n_batch!r}")
        if not (0.0 < self.check_fraction < 1.0):
            raise ConfigError(f"check_fraction must lie in (0, 1), got {self.check_fraction!r}")
        if not (0.0 <= self.error_threshold <= 1.0):
            raise ConfigError(f"error_threshold must lie in [0, 1], got {self.error_threshold!r}")
        if not isinstance(self.group_size_m, int) or self.group_size_m < 1:
            raise ConfigError(f"group_size_m must be a positive integer, got {self.group_size_m!r}")
        if any(b not in (0, 1) for b in self.message_bits):
            raise ConfigError("message_bits must contain only 0 and 1")
        _check_seed(self.seed)
        if self.check_size < 1:
            raise ConfigError("check sample is empty after rounding n_batch * check_fraction")
        if self.capacity < max(1, len(self.message_bits)):
            raise ConfigError(
                f"n_batch * (1 - check_fraction) / group_size_m gives {self.capacity} condensed qubits, "
                f"need {max(1, len(self.message_bits))} for the message"
            )


@dataclass(frozen=True)
class EveRecord:
    intercepted: bool = False
    basis_guess: Basis | None = None
    observed_label: Bb84Label | None = None
    knows: bool = False


@dataclass
class ProtocolResult:
    detected_error_rate_e: float
    inferred_r: float
    aborted: bool
    decoded_message: tuple[int, ...] | None
    message_bit_errors: int
    eve_known_condensed_fraction: float
    condensed_count: int
    check_sample_size: int = 0
    matched_check_size: int = 0
    eve_bit_guess_accuracy: float | None = None


@dataclass(frozen=True)
class LeakageEstimate:
    r: float
    m: int
    trials: int
    observed_p: float
    predicted_p: float
    std_error: float
    known_count: int = field(default=0, compare=False)

    @property
    def z(self) -> float:
        """Standardized deviation of observed from predicted.

        Uses the observed binomial standard error; falls back to the one
        implied by the prediction when the observed one is zero.
        """
        diff = self.observed_p - self.predicted_p
        if diff == 0.0:
            return 0.0
        se = self.std_error or math.sqrt(self.predicted_p * (1.0 - self.predicted_p) / self.trials)
        return diff / se if se > 0 else math.copysign(math.inf, diff)


def bob_prepare_batch(n: int, rng: np.random.Generator) -> Batch:
    if n < 1:
        raise ConfigError("batch size must be at least 1")
    return [(BB84_LABELS[i], bb84_to_qubit(BB84_LABELS[i])) for i in rng.integers(0, 4, size=n)]


def channel_transmit(
    batch: Sequence[tuple[Bb84Label, Qubit]], model: ChannelModel, rng: np.random.Generator
) -> tuple[Batch, list[EveRecord]]:
    """Send ``batch`` through ``model``.

    Intercept-resend: each photon is taken with probability ``rate``, measured
    in a random basis and replaced by the observed BB84 state. Eve's
    knowledge is complete iff her basis matched the preparation basis.
    Depolarizing: with probability ``rate`` the photon is replaced by a
    uniformly random BB84 state and Eve learns nothing.
    """
    n = len(batch)
    if model.kind is ChannelKind.IDEAL:
        return list(batch), [EveRecord()] * n

    hit = rng.random(n) < model.rate
    if model.kind is ChannelKind.DEPOLARIZING:
        replacement = rng.integers(0, 4, size=n)
        out = [
            (label, bb84_to_qubit(BB84_LABELS[replacement[i]])) if hit[i] else (label, q)
            for i, (label, q) in enumerate(batch)
        ]
        return out, [EveRecord()] * n

    bases = rng.integers(0, 2, size=n)
    uniforms = rng.random(n)
    out: Batch = []
    records: list[EveRecord] = []
    for i, (label, q) in enumerate(batch):
        if not hit[i]:
            out.append((label, q))
            records.append(EveRecord())
            continue
        basis = _BASES[bases[i]]
        seen = measure_qubit(q, basis, uniforms[i])
        out.append((label, bb84_to_qubit(seen)))
        records.append(EveRecord(True, basis, seen, basis is label.basis))
    return out, records


def alice_check(
    batch: Sequence[tuple[Bb84Label, Qubit]], check_fraction: float, rng: np.random.Generator
) -> tuple[list[tuple[int, Basis, Bb84Label]], list[int]]:
    """Measure a uniformly sampled subset in random bases.

    Returns the published ``(index, basis, result)`` triples in index order
    and the remaining indices in batch order.
    """
    if not (0.0 < check_fraction < 1.0):
        raise ConfigError(f"check_fraction must lie in (0, 1), got {check_fraction!r}")
    n = len(batch)
    k = round(n * check_fraction)
    if k < 1:
        raise ConfigError("check sample is empty after rounding")
    chosen = np.sort(rng.choice(n, size=k, replace=False))
    bases = rng.integers(0, 2, size=k)
    uniforms = rng.random(k)
    published = []
    for j, idx in enumerate(chosen):
        basis = _BASES[bases[j]]
        published.append((int(idx), basis, measure_qubit(batch[idx][1], basis, uniforms[j])))
    taken = set(int(i) for i in chosen)
    remaining = [i for i in range(n) if i not in taken]
    return published, remaining


def matched_check_entries(
    published: Sequence[tuple[int, Basis, Bb84Label]], bob_labels: Sequence[Bb84Label]
) -> list[tuple[int, Basis, Bb84Label]]:
    return [p for p in published if p[1] is bob_labels[p[0]].basis]


def estimate_error_rate(
    published: Sequence[tuple[int, Basis, Bb84Label]], bob_labels: Sequence[Bb84Label]
) -> float:
    """Disagreement fraction over check entries measured in Bob's basis."""
    if not published:
        raise ErrorEstimationError("no published check results")
    matched = matched_check_entries(published, bob_labels)
    if not matched:
        raise ErrorEstimationError("no check result was measured in the preparation basis")
    wrong = sum(1 for idx, _, seen in matched if seen is not bob_labels[idx])
    return wrong / len(matched)


def infer_interception_rate(e: float) -> float:
    """Interception fraction implied by error rate ``e``: intercept-resend
    errs on a quarter of the photons it touches."""
    if not (0.0 <= e <= 1.0):
        raise ValueError(f"error rate must lie in [0, 1], got {e!r}")
    return min(4.0 * e, 1.0)


def alice_condense(
    remaining: Sequence[tuple[Bb84Label, Qubit]], m: int, rng: np.random.Generator
) -> list[CascadeRecord]:
    """Cascade consecutive groups of ``m``; a trailing partial group is dropped."""
    if m < 1:
        raise ConfigError("group size must be at least 1")
    if len(remaining) < m:
        raise ConfigError(f"{len(remaining)} qubits left, need at least m={m} to condense")
    groups = len(remaining) // m
    uniforms = rng.random(groups * (m - 1))
    return [
        cascade(remaining[g * m:(g + 1) * m], uniforms[g * (m - 1):(g + 1) * (m - 1)].tolist())
        for g in range(groups)
    ]


def alice_encode(condensed: Sequence[CascadeRecord], message: Sequence[int]) -> list[Qubit]:
    if len(message) > len(condensed):
        raise CapacityError(f"message has {len(message)} bits, only {len(condensed)} condensed qubits")
    return [apply_flip(rec.retained) if bit else rec.retained for rec, bit in zip(condensed, message)]


def bob_decode(encoded: Sequence[Qubit], tracked: Sequence[Bb84Label], rng: np.random.Generator) -> list[int]:
    """Measure each qubit in the basis of its tracked label: unchanged is 0,
    flipped is 1."""
    if len(encoded) != len(tracked):
        raise ValueError(f"{len(encoded)} qubits but {len(tracked)} tracked labels")
    uniforms = rng.random(len(encoded))
    return [
        0 if measure_qubit(q, label.basis, u) is label else 1
        for q, label, u in zip(encoded, tracked, uniforms)
    ]


def _eve_guess_labels(records: Sequence[EveRecord], rng: np.random.Generator) -> list[Bb84Label]:
    # her observation where she has one, a uniformly random label elsewhere
    fallback = rng.integers(0, 4, size=len(records))
    return [
        rec.observed_label if rec.observed_label is not None else BB84_LABELS[fallback[i]]
        for i, rec in enumerate(records)
    ]


def run_protocol(config: ProtocolConfig, channel: ChannelModel) -> ProtocolResult:
    """Prepare, transmit, check, condense, encode, return and decode.

    Eve is counted as knowing a condensed qubit iff she fully knows every
    member of its group. ``eve_bit_guess_accuracy`` is the fraction of
    message bits she would read correctly by tracking her own observations
    through the announced bits and measuring the returned qubit in the
    resulting basis (a counterfactual readout; the return trip itself is
    not attacked).
    """
    seed, m = config.seed, config.group_size_m
    batch = bob_prepare_batch(config.n_batch, stage_rng(seed, STREAM_PREPARE))
    bob_labels = [label for label, _ in batch]

    received, eve = channel_transmit(batch, channel, stage_rng(seed, STREAM_CHANNEL))
    published, remaining = alice_check(received, config.check_fraction, stage_rng(seed, STREAM_CHECK))
    e = estimate_error_rate(published, bob_labels)
    matched = len(matched_check_entries(published, bob_labels))
    r = infer_interception_rate(e)

    if e > config.error_threshold:
        return ProtocolResult(
            detected_error_rate_e=e,
            inferred_r=r,
            aborted=True,
            decoded_message=None,
            message_bit_errors=0,
            eve_known_condensed_fraction=0.0,
            condensed_count=0,
            check_sample_size=len(published),
            matched_check_size=matched,
        )

    records = alice_condense([received[i] for i in remaining], m, stage_rng(seed, STREAM_CONDENSE))
    groups = [remaining[g * m:(g + 1) * m] for g in range(len(records))]
    eve_known = sum(1 for grp in groups if all(eve[i].knows for i in grp))

    message = config.message_bits
    tracked = [bob_track(rec.group_labels, rec.announced_bits) for rec in records[: len(message)]]
    encoded = alice_encode(records, message)
    decoded = tuple(bob_decode(encoded, tracked, stage_rng(seed, STREAM_DECODE)))
    errors = sum(1 for sent, got in zip(message, decoded) if sent != got)

    accuracy = None
    if message:
        eve_rng = stage_rng(seed, STREAM_EVE_GUESS)
        guess_labels = _eve_guess_labels([eve[i] for grp in groups[: len(message)] for i in grp], eve_rng)
        eve_tracked = [
            bob_track(guess_labels[j * m:(j + 1) * m], rec.announced_bits) for j, rec in enumerate(records[: len(message)])
        ]
        eve_bits = bob_decode(encoded, eve_tracked, eve_rng)
        accuracy = sum(1 for sent, got in zip(message, eve_bits) if sent == got) / len(message)

    return ProtocolResult(
        detected_error_rate_e=e,
        inferred_r=r,
        aborted=False,
        decoded_message=decoded,
        message_bit_errors=errors,
        eve_known_condensed_fraction=eve_known / len(records),
        condensed_count=len(records),
        check_sample_size=len(published),
        matched_check_size=matched,
        eve_bit_guess_accuracy=accuracy,
    )


def leakage_monte_carlo(r: float, m: int, trials: int, seed: int) -> LeakageEstimate:
    """Estimate the chance that Eve knows a condensed qubit when each of
    its ``m`` members is known independently with probability ``r``.

    Trials run in fixed-size chunks, each drawing from its own stream keyed
    by (seed, chunk index), so the result does not depend on how chunks are
    scheduled.
    """
    if not (0.0 <= r <= 1.0):
        raise ConfigError(f"r must lie in [0, 1], got {r!r}")
    if m < 1:
        raise ConfigError("m must be at least 1")
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    _check_seed(seed)
    known = 0
    for chunk, start in enumerate(range(0, trials, LEAKAGE_CHUNK)):
        size = min(LEAKAGE_CHUNK, trials - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_LEAKAGE, chunk)))
        known += int(np.count_nonzero(np.all(rng.random((size, m)) < r, axis=1)))
    p = known / trials
    return LeakageEstimate(
        r=r,
        m=m,
        trials=trials,
        observed_p=p,
        predicted_p=r**m,
        std_error=math.sqrt(p * (1.0 - p) / trials),
        known_count=known,
    )


def required_group_size(r: float, epsilon: float) -> int:
    """Smallest ``m`` with ``r**m <= epsilon``."""
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if not (0.0 <= r <= 1.0):
        raise ValueError(f"r must lie in [0, 1], got {r!r}")
    if r == 0.0:
        return 1
    if r == 1.0:
        raise ValueError("r = 1: no finite group size reduces leakage")
    m = max(1, math.ceil(math.log(epsilon) / math.log(r)))
    # guard against rounding in the logarithm ratio
    while r**m > epsilon:
        m += 1
    while m > 1 and r ** (m - 1) <= epsilon:
        m -= 1
    return m
