from __future__ import annotations

import typing as t
from collections import abc
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import polars

from pynhse import ComplexArray, REGISTER_QUBIT_CAP, RealArray, Spin
from pynhse.exceptions import (
    DenseCapExceededError,
    DimensionMismatchError,
    DuplicateTargetError,
    ZeroNormError,
)

SeedLike: t.TypeAlias = int | np.random.SeedSequence

_KET_UP = frozenset("↑1uU")
_KET_DOWN = frozenset("↓0dD")


@dataclass(frozen=True, slots=True)
class Bitstring:
    """
    Computational basis label indexed by qubit; `True` marks an up spin (occupied site).

    Two text forms are supported:
        * Ket form lists site 0 first, matching the lattice reading order (e.g. `↓↓↑↓↓↓`)
        * Label form prints qubit 0 rightmost, matching the register's binary index
    """

    bits: tuple[bool, ...]

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def num_qubits(self) -> int:  # noqa: D102
        return len(self.bits)

    @property
    def index(self) -> int:
        """Basis index encoded by the bits, qubit 0 being the least significant bit."""
        return sum(1 << i for i, b in enumerate(self.bits) if b)

    @property
    def popcount(self) -> int:  # noqa: D102
        return sum(self.bits)

    @classmethod
    def from_index(cls, index: int, num_qubits: int) -> Bitstring:  # noqa: D102
        if not 0 <= index < (1 << num_qubits):
            raise ValueError(f"Index {index} out of range for {num_qubits} qubits.")

        return cls(tuple(bool((index >> i) & 1) for i in range(num_qubits)))

    @classmethod
    def from_ket(cls, ket: str) -> Bitstring:
        """
        Parse a ket string listing site 0 first.

        Up spins may be given as any of `↑`, `1`, `u`, `U`; down spins as any of `↓`, `0`, `d`,
        `D`.
        Surrounding `|` and `⟩` characters are ignored.
        """
        ket = ket.strip().strip("|⟩>")
        if not ket:
            raise ValueError("Empty ket string.")

        bits = []
        for char in ket:
            if char in _KET_UP:
                bits.append(True)
            elif char in _KET_DOWN:
                bits.append(False)
            else:
                raise ValueError(f"Unrecognized spin character '{char}' in ket '{ket}'.")

        return cls(tuple(bits))

    @classmethod
    def from_label(cls, label: str) -> Bitstring:
        """Parse a binary register label printed qubit 0 rightmost."""
        return cls.from_ket(label[::-1])

    def to_label(self) -> str:  # noqa: D102
        return "".join("1" if b else "0" for b in reversed(self.bits))

    def to_ket(self) -> str:  # noqa: D102
        return "".join("↑" if b else "↓" for b in self.bits)


@dataclass(slots=True)
class StateVector:
    """
    Dense complex amplitude vector over `num_qubits` qubits.

    Bit `i` of a basis index addresses qubit `i`. The vector may be unnormalized; after
    post-selection its squared norm carries the accumulated success probability.
    """

    num_qubits: int
    amplitudes: ComplexArray

    def __post_init__(self) -> None:
        if self.num_qubits < 0:
            raise ValueError("Number of qubits must be non-negative.")
        if self.num_qubits > REGISTER_QUBIT_CAP:
            raise DenseCapExceededError(
                f"Register of {self.num_qubits} qubits exceeds the cap of {REGISTER_QUBIT_CAP}."
            )

        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if self.amplitudes.size != (1 << self.num_qubits):
            raise DimensionMismatchError(
                f"Expected {1 << self.num_qubits} amplitudes, received {self.amplitudes.size}."
            )

    @property
    def dim(self) -> int:  # noqa: D102
        return self.amplitudes.size

    def copy(self) -> StateVector:  # noqa: D102
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def probabilities(self) -> RealArray:
        """Return the normalized outcome distribution `|a|^2 / norm^2`."""
        n2 = norm2(self)
        if n2 == 0:
            raise ZeroNormError("Cannot form probabilities of a zero-norm state.")

        return np.abs(self.amplitudes) ** 2 / n2

    def normalized(self) -> StateVector:  # noqa: D102
        n2 = norm2(self)
        if n2 == 0:
            raise ZeroNormError("Cannot normalize a zero-norm state.")

        return StateVector(self.num_qubits, self.amplitudes / np.sqrt(n2))


def init_basis(bits: Bitstring) -> StateVector:
    """Build the normalized computational basis state encoded by `bits`."""
    amps = np.zeros(1 << len(bits), dtype=np.complex128)
    amps[bits.index] = 1.0
    return StateVector(len(bits), amps)


def superposition(bitstrings: abc.Sequence[Bitstring]) -> StateVector:
    """Build the normalized equal-weight superposition of the provided basis states."""
    if not bitstrings:
        raise ValueError("At least one basis state is required.")

    num_qubits = len(bitstrings[0])
    if any(len(b) != num_qubits for b in bitstrings):
        raise DimensionMismatchError("All basis states must address the same number of qubits.")

    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    for b in bitstrings:
        amps[b.index] += 1.0

    return StateVector(num_qubits, amps).normalized()


def tensor(low: StateVector, high: StateVector) -> StateVector:
    """Join two registers, the qubits of `high` becoming the most significant."""
    amps = np.kron(high.amplitudes, low.amplitudes)
    return StateVector(low.num_qubits + high.num_qubits, amps)


def _check_targets(num_qubits: int, targets: abc.Sequence[int]) -> None:
    if len(set(targets)) != len(targets):
        raise DuplicateTargetError(f"Target qubits must be distinct, received: {list(targets)}")

    for q in targets:
        if not 0 <= q < num_qubits:
            raise ValueError(f"Target qubit {q} out of range for {num_qubits} qubits.")


def apply(state: StateVector, op: ComplexArray, targets: abc.Sequence[int]) -> StateVector:
    """
    Apply the `2^k x 2^k` operator `op` to the `k` listed target qubits.

    Bit `j` of the operator's local index addresses `targets[j]`. Non-unitary operators are
    allowed, the norm of the result is not adjusted.

    Note:
        An operator spanning the whole register in natural order is applied as a plain dense
        matrix-vector product; anything else is contracted against the register as a rank-`n`
        tensor without materializing the full `2^n x 2^n` matrix.
    """
    op = np.asarray(op, dtype=np.complex128)
    k = len(targets)
    if op.shape != (1 << k, 1 << k):
        raise DimensionMismatchError(
            f"Operator of shape {op.shape} does not act on {k} target qubit(s)."
        )

    n = state.num_qubits
    _check_targets(n, targets)

    if k == n and tuple(targets) == tuple(range(n)):
        return StateVector(n, op @ state.amplitudes)

    # Tensor axis a of the register holds qubit n - 1 - a; operator axes are ordered
    # (out_{k-1}, ..., out_0, in_{k-1}, ..., in_0)
    psi = state.amplitudes.reshape((2,) * n)
    op_t = op.reshape((2,) * (2 * k))
    op_in_axes = [2 * k - 1 - j for j in range(k)]
    psi_axes = [n - 1 - q for q in targets]
    out = np.tensordot(op_t, psi, axes=(op_in_axes, psi_axes))

    dest = [n - 1 - targets[k - 1 - i] for i in range(k)]
    out = np.moveaxis(out, list(range(k)), dest)

    return StateVector(n, out.reshape(-1))


def _bit_mask(num_qubits: int, qubit: int) -> npt.NDArray[np.bool_]:
    return ((np.arange(1 << num_qubits) >> qubit) & 1).astype(bool)


def project(state: StateVector, qubit: int, outcome: Spin) -> tuple[StateVector, float]:
    """
    Project `qubit` onto the requested outcome.

    The returned state is NOT renormalized. The success probability is the kept branch's squared
    norm relative to the input's squared norm; a value of 0 signals an impossible post-selection
    and the caller is expected to abort the trajectory.
    """
    _check_targets(state.num_qubits, [qubit])
    n2_in = norm2(state)
    if n2_in == 0:
        raise ZeroNormError("Cannot project a zero-norm state.")

    keep = _bit_mask(state.num_qubits, qubit)
    if outcome == Spin.DOWN:
        keep = ~keep

    projected = StateVector(state.num_qubits, np.where(keep, state.amplitudes, 0))
    return projected, norm2(projected) / n2_in


def occupations(state: StateVector, qubits: abc.Sequence[int] | None = None) -> RealArray:
    """Return the probability of reading each listed qubit as up, on the normalized state."""
    n = state.num_qubits
    if qubits is None:
        qubits = range(n)

    p = state.probabilities().reshape((2,) * n)
    out = np.empty(len(qubits))
    for i, q in enumerate(qubits):
        _check_targets(n, [q])
        out[i] = np.moveaxis(p, n - 1 - q, 0).reshape(2, -1)[1].sum()

    return out


def expect_z(state: StateVector, qubit: int) -> float:
    """Return `<Z_qubit>` on the normalized state, with up as the +1 eigenvalue."""
    return float(2 * occupations(state, [qubit])[0] - 1)


def norm2(state: StateVector) -> float:  # noqa: D103
    return float(np.vdot(state.amplitudes, state.amplitudes).real)


def inner(a: StateVector, b: StateVector) -> complex:
    """Return the Hermitian inner product `<a|b>`."""
    if a.num_qubits != b.num_qubits:
        raise DimensionMismatchError(
            f"Cannot take the inner product of {a.num_qubits} and {b.num_qubits} qubit states."
        )

    return complex(np.vdot(a.amplitudes, b.amplitudes))


@dataclass(slots=True)
class ShotTable:
    """
    Measured bitstring counts with post-selection bookkeeping.

    `total_shots` counts every executed shot, `postselected_shots` only those kept in `counts`.
    """

    num_qubits: int
    counts: dict[Bitstring, int]
    total_shots: int
    postselected_shots: int

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("Counts must be non-negative.")
        if sum(self.counts.values()) != self.postselected_shots:
            raise ValueError("Counts must sum to the number of post-selected shots.")
        if self.postselected_shots > self.total_shots:
            raise ValueError("Post-selected shots cannot exceed the total number of shots.")

    @classmethod
    def from_index_counts(
        cls,
        indices: abc.Iterable[int],
        counts: abc.Iterable[int],
        num_qubits: int,
        total_shots: int | None = None,
    ) -> ShotTable:
        """Build a table from parallel basis-index and count sequences, dropping zero counts."""
        table = {
            Bitstring.from_index(int(i), num_qubits): int(c)
            for i, c in zip(indices, counts)
            if c > 0
        }
        kept = sum(table.values())
        return cls(
            num_qubits=num_qubits,
            counts=table,
            total_shots=kept if total_shots is None else total_shots,
            postselected_shots=kept,
        )

    def postselect(self, qubits: abc.Sequence[int], outcome: Spin = Spin.UP) -> ShotTable:
        """Discard every bitstring where any of the listed qubits differs from `outcome`."""
        want = outcome == Spin.UP
        kept = {b: c for b, c in self.counts.items() if all(b.bits[q] == want for q in qubits)}
        return ShotTable(
            num_qubits=self.num_qubits,
            counts=kept,
            total_shots=self.total_shots,
            postselected_shots=sum(kept.values()),
        )

    def frequencies(self) -> dict[Bitstring, float]:  # noqa: D102
        if self.postselected_shots == 0:
            return {}

        return {b: c / self.postselected_shots for b, c in self.counts.items()}

    def densities(self, qubits: abc.Sequence[int]) -> RealArray:
        """Return the fraction of kept shots reading each listed qubit as up; NaN if empty."""
        if self.postselected_shots == 0:
            return np.full(len(qubits), np.nan)

        up = np.zeros(len(qubits))
        for b, c in self.counts.items():
            up += c * np.array([b.bits[q] for q in qubits], dtype=float)

        return up / self.postselected_shots

    def to_frame(self) -> polars.DataFrame:
        """Tabulate counts as `(bitstring, count)` rows, sorted by register label."""
        rows = sorted((b.to_label(), c) for b, c in self.counts.items())
        return polars.DataFrame(
            {"bitstring": [r[0] for r in rows], "count": [r[1] for r in rows]},
            schema={"bitstring": polars.String, "count": polars.Int64},
        )


def sample(state: StateVector, shots: int, seed: SeedLike) -> ShotTable:
    """
    Draw `shots` measurements of every qubit from the normalized state.

    Outcomes are drawn as a single multinomial sample, so the result is deterministic for a fixed
    seed.
    """
    if shots < 0:
        raise ValueError("Number of shots must be non-negative.")
    if shots == 0:
        return ShotTable(
            num_qubits=state.num_qubits, counts={}, total_shots=0, postselected_shots=0
        )

    probs = state.probabilities()
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    drawn = rng.multinomial(shots, probs)
    (nonzero,) = np.nonzero(drawn)

    return ShotTable.from_index_counts(nonzero, drawn[nonzero], state.num_qubits, shots)
