"""
Uncorrelated per-qubit readout noise and its subspace-restricted mitigation.

The mitigation solves the confusion system only on the bitstrings that were actually observed,
so its cost scales with the number of distinct outcomes rather than with `2^n`.
"""

from __future__ import annotations

import logging
import math
from collections import abc
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from pynhse import RealArray, Spin
from pynhse.statevector import Bitstring, SeedLike, ShotTable

logger = logging.getLogger(__name__)

MITIGATION_COND_CAP = 1e12
# Largest observed-bitstring subspace solved as a dense system
MITIGATION_SUBSPACE_CAP = 4096
# Column block size of the matrix-free diagonal correction
_DIAGONAL_CHUNK = 512


@dataclass(frozen=True, slots=True)
class ReadoutModel:
    """
    Per-qubit readout flip probabilities.

    `p01[q]` is the probability of reading up when qubit `q` is truly down, `p10[q]` that of
    reading down when it is truly up.
    """

    p01: RealArray
    p10: RealArray

    def __post_init__(self) -> None:
        p01 = np.asarray(self.p01, dtype=float)
        p10 = np.asarray(self.p10, dtype=float)
        if p01.ndim != 1 or p01.shape != p10.shape:
            raise ValueError("Flip probabilities must be 1D arrays of equal length.")
        for name, p in (("p01", p01), ("p10", p10)):
            if np.any((p < 0) | (p >= 0.5)):
                raise ValueError(f"{name} probabilities must lie in [0, 0.5), received {p}")

        object.__setattr__(self, "p01", p01)
        object.__setattr__(self, "p10", p10)

    @property
    def num_qubits(self) -> int:  # noqa: D102
        return self.p01.size

    @classmethod
    def uniform(cls, num_qubits: int, p01: float, p10: float | None = None) -> ReadoutModel:
        """Build a model with equal flip probabilities on every qubit; `p10` defaults to `p01`."""
        p10 = p01 if p10 is None else p10
        return cls(np.full(num_qubits, p01), np.full(num_qubits, p10))

    def confusion(self, qubit: int) -> RealArray:
        """Return the 2x2 column-stochastic matrix `C[read, true]` of the listed qubit."""
        p01, p10 = self.p01[qubit], self.p10[qubit]
        return np.array([[1 - p01, p10], [p01, 1 - p10]])


def calibration_circuit_count(num_qubits: int) -> int:
    """Number of calibration circuits: one down and one up preparation per qubit."""
    return 2 * num_qubits


def _to_bits(indices: abc.Sequence[int] | np.ndarray, num_qubits: int) -> np.ndarray:
    return (np.asarray(indices, dtype=np.int64)[:, np.newaxis] >> np.arange(num_qubits)) & 1


def corrupt(table: ShotTable, model: ReadoutModel, seed: SeedLike) -> ShotTable:
    """
    Flip each recorded bit of every shot independently according to the model.

    Shot bookkeeping (`total_shots`) is preserved; the result is deterministic for a fixed seed.
    """
    if model.num_qubits != table.num_qubits:
        raise ValueError(
            f"Readout model covers {model.num_qubits} qubits, table has {table.num_qubits}."
        )
    if not table.counts:
        return table

    labels = list(table.counts)
    shots = np.repeat([b.index for b in labels], [table.counts[b] for b in labels])
    bits = _to_bits(shots, table.num_qubits)

    rng = np.random.default_rng(seed)
    flip_p = np.where(bits == 1, model.p10, model.p01)
    flipped = bits ^ (rng.random(bits.shape) < flip_p)
    read = (flipped << np.arange(table.num_qubits)).sum(axis=1)

    indices, counts = np.unique(read, return_counts=True)
    return ShotTable.from_index_counts(indices, counts, table.num_qubits, table.total_shots)


@dataclass(slots=True)
class QuasiDistribution:
    """
    Mitigated quasi-probabilities over the observed bitstrings; entries may be negative.

    Values are in units of the observed frequency, so they sum to ~1 over the full table.
    """

    num_qubits: int
    quasi: dict[Bitstring, float]
    condition_number: float
    diagonal_fallback: bool = False

    @property
    def total(self) -> float:  # noqa: D102
        return float(sum(self.quasi.values()))

    def postselect(self, qubits: abc.Sequence[int], outcome: Spin = Spin.UP) -> QuasiDistribution:
        """Keep only the bitstrings where every listed qubit reads `outcome`; no renormalization."""
        want = outcome == Spin.UP
        kept = {b: q for b, q in self.quasi.items() if all(b.bits[i] == want for i in qubits)}
        return QuasiDistribution(
            self.num_qubits, kept, self.condition_number, self.diagonal_fallback
        )

    def densities(self, qubits: abc.Sequence[int]) -> RealArray:
        """Quasi-probability weighted up fraction for each listed qubit; NaN if the total is 0."""
        total = self.total
        if not self.quasi or total == 0:
            return np.full(len(qubits), np.nan)

        up = np.zeros(len(qubits))
        for b, q in self.quasi.items():
            up += q * np.array([b.bits[i] for i in qubits], dtype=float)

        return up / total


def reduced_confusion(labels: abc.Sequence[Bitstring], model: ReadoutModel) -> RealArray:
    """
    Restrict the full tensor-product confusion matrix to the listed bitstrings.

    Entry `[i, j]` is the probability of reading `labels[i]` given true `labels[j]`. Columns are
    renormalized to sum to 1 over the subspace.
    """
    bits = _to_bits([b.index for b in labels], model.num_qubits)
    a = _confusion_block(bits, bits, model)
    return a / a.sum(axis=0, keepdims=True)


def _confusion_block(rows: np.ndarray, cols: np.ndarray, model: ReadoutModel) -> RealArray:
    a = np.ones((rows.shape[0], cols.shape[0]))
    for q in range(model.num_qubits):
        c = model.confusion(q)
        a *= c[rows[:, q][:, np.newaxis], cols[:, q][np.newaxis, :]]

    return a


def _reduced_diagonal(labels: abc.Sequence[Bitstring], model: ReadoutModel) -> RealArray:
    """Diagonal of `reduced_confusion`, built one column block at a time."""
    bits = _to_bits([b.index for b in labels], model.num_qubits)
    diag = np.empty(len(labels))
    for start in range(0, len(labels), _DIAGONAL_CHUNK):
        stop = min(start + _DIAGONAL_CHUNK, len(labels))
        block = _confusion_block(bits, bits[start:stop], model)
        cols = np.arange(stop - start)
        diag[start:stop] = block[start + cols, cols] / block.sum(axis=0)

    return diag


def mitigate(table: ShotTable, model: ReadoutModel) -> QuasiDistribution:
    """
    Correct the observed frequencies for readout noise inside the observed-bitstring subspace.

    The reduced confusion system is solved by least squares. If its condition number exceeds
    `MITIGATION_COND_CAP` each frequency is instead divided by its diagonal entry. More than
    `MITIGATION_SUBSPACE_CAP` distinct bitstrings skip the dense system altogether and take the
    same diagonal correction, with a NaN condition number.
    """
    if model.num_qubits != table.num_qubits:
        raise ValueError(
            f"Readout model covers {model.num_qubits} qubits, table has {table.num_qubits}."
        )
    if table.postselected_shots == 0:
        raise ValueError("Cannot mitigate an empty shot table.")

    labels = sorted(table.counts, key=lambda b: b.index)
    freqs = np.array([table.counts[b] for b in labels], dtype=float) / table.postselected_shots
    if len(labels) > MITIGATION_SUBSPACE_CAP:
        logger.warning(
            "%d distinct bitstrings exceed the mitigation subspace cap (%d), "
            "using diagonal correction",
            len(labels),
            MITIGATION_SUBSPACE_CAP,
        )
        x = freqs / _reduced_diagonal(labels, model)
        return QuasiDistribution(
            num_qubits=table.num_qubits,
            quasi={b: float(v) for b, v in zip(labels, x)},
            condition_number=math.nan,
            diagonal_fallback=True,
        )

    a = reduced_confusion(labels, model)
    cond = float(np.linalg.cond(a))

    if cond > MITIGATION_COND_CAP:
        logger.warning(
            "Reduced confusion matrix is ill-conditioned (cond %.3g), using diagonal correction",
            cond,
        )
        x = freqs / np.diag(a)
        fallback = True
    else:
        x, *_ = scipy.linalg.lstsq(a, freqs)
        fallback = False

    return QuasiDistribution(
        num_qubits=table.num_qubits,
        quasi={b: float(v) for b, v in zip(labels, x)},
        condition_number=cond,
        diagonal_fallback=fallback,
    )
