"""
Unitary dilation of non-unitary operators with a single ancilla qubit.

A non-unitary `R` is rescaled by `u = 1 / sigma_max(R)` and embedded as the upper-left block of a
unitary acting on the physical register plus one ancilla. The ancilla is the most significant
qubit of the dilated matrix and its block order is `(up, down)`, so `psi (x) |up>` occupies the
first `block_dim` indices and post-selecting the ancilla on up recovers `u R psi`.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass

import numpy as np

from pynhse import ComplexArray
from pynhse.exceptions import DilationError


@dataclass(frozen=True, slots=True)
class DilatedUnitary:
    """Unitary of dimension `2 * block_dim` whose upper-left block is `rescale_u * R`."""

    matrix: ComplexArray
    rescale_u: float
    block_dim: int

    @property
    def num_block_qubits(self) -> int:  # noqa: D102
        return self.block_dim.bit_length() - 1

    @property
    def block(self) -> ComplexArray:
        """The embedded `u R` block."""
        return self.matrix[: self.block_dim, : self.block_dim]

    def as_gate(self) -> ComplexArray:
        """
        Reindex the dilation into the register's computational convention.

        The returned operator is intended to be applied with targets `physical + [ancilla]`, where
        the ancilla is the most significant target and its bit value 1 encodes up.
        """
        d = self.block_dim
        perm = np.concatenate((np.arange(d, 2 * d), np.arange(d)))
        return self.matrix[np.ix_(perm, perm)]


class DilationReport(t.NamedTuple):  # noqa: D101
    unitarity_defect: float
    block_defect: float
    u_defect: float

    def ok(self, tol: float = 1e-10) -> bool:  # noqa: D102
        return max(self) <= tol


def _closed_form(r: ComplexArray) -> DilatedUnitary:
    # Diagonal contractions only: C = -sqrt(I - R R^dag), B = -C, D = R
    c = -np.diag(np.sqrt(np.clip(1 - np.abs(np.diag(r)) ** 2, 0, None)))
    matrix = np.block([[r, -c], [c, r]]).astype(np.complex128)
    return DilatedUnitary(matrix=matrix, rescale_u=1.0, block_dim=r.shape[0])


def dilate_single_loss(phi: float) -> DilatedUnitary:
    """
    Dilate the single-qubit loss contraction `R- = diag(exp(-phi), 1)`.

    Returns the closed-form 4x4 unitary `[[R, B], [C, D]]` with `C = -sqrt(I - R R^dag)`, `B = -C`
    and `D = R`; `phi = 0` gives the identity.
    """
    if not np.isfinite(phi):
        raise ValueError("Decay exponent must be finite.")

    return _closed_form(np.diag([np.exp(-phi), 1.0]))


def dilate_single_gain(phi: float) -> DilatedUnitary:
    """Dilate the single-qubit contraction `R+ = diag(1, exp(-phi))`, see `dilate_single_loss`."""
    if not np.isfinite(phi):
        raise ValueError("Decay exponent must be finite.")

    return _closed_form(np.diag([1.0, np.exp(-phi)]))


def dilate(r: ComplexArray) -> DilatedUnitary:
    """
    Embed the square operator `r` into a unitary with one extra ancilla qubit.

    The construction follows the SVD-rescale & QR-completion recipe:
        1. `R = A S B^dag`, `u = 1 / max(S)`
        2. `C = A sqrt(I - u^2 S^2) B^dag`, so `[uR; C]` has orthonormal columns
        3. QR-factor `W = [[uR, I], [C, I]]`; the orthonormal factor, with columns rephased so the
           triangular factor has a non-negative real diagonal, is the dilation

    Note:
        Only the upper-left block and the first block column are contractual. When `R^dag R` has a
        degenerate top eigenvalue any SVD branch is accepted and the completion blocks may differ.
    """
    r = np.asarray(r, dtype=np.complex128)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DilationError(f"Operator must be square, received shape {r.shape}.")

    dim = r.shape[0]
    if dim == 0 or (dim & (dim - 1)) != 0:
        raise DilationError(f"Operator dimension must be a power of two, received {dim}.")
    if not np.all(np.isfinite(r)):
        raise DilationError("Operator contains non-finite entries.")

    try:
        a, s, bh = np.linalg.svd(r)
    except np.linalg.LinAlgError as e:
        raise DilationError(f"SVD failed: {e}") from e

    if s[0] == 0:
        raise DilationError("Cannot dilate the zero operator.")

    u = 1.0 / s[0]
    ur = u * r
    radicand = np.clip(1.0 - (u * s) ** 2, 0.0, None)
    c = (a * np.sqrt(radicand)) @ bh

    eye = np.eye(dim, dtype=np.complex128)
    w = np.block([[ur, eye], [c, eye]])
    q, tri = np.linalg.qr(w, mode="complete")

    diag = np.diag(tri)
    phases = np.ones_like(diag)
    nonzero = np.abs(diag) > 0
    phases[nonzero] = diag[nonzero] / np.abs(diag[nonzero])
    q = q * phases[np.newaxis, :]

    # Rephased first block column equals [uR; C] up to round-off, pin it exactly
    q[:, :dim] = np.vstack((ur, c))

    return DilatedUnitary(matrix=q, rescale_u=float(u), block_dim=dim)


def verify_dilation(d: DilatedUnitary, r: ComplexArray) -> DilationReport:
    """Measure the unitarity, block, and rescale-factor defects of a dilation of `r`."""
    r = np.asarray(r, dtype=np.complex128)
    if r.shape != (d.block_dim, d.block_dim):
        raise DilationError(
            f"Operator of shape {r.shape} is incompatible with block dimension {d.block_dim}."
        )

    m = d.matrix
    unitarity = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
    block = np.max(np.abs(d.block - d.rescale_u * r))
    top = np.linalg.eigvalsh(r.conj().T @ r)[-1]
    u_defect = abs(d.rescale_u**2 * top - 1.0)

    return DilationReport(
        unitarity_defect=float(unitarity), block_defect=float(block), u_defect=float(u_defect)
    )
