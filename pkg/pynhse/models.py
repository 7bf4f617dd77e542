from __future__ import annotations

import logging
import math
import typing as t
from collections import abc
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg
from scipy import sparse

from pynhse import ComplexArray, DENSE_QUBIT_CAP, ModelKind, RealArray, Scheme
from pynhse.dilation import DilatedUnitary, dilate
from pynhse.exceptions import DenseCapExceededError, InvalidModelError, InvalidSchemeError

logger = logging.getLogger(__name__)

# Largest physical register dilated as a single full-register operator
GLOBAL_QUBIT_CAP = 10

# Single-site operators in the computational basis (|0> = down, |1> = up)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)  # |up><down|
SIGMA_MINUS = SIGMA_PLUS.T.copy()
NUMBER = np.array([[0, 0], [0, 1]], dtype=np.complex128)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SPIN_Z = np.array([[-1, 0], [0, 1]], dtype=np.complex128)  # up is the +1 eigenvector

# Two-site products; the left factor acts on the more significant (right-hand) site of the bond
_HOP_LEFT = np.kron(SIGMA_MINUS, SIGMA_PLUS)  # moves a fermion from site j + 1 to site j
_HOP_RIGHT = np.kron(SIGMA_PLUS, SIGMA_MINUS)  # moves a fermion from site j to site j + 1
_PAIR_NUMBER = np.kron(NUMBER, NUMBER)
_XX_YY = np.kron(PAULI_X, PAULI_X) + np.kron(PAULI_Y, PAULI_Y)

# Degree 13 Pade coefficients & the matching scaling threshold for the 1-norm
_PADE13_B = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_PADE13_THETA = 5.371920351148152


@dataclass(frozen=True, slots=True)
class ModelSpec:
    """
    Open-boundary spin chain specification.

    `U_int` is only used by `ModelKind.HN_INT`.
    """

    kind: ModelKind
    L: int
    J: float = 1.0
    gamma: float = 0.0
    U_int: float = 0.0

    def __post_init__(self) -> None:
        if self.L < 2:
            raise InvalidModelError(f"Chain must have at least 2 sites, received L={self.L}.")
        if self.kind == ModelKind.NHSSH and self.L % 2:
            raise InvalidModelError(
                f"The nH-SSH chain requires an even site count, received L={self.L}."
            )
        if not abs(self.gamma) < self.J:
            raise InvalidModelError(
                f"Non-reciprocity must satisfy |gamma| < J, received J={self.J}, "
                f"gamma={self.gamma}."
            )

    @property
    def kappa(self) -> float:  # noqa: D102
        return kappa(self.J, self.gamma)


class Bond(t.NamedTuple):  # noqa: D101
    sites: tuple[int, int]
    generator: ComplexArray


def kappa(J: float, gamma: float) -> float:
    """Return the asymmetry parameter `kappa = 0.5 * ln((J + gamma) / (J - gamma))`."""
    if not abs(gamma) < J:
        raise InvalidModelError(f"kappa requires |gamma| < J, received J={J}, gamma={gamma}.")

    return 0.5 * math.log((J + gamma) / (J - gamma))


def _hn_generator(J: float, gamma: float) -> ComplexArray:
    return -((J + gamma) * _HOP_LEFT + (J - gamma) * _HOP_RIGHT)


def bond_generators(spec: ModelSpec) -> list[Bond]:
    """
    Build the per-bond local generators `h_b`; the Hamiltonian is the sum of their embeddings.

    Local operator index bit 0 addresses site `j`, bit 1 addresses site `j + 1`.
    """
    bonds = []
    for j in range(spec.L - 1):
        if spec.kind == ModelKind.NHSSH and j % 2:
            h = -spec.J * (_HOP_LEFT + _HOP_RIGHT)
        else:
            h = _hn_generator(spec.J, spec.gamma)
            if spec.kind == ModelKind.HN_INT:
                h = h + spec.U_int * _PAIR_NUMBER

        bonds.append(Bond(sites=(j, j + 1), generator=h))

    return bonds


def embed(op: ComplexArray, targets: abc.Sequence[int], num_qubits: int) -> sparse.csr_matrix:
    """
    Embed a local operator acting on contiguous, ascending `targets` into the full register.

    Bit `j` of the operator's local index addresses `targets[j]`.
    """
    k = len(targets)
    lo = targets[0]
    if tuple(targets) != tuple(range(lo, lo + k)) or lo + k > num_qubits:
        raise ValueError(f"Targets must be contiguous & ascending within range: {list(targets)}")

    high = sparse.identity(1 << (num_qubits - lo - k), dtype=np.complex128, format="csr")
    low = sparse.identity(1 << lo, dtype=np.complex128, format="csr")
    return sparse.kron(sparse.kron(high, sparse.csr_matrix(op)), low, format="csr")


def hamiltonian_dense(spec: ModelSpec) -> ComplexArray:
    """Build the dense `2^L x 2^L` spin Hamiltonian of the provided model."""
    if spec.L > DENSE_QUBIT_CAP:
        raise DenseCapExceededError(
            f"Dense Hamiltonians are capped at L={DENSE_QUBIT_CAP}, received L={spec.L}."
        )

    dim = 1 << spec.L
    h = sparse.csr_matrix((dim, dim), dtype=np.complex128)
    for bond in bond_generators(spec):
        h = h + embed(bond.generator, bond.sites, spec.L)

    return h.toarray()


def magnetization(num_qubits: int) -> RealArray:
    """Return the diagonal of the total magnetization `sum_i Z_i` (up = +1)."""
    idx = np.arange(1 << num_qubits)
    popcount = np.zeros_like(idx)
    for q in range(num_qubits):
        popcount += (idx >> q) & 1

    return (2 * popcount - num_qubits).astype(float)


def expm(m: ComplexArray) -> ComplexArray:
    """
    Matrix exponential via scaling & squaring with a degree 13 Pade approximant.

    The matrix is scaled by `2^-s` so its 1-norm falls below the degree 13 threshold, the
    approximant `(V - U)^-1 (V + U)` is formed, then squared `s` times.
    """
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"Matrix exponential requires a square matrix, received {a.shape}.")
    if not np.all(np.isfinite(a)):
        raise ValueError("Matrix contains non-finite entries.")

    norm = np.linalg.norm(a, 1)
    n_squarings = max(0, math.ceil(math.log2(norm / _PADE13_THETA))) if norm > 0 else 0
    a = a / (2.0**n_squarings)

    b = _PADE13_B
    ident = np.eye(a.shape[0], dtype=np.complex128)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6
        + b[5] * a4
        + b[3] * a2
        + b[1] * ident
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6
        + b[4] * a4
        + b[2] * a2
        + b[0] * ident
    )

    r = scipy.linalg.solve(v - u, v + u)
    for _ in range(n_squarings):
        r = r @ r

    return r


def bond_hn(J: float, gamma: float, dt: float) -> ComplexArray:
    """Return `exp(+i dt ((J - gamma) X+_{j+1} X-_j + (J + gamma) X-_{j+1} X+_j))`."""
    return expm(1j * dt * ((J - gamma) * _HOP_RIGHT + (J + gamma) * _HOP_LEFT))


def bond_xy(J: float, dt: float) -> ComplexArray:
    """Return the unitary `exp(+i J dt (XX + YY))`."""
    return expm(1j * J * dt * _XX_YY)


def bond_hn_int(J: float, gamma: float, U: float, dt: float) -> ComplexArray:
    """Return the interacting bond, `bond_hn` with `-U n_j n_{j+1}` added inside the exponent."""
    return expm(
        1j * dt * ((J - gamma) * _HOP_RIGHT + (J + gamma) * _HOP_LEFT - U * _PAIR_NUMBER)
    )


@dataclass(frozen=True, slots=True)
class Layer:
    """
    Single gate application of a Trotter step.

    Non-unitary layers carry their dilation and the per-step ancilla slot they are bound to;
    `matrix` always holds the physical operator (unitary bond or non-unitary block `R`).
    """

    targets: tuple[int, ...]
    matrix: ComplexArray
    dilation: DilatedUnitary | None = None
    ancilla_slot: int | None = None

    @property
    def is_nonunitary(self) -> bool:  # noqa: D102
        return self.dilation is not None


@dataclass(frozen=True, slots=True)
class TrotterPlan:
    """
    Ordered gate layers making up one first-order Trotter step.

    Ancillas occupy the register's most significant qubits, after the `L` physical qubits. Unless
    `fresh_ancillas` is set, every step reuses (after projection) the same `ancillas_per_step`
    ancillas; fresh-ancilla plans bind a new block of ancillas for each step.
    """

    spec: ModelSpec
    scheme: Scheme
    dt: float
    layers: tuple[Layer, ...]
    ancillas_per_step: int
    fresh_ancillas: bool = False

    @property
    def num_physical(self) -> int:  # noqa: D102
        return self.spec.L

    @property
    def num_dilations(self) -> int:  # noqa: D102
        return sum(layer.is_nonunitary for layer in self.layers)

    def register_size(self, steps: int) -> int:
        """Total register width (physical + ancilla) required to run `steps` steps."""
        n_blocks = max(steps, 1) if self.fresh_ancillas else 1
        return self.num_physical + self.ancillas_per_step * n_blocks

    def ancilla_qubit(self, slot: int, step: int) -> int:
        """Register index of the ancilla bound to `slot` during the 0-indexed `step`."""
        offset = step * self.ancillas_per_step if self.fresh_ancillas else 0
        return self.num_physical + offset + slot

    def step_ancillas(self, step: int) -> list[int]:  # noqa: D102
        return [self.ancilla_qubit(slot, step) for slot in range(self.ancillas_per_step)]

    def rescale_product(self) -> float:
        """Product of every dilation's rescale factor over one step."""
        return math.prod(layer.dilation.rescale_u for layer in self.layers if layer.dilation)

    def step_operator(self) -> ComplexArray:
        """Dense physical operator of one post-selected step, `prod_b (u_b R_b)` in layer order."""
        n = self.num_physical
        acc = sparse.identity(1 << n, dtype=np.complex128, format="csr")
        for layer in self.layers:
            op = layer.matrix
            if layer.dilation is not None:
                op = layer.dilation.rescale_u * op

            acc = embed(op, layer.targets, n) @ acc

        return acc.toarray()

    def validate_deferred(self) -> None:
        """Reject deferred ancilla measurement for plans that reuse ancillas across steps."""
        if not self.fresh_ancillas and self.ancillas_per_step > 0:
            raise InvalidSchemeError(
                "Deferred measurement requires a fresh-ancilla plan; reused ancillas must be "
                "projected and reset every step."
            )


def _bond_operator(spec: ModelSpec, j: int, dt: float) -> ComplexArray:
    if spec.kind == ModelKind.NHSSH and j % 2:
        # Inter-cell term -J (X+X- + X-X+) = -(J / 2)(XX + YY)
        return bond_xy(spec.J / 2, dt)
    if spec.kind == ModelKind.HN_INT:
        return bond_hn_int(spec.J, spec.gamma, spec.U_int, dt)

    return bond_hn(spec.J, spec.gamma, dt)


def _dilated_layer(r: ComplexArray, targets: tuple[int, ...], slot: int) -> Layer:
    return Layer(targets=targets, matrix=r, dilation=dilate(r), ancilla_slot=slot)


def _bond_product(spec: ModelSpec, sites: abc.Iterable[int], dt: float) -> ComplexArray:
    n = spec.L
    ops = [embed(_bond_operator(spec, j, dt), (j, j + 1), n) for j in sites]
    ident = sparse.identity(1 << n, dtype=np.complex128, format="csr")
    return reduce(lambda acc, op: acc @ op, ops, ident).toarray()


def default_scheme(spec: ModelSpec) -> Scheme:
    """
    Pick the ancilla scheme used when none is requested.

    `NHSSH` only supports `LOCAL`, `HN_INT` only `GLOBAL`; `HN` uses `GLOBAL` up to
    `GLOBAL_QUBIT_CAP` sites and `LOCAL` above it.
    """
    if spec.kind == ModelKind.NHSSH:
        return Scheme.LOCAL
    if spec.kind == ModelKind.HN and spec.L > GLOBAL_QUBIT_CAP:
        return Scheme.LOCAL

    return Scheme.GLOBAL


def trotter_plan(
    spec: ModelSpec, dt: float, scheme: Scheme, fresh_ancillas: bool = False
) -> TrotterPlan:
    """
    Build the per-step gate layers for the requested ancilla scheme.

    Supported pairings:
        * `NHSSH` + `LOCAL`: dilated even (intra-cell) bonds, one ancilla each, then unitary odd
          (inter-cell) bonds
        * `HN` + `LOCAL`: every bond dilated with its own ancilla, odd bonds before even bonds
        * `HN`/`HN_INT` + `GLOBAL`: one full-register `R = (prod_even)(prod_odd)` dilated once

    Note:
        In the `GLOBAL` product the odd bonds act on the state first; `HN` + `LOCAL` uses the same
        order so both schemes realize the same physical step.
    """
    if dt <= 0:
        raise ValueError(f"Time step must be positive, received {dt}.")

    even = range(0, spec.L - 1, 2)
    odd = range(1, spec.L - 1, 2)
    layers: list[Layer] = []

    if scheme == Scheme.LOCAL:
        if spec.kind == ModelKind.NHSSH:
            for slot, j in enumerate(even):
                layers.append(_dilated_layer(_bond_operator(spec, j, dt), (j, j + 1), slot))
            for j in odd:
                layers.append(Layer(targets=(j, j + 1), matrix=_bond_operator(spec, j, dt)))
        elif spec.kind == ModelKind.HN:
            for slot, j in enumerate((*odd, *even)):
                layers.append(_dilated_layer(_bond_operator(spec, j, dt), (j, j + 1), slot))
        else:
            raise InvalidSchemeError(f"Model '{spec.kind}' is only supported by the global scheme.")
    elif scheme == Scheme.GLOBAL:
        if spec.kind == ModelKind.NHSSH:
            raise InvalidSchemeError("The nH-SSH model is only supported by the local scheme.")
        if spec.L > GLOBAL_QUBIT_CAP:
            raise DenseCapExceededError(
                f"Global dilation is capped at L={GLOBAL_QUBIT_CAP}, received L={spec.L}."
            )

        r = _bond_product(spec, even, dt) @ _bond_product(spec, odd, dt)
        layers.append(_dilated_layer(r, tuple(range(spec.L)), 0))
    else:
        raise InvalidSchemeError(f"Unknown scheme: '{scheme}'")

    plan = TrotterPlan(
        spec=spec,
        scheme=scheme,
        dt=dt,
        layers=tuple(layers),
        ancillas_per_step=sum(layer.is_nonunitary for layer in layers),
        fresh_ancillas=fresh_ancillas,
    )
    logger.info(
        "Built %s plan for %s (L=%d): %d layers, %d ancilla(s) per step, u product %.6g",
        scheme,
        spec.kind,
        spec.L,
        len(layers),
        plan.ancillas_per_step,
        plan.rescale_product(),
    )
    return plan
