from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from pynhse import RealArray
from pynhse.exceptions import ZeroNormError
from pynhse.models import ModelSpec, hamiltonian_dense
from pynhse.statevector import StateVector, occupations

if t.TYPE_CHECKING:
    from pynhse.evolution import EvolutionTrace

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-8


@dataclass(slots=True)
class DensityProfile:
    """Site occupations `n_i`, `i = 0..L-1`."""

    values: RealArray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("Density profile must be a non-empty 1D array.")

    def __len__(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:  # noqa: D102
        return float(self.values.sum())

    def is_reflection_symmetric(self, atol: float = 1e-10) -> bool:  # noqa: D102
        return bool(np.allclose(self.values, self.values[::-1], atol=atol))


def density(state: StateVector, num_physical: int | None = None) -> DensityProfile:
    """
    Compute `n_i = (<Z_i> + 1) / 2` on the normalized state.

    If `num_physical` is provided, only the low `num_physical` qubits are reported; higher (ancilla)
    qubits are marginalized over.
    """
    n = state.num_qubits if num_physical is None else num_physical
    if not 0 < n <= state.num_qubits:
        raise ValueError(f"Cannot report {n} sites from a {state.num_qubits} qubit register.")

    return DensityProfile(occupations(state, range(n)))


def center_of_mass(profile: DensityProfile | RealArray, normalized: bool = True) -> float:
    """
    Compute the center of mass `sum_i i * n_i` of the profile.

    By default the normalized form, divided by `sum_i n_i`, is reported so single and many
    particle runs share the site scale.
    """
    values = profile.values if isinstance(profile, DensityProfile) else np.asarray(profile)
    total = values.sum()
    if values.size == 0 or total == 0:
        raise ZeroNormError("Center of mass is undefined for an empty profile.")

    raw = float(np.arange(values.size) @ values)
    if normalized:
        return raw / total

    return raw


def time_averaged_density(trace: EvolutionTrace, T_total: float) -> DensityProfile:
    """
    Average the trace's densities over the steps `k = 1..N_steps`, `N_steps = round(T_total / dt)`.

    Empty sampled time points (NaN rows) are excluded from the average.
    """
    n_steps = round(T_total / trace.dt)
    if n_steps < 1:
        raise ValueError(f"T_total={T_total} covers no Trotter steps at dt={trace.dt}.")
    if trace.steps < n_steps:
        raise ValueError(f"Trace holds {trace.steps} steps, {n_steps} are required.")

    window = trace.densities[1 : n_steps + 1]
    finite = np.all(np.isfinite(window), axis=1)
    if not finite.any():
        raise ValueError("Trace has no non-empty time points to average.")

    return DensityProfile(window[finite].mean(axis=0))


def overlap_weighted_density(
    spec: ModelSpec, psi0: StateVector, filling: float | None = None
) -> DensityProfile:
    """
    Build the infinite-time density estimate from the initial state's eigenbasis overlaps.

    `n'(i) = C sum_j |<psi_j|psi0>| (<psi_j|Z_i|psi_j> + 1) / 2` over the unit-norm right
    eigenvectors `psi_j` of `H`; `C` fixes `sum_i n'(i) = filling` (half filling, `L / 2`, by
    default).

    The Hamiltonian conserves the particle number, so it is diagonalized separately inside every
    particle-number sector touched by `psi0`; degenerate eigenvalues from different sectors
    therefore never mix. Near-degenerate eigenvalues within a sector and entries above 1 are
    logged as warnings and kept as-is.
    """
    L = spec.L
    if psi0.num_qubits != L:
        raise ValueError(f"Initial state has {psi0.num_qubits} qubits, model has {L} sites.")

    target = L / 2 if filling is None else filling
    h = hamiltonian_dense(spec)
    amps = psi0.normalized().amplitudes
    popcounts = np.array([i.bit_count() for i in range(1 << L)])
    site_bits = (np.arange(1 << L)[:, np.newaxis] >> np.arange(L)) & 1

    raw = np.zeros(L)
    for sector in np.unique(popcounts[np.abs(amps) > 0]):
        idx = np.flatnonzero(popcounts == sector)
        evals, evecs = scipy.linalg.eig(h[np.ix_(idx, idx)])
        evecs = evecs / np.linalg.norm(evecs, axis=0)

        if evals.size > 1:
            gaps = np.abs(evals[:, np.newaxis] - evals[np.newaxis, :])
            gaps[np.diag_indices_from(gaps)] = np.inf
            if gaps.min() < DEGENERACY_TOL:
                logger.warning(
                    "Degenerate eigenvalues in the %d-particle sector, summing returned "
                    "eigenvectors without re-orthogonalization",
                    sector,
                )

        weights = np.abs(evecs.conj().T @ amps[idx])
        raw += (weights[:, np.newaxis] * (np.abs(evecs.T) ** 2 @ site_bits[idx])).sum(axis=0)

    if raw.sum() == 0:
        raise ZeroNormError("Initial state has no overlap with the eigenbasis.")

    profile = raw * (target / raw.sum())
    if profile.max() > 1:
        logger.warning("Overlap-weighted density exceeds 1 (max %.4g)", profile.max())

    return DensityProfile(profile)
