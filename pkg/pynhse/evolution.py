from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars

from pynhse import Mode, RealArray, Spin
from pynhse.exceptions import PostSelectionError
from pynhse.models import Layer, ModelSpec, TrotterPlan, expm, hamiltonian_dense
from pynhse.noise import ReadoutModel, corrupt, mitigate
from pynhse.observables import center_of_mass, density
from pynhse.statevector import (
    Bitstring,
    ShotTable,
    StateVector,
    apply,
    init_basis,
    inner,
    norm2,
    project,
    sample,
    tensor,
)

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class EvolutionTrace:
    """
    Time series of site densities recorded on the Trotter grid `T_k = k * dt`, `k = 0..steps`.

    `success_prob` is the cumulative post-selection probability after step `k`; ED traces carry no
    post-selection and report 1 throughout. Sampled traces additionally hold one `ShotTable` of
    post-selected counts per recorded time and the observed surviving fraction.
    """

    times: RealArray
    densities: RealArray
    success_prob: RealArray
    mode: Mode
    dt: float
    shots: int | None = None
    seed: int | None = None
    tables: list[ShotTable] | None = None
    survival: RealArray | None = None
    empty_steps: list[int] = field(default_factory=list)
    final_state: StateVector | None = None

    @property
    def num_sites(self) -> int:  # noqa: D102
        return self.densities.shape[1]

    @property
    def steps(self) -> int:  # noqa: D102
        return len(self.times) - 1

    def center_of_mass(self, normalized: bool = True) -> RealArray:
        """Center of mass per recorded time; NaN for empty sampled time points."""
        out = np.full(len(self.times), np.nan)
        for k, row in enumerate(self.densities):
            if np.all(np.isfinite(row)) and row.sum() > 0:
                out[k] = center_of_mass(row, normalized=normalized)

        return out

    def to_frame(self) -> polars.DataFrame:
        """Long-format density table with columns `(step, time, site, density, success_prob)`."""
        n_times, n_sites = self.densities.shape
        return polars.DataFrame(
            {
                "step": np.repeat(np.arange(n_times), n_sites),
                "time": np.repeat(self.times, n_sites),
                "site": np.tile(np.arange(n_sites), n_times),
                "density": self.densities.reshape(-1),
                "success_prob": np.repeat(self.success_prob, n_sites),
            }
        )

    def center_of_mass_frame(self) -> polars.DataFrame:
        """Per-time table of the normalized & raw center of mass plus post-selection metadata."""
        survival = self.survival if self.survival is not None else self.success_prob
        return polars.DataFrame(
            {
                "step": np.arange(len(self.times)),
                "time": self.times,
                "x_c": self.center_of_mass(normalized=True),
                "x_c_raw": self.center_of_mass(normalized=False),
                "success_prob": self.success_prob,
                "postselected_fraction": survival,
            }
        )

    def to_csv(self, out_dir: Path) -> None:
        """
        Write `density.csv` & `center_of_mass.csv` to the provided directory.

        Sampled traces also write `shots_<step>.csv` count tables. Existing files are overwritten.
        """
        out_dir.mkdir(parents=True, exist_ok=True)
        self.to_frame().write_csv(out_dir / "density.csv")
        self.center_of_mass_frame().write_csv(out_dir / "center_of_mass.csv")

        if self.tables is not None:
            width = len(str(len(self.tables) - 1))
            for k, table in enumerate(self.tables):
                table.to_frame().write_csv(out_dir / f"shots_{k:0{width}d}.csv")

    def summary(self) -> dict[str, object]:
        """JSON-friendly description of the trace, excluding the array data."""
        return {
            "mode": str(self.mode),
            "dt": self.dt,
            "steps": self.steps,
            "shots": self.shots,
            "seed": self.seed,
            "final_success_prob": float(self.success_prob[-1]),
            "empty_steps": self.empty_steps,
        }

    def to_json(self, filepath: Path) -> None:  # noqa: D102
        with filepath.open("w") as f:
            json.dump(self.summary(), f, indent=4)


def strip_ancillas(state: StateVector, num_physical: int) -> StateVector:
    """
    Extract the physical amplitudes with every ancilla (high qubit) in the up state.

    The result is unnormalized; on a post-selected register it equals the physical state.
    """
    n_anc = state.num_qubits - num_physical
    block = state.amplitudes.reshape(1 << n_anc, 1 << num_physical)
    return StateVector(num_physical, block[-1].copy())


def attach_ancillas(psi0: StateVector, plan: TrotterPlan, steps: int) -> StateVector:
    """Append the plan's ancilla register, initialized to all up, above the physical qubits."""
    if psi0.num_qubits != plan.num_physical:
        raise ValueError(
            f"Initial state has {psi0.num_qubits} qubits, plan expects {plan.num_physical}."
        )

    n_anc = plan.register_size(steps) - plan.num_physical
    if n_anc == 0:
        return psi0.copy()

    return tensor(psi0, init_basis(Bitstring((True,) * n_anc)))


def _apply_step(
    reg: StateVector, plan: TrotterPlan, step: int, postselect: bool
) -> tuple[StateVector, float]:
    """Apply one Trotter step; if `postselect`, project each ancilla onto up after its block."""
    success = 1.0
    for layer in plan.layers:
        if layer.dilation is None:
            reg = apply(reg, layer.matrix, layer.targets)
            continue

        ancilla = plan.ancilla_qubit(_slot(layer), step)
        reg = apply(reg, layer.dilation.as_gate(), (*layer.targets, ancilla))
        if postselect:
            reg, p = project(reg, ancilla, Spin.UP)
            if p == 0:
                raise PostSelectionError(
                    f"Post-selection impossible at step {step + 1} on ancilla {ancilla}."
                )
            success *= p

    return reg, success


def _slot(layer: Layer) -> int:
    if layer.ancilla_slot is None:  # pragma: no cover
        raise ValueError("Non-unitary layer is missing its ancilla binding.")

    return layer.ancilla_slot


def evolve_exact(plan: TrotterPlan, psi0: StateVector, steps: int) -> EvolutionTrace:
    """
    Run the plan on the statevector with per-step ancilla projection.

    Every ancilla is projected onto up immediately after its block; the kept branch leaves it in
    the up state, which is also its reset state. The register is never renormalized, so its
    squared norm tracks the cumulative success probability. Densities are reported from the
    renormalized physical state.
    """
    if steps < 0:
        raise ValueError("Number of steps must be non-negative.")

    n = plan.num_physical
    reg = attach_ancillas(psi0, plan, steps)
    n2_0 = norm2(reg)

    densities = [density(psi0).values]
    success = [1.0]
    for k in range(steps):
        reg, p = _apply_step(reg, plan, k, postselect=True)
        success.append(success[-1] * p)
        densities.append(density(strip_ancillas(reg, n)).values)

    logger.info("Exact evolution: %d steps, final success %.6g", steps, success[-1])
    return EvolutionTrace(
        times=plan.dt * np.arange(steps + 1),
        densities=np.array(densities),
        success_prob=np.array(success),
        mode=Mode.EXACT,
        dt=plan.dt,
        final_state=StateVector(reg.num_qubits, reg.amplitudes / math.sqrt(n2_0)),
    )


def _sampled_densities(
    table: ShotTable,
    ancillas: list[int],
    num_physical: int,
    readout: ReadoutModel | None,
    mitigate_readout: bool,
) -> tuple[ShotTable, RealArray]:
    physical = list(range(num_physical))
    kept = table.postselect(ancillas)
    if readout is None or not mitigate_readout or table.postselected_shots == 0:
        return kept, kept.densities(physical)

    quasi = mitigate(table, readout).postselect(ancillas)
    return kept, quasi.densities(physical)


def evolve_sampled(
    plan: TrotterPlan,
    psi0: StateVector,
    steps: int,
    shots: int,
    seed: int,
    readout: ReadoutModel | None = None,
    mitigate_readout: bool = False,
    deferred: bool = False,
) -> EvolutionTrace:
    """
    Emulate measurement of the plan with `shots` shots per recorded time.

    For each recorded step, full-register bitstrings are drawn from the exact intermediate
    distribution, optionally corrupted with readout noise, and every string with an ancilla read
    as down is discarded; densities come from the surviving counts (or from mitigated
    quasi-probabilities if `mitigate_readout` is set).

    With the default per-step semantics, shots lost at earlier steps are drawn binomially from the
    exact cumulative failure probability, and the remainder are sampled from the register before
    the current step's projections. Deferring the projections within a step is exact because
    each ancilla is bound at most once per step and later layers never act on it.

    If `deferred` is `True` nothing is projected: each recorded time samples the unprojected
    register of a fresh-ancilla plan and post-selects every ancilla used so far.

    Note:
        Readout noise acts on the final measurement record only; earlier per-step discards are
        treated as ideal.
    """
    if shots < 1:
        raise ValueError("At least one shot is required.")
    if deferred:
        plan.validate_deferred()

    n = plan.num_physical
    reg = attach_ancillas(psi0, plan, steps)
    if readout is not None and readout.num_qubits != reg.num_qubits:
        raise ValueError(
            f"Readout model covers {readout.num_qubits} qubits, register has {reg.num_qubits}."
        )

    seeds = np.random.SeedSequence(seed).spawn(steps + 1)
    cumulative = 1.0
    success, survival, densities = [], [], []
    tables: list[ShotTable] = []
    empty_steps: list[int] = []
    for k in range(steps + 1):
        binom_seq, sample_seq, noise_seq = seeds[k].spawn(3)
        if k == 0:
            pre, step_success, ancillas = reg, 1.0, []
        elif deferred:
            reg, _ = _apply_step(reg, plan, k - 1, postselect=False)
            pre, ancillas = reg, [q for s in range(k) for q in plan.step_ancillas(s)]
            step_success = 1.0
        else:
            pre, _ = _apply_step(reg, plan, k - 1, postselect=False)
            ancillas = plan.step_ancillas(k - 1)
            reg, step_success = _apply_step(reg, plan, k - 1, postselect=True)

        lost = 0
        if not deferred:
            p_lost = min(1.0, max(0.0, 1.0 - cumulative))
            lost = int(np.random.default_rng(binom_seq).binomial(shots, p_lost))
        raw = sample(pre, shots - lost, sample_seq)
        raw = ShotTable(raw.num_qubits, raw.counts, shots, raw.postselected_shots)
        if readout is not None:
            raw = corrupt(raw, readout, noise_seq)

        kept, dens = _sampled_densities(raw, ancillas, n, readout, mitigate_readout)
        if kept.postselected_shots == 0:
            logger.warning("All %d shots discarded at step %d", shots, k)
            empty_steps.append(k)

        if deferred:
            # Exact success of all ancillas so far, from the unprojected register
            marginal = pre
            for q in ancillas:
                marginal, p = project(marginal, q, Spin.UP)
                step_success *= p
                if p == 0:
                    break
            cumulative = step_success
        else:
            cumulative *= step_success

        success.append(cumulative)
        survival.append(kept.postselected_shots / shots)
        densities.append(dens)
        tables.append(kept)

    logger.info(
        "Sampled evolution: %d steps x %d shots, final surviving fraction %.4g",
        steps,
        shots,
        survival[-1],
    )
    return EvolutionTrace(
        times=plan.dt * np.arange(steps + 1),
        densities=np.array(densities),
        success_prob=np.array(success),
        mode=Mode.SAMPLED,
        dt=plan.dt,
        shots=shots,
        seed=seed,
        tables=tables,
        survival=np.array(survival),
        empty_steps=empty_steps,
    )


def postselection_fraction(trace: EvolutionTrace) -> float:
    """Return the fraction of shots surviving post-selection at the final recorded time."""
    if trace.mode != Mode.SAMPLED or trace.tables is None:
        raise ValueError("Post-selection fractions are only defined for sampled traces.")

    final = trace.tables[-1]
    return final.postselected_shots / final.total_shots


def evolve_ed(spec: ModelSpec, psi0: StateVector, T: float) -> StateVector:
    """Return `expm(-i H T) psi0` without normalization; the Trotter-free reference evolution."""
    if T < 0:
        raise ValueError("Evolution time must be non-negative.")
    if psi0.num_qubits != spec.L:
        raise ValueError(f"Initial state has {psi0.num_qubits} qubits, model has {spec.L} sites.")

    h = hamiltonian_dense(spec)
    return StateVector(spec.L, expm(-1j * T * h) @ psi0.amplitudes)


def ed_trace(spec: ModelSpec, psi0: StateVector, dt: float, steps: int) -> EvolutionTrace:
    """Record exact-diagonalization densities on the Trotter grid `T_k = k * dt`."""
    if psi0.num_qubits != spec.L:
        raise ValueError(f"Initial state has {psi0.num_qubits} qubits, model has {spec.L} sites.")

    propagator = expm(-1j * dt * hamiltonian_dense(spec))
    psi = psi0.amplitudes.copy()
    densities = [density(psi0).values]
    for _ in range(steps):
        psi = propagator @ psi
        densities.append(density(StateVector(spec.L, psi)).values)

    return EvolutionTrace(
        times=dt * np.arange(steps + 1),
        densities=np.array(densities),
        success_prob=np.ones(steps + 1),
        mode=Mode.ED,
        dt=dt,
        final_state=StateVector(spec.L, psi),
    )


def infidelity(a: StateVector, b: StateVector) -> float:
    """Return `1 - |<a|b>|^2` on the normalized states."""
    overlap = inner(a.normalized(), b.normalized())
    return max(0.0, 1.0 - abs(overlap) ** 2)
