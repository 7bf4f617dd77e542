import json
import logging
import typing as t
from pathlib import Path

import numpy as np
import polars
import typer
from sco1_misc.prompts import prompt_for_dir
from typer.main import get_command

from pynhse import Mode, ModelKind, Scheme
from pynhse.config_utils import (
    EvolveConfig,
    FermiSkinConfig,
    RunConfig,
    VQAConfig,
    write_manifest,
)
from pynhse.evolution import (
    EvolutionTrace,
    attach_ancillas,
    ed_trace,
    evolve_exact,
    evolve_sampled,
    strip_ancillas,
)
from pynhse.exceptions import (
    BruteForceCapError,
    DenseCapExceededError,
    DilationError,
    InvalidConfigError,
    InvalidModelError,
    InvalidSchemeError,
    PostSelectionError,
    SingularOverlapError,
    ZeroNormError,
)
from pynhse.fermiskin import (
    hn_basis,
    hn_fermi_skin,
    hn_temperature_scaling,
    skin_deform,
    slater_density_bruteforce,
)
from pynhse.models import trotter_plan
from pynhse.observables import density
from pynhse.statevector import Bitstring, init_basis
from pynhse.vqa import AnsatzSpec, ansatz_apply, optimize, raw_cost, replay_density, target_apply

pynhse_cli = typer.Typer(add_completion=False, help="Non-Hermitian lattice dynamics simulator.")

vqa_app = typer.Typer(add_completion=False, help="Variational recompilation utilities.")
pynhse_cli.add_typer(vqa_app, name="vqa")

# Library failures surfaced to the user as a message & nonzero exit
LIBRARY_ERRORS = (
    BruteForceCapError,
    DenseCapExceededError,
    DilationError,
    InvalidModelError,
    InvalidSchemeError,
    PostSelectionError,
    SingularOverlapError,
    ZeroNormError,
)

SELFTEST_TOLERANCE = 1e-6


def _abort_with_message(message: str, end: str = "") -> t.Never:
    print(message, end=end)
    raise typer.Abort() from None


@pynhse_cli.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress.")) -> None:
    """Non-Hermitian lattice dynamics simulator."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


_C = t.TypeVar("_C", bound=RunConfig)


def _resolve_config(
    config_cls: type[_C], config_file: Path | None, overrides: dict[str, t.Any]
) -> _C:
    """Merge command line flags over the config file (if any) over the defaults, then validate."""
    try:
        base = config_cls.from_file(config_file) if config_file else config_cls()
        config = base.with_overrides(**overrides)
        config.validate()
    except InvalidConfigError as e:
        _abort_with_message(f"Error: {e}")

    return config


def _resolve_out_dir(out: Path | None) -> Path:
    if out is None:
        out = prompt_for_dir(title="Select Output Directory")

    out.mkdir(parents=True, exist_ok=True)
    return out


def _finalize(out: Path, command: str, config: RunConfig, artifacts: list[str]) -> None:
    config.to_file(out / "run_config.txt")
    write_manifest(out / "manifest.json", command, config, artifacts + ["run_config.txt"])
    print(f"Outputs written to: {out}")


def _run_evolution(config: EvolveConfig) -> EvolutionTrace:
    spec = config.to_spec()
    es = config.evolve_settings
    psi0 = config.initial_state()
    if es.mode == Mode.ED:
        return ed_trace(spec, psi0, es.dt, es.steps)

    plan = trotter_plan(spec, es.dt, config.scheme(), fresh_ancillas=es.deferred)
    if es.mode == Mode.EXACT:
        return evolve_exact(plan, psi0, es.steps)

    assert es.seed is not None
    return evolve_sampled(
        plan,
        psi0,
        es.steps,
        shots=es.shots,
        seed=es.seed,
        readout=config.readout_model(plan.register_size(es.steps)),
        mitigate_readout=config.readout_settings.mitigate,
        deferred=es.deferred,
    )


@pynhse_cli.command()
def evolve(
    model: ModelKind = typer.Option(None, case_sensitive=False),
    length: int = typer.Option(None, "--length", min=2),
    J: float = typer.Option(None, "--J"),
    gamma: float = typer.Option(None, "--gamma"),
    U: float = typer.Option(None, "--U"),
    scheme: Scheme = typer.Option(
        None, case_sensitive=False, help="Ancilla scheme; omitted picks the model default."
    ),
    mode: Mode = typer.Option(None, case_sensitive=False),
    dt: float = typer.Option(None, "--dt"),
    steps: int = typer.Option(None, "--steps", min=0),
    initial: str = typer.Option(None, "--initial", help="Basis kets joined by '+'."),
    shots: int = typer.Option(None, "--shots", min=1),
    seed: int = typer.Option(None, "--seed"),
    readout_p01: float = typer.Option(None, "--readout-p01"),
    readout_p10: float = typer.Option(None, "--readout-p10"),
    mitigate: bool = typer.Option(None, "--mitigate/--no-mitigate"),
    deferred: bool = typer.Option(None, "--deferred/--no-deferred"),
    config: Path = typer.Option(None, exists=True, file_okay=True, dir_okay=False),
    out: Path = typer.Option(None, file_okay=False, dir_okay=True),
) -> None:
    """
    Evolve an initial state & write its density trace.

    Command line flags take precedence over values set in `--config`, which take precedence over
    the defaults.
    """
    overrides = {
        "model": model,
        "length": length,
        "J": J,
        "gamma": gamma,
        "U": U,
        "scheme": scheme,
        "mode": mode,
        "dt": dt,
        "steps": steps,
        "initial": initial,
        "shots": shots,
        "seed": seed,
        "readout_p01": readout_p01,
        "readout_p10": readout_p10,
        "mitigate": mitigate,
        "deferred": deferred,
    }
    cfg = _resolve_config(EvolveConfig, config, overrides)
    out = _resolve_out_dir(out)

    es = cfg.evolve_settings
    print(f"Evolving {cfg.model_settings.model} ({es.mode}, {es.steps} steps)...", end="")
    try:
        trace = _run_evolution(cfg)
    except LIBRARY_ERRORS as e:
        _abort_with_message(f"\nError: {e}")
    print("Done!")

    trace.to_csv(out)
    trace.to_json(out / "summary.json")
    artifacts = sorted(p.name for p in out.glob("*.csv")) + ["summary.json"]
    _finalize(out, "evolve", cfg, artifacts)


@pynhse_cli.command(name="fermi-skin")
def fermi_skin(
    L: int = typer.Option(None, "--L", min=1),
    N: int = typer.Option(None, "--N", min=1),
    kappa: float = typer.Option(None, "--kappa", min=0),
    check_oracle: bool = typer.Option(None, "--check-oracle/--no-check-oracle"),
    sweep: list[float] = typer.Option(
        None, "--sweep", help="Extra kappa values for a beta_eff vs kappa regression."
    ),
    config: Path = typer.Option(None, exists=True, file_okay=True, dir_okay=False),
    out: Path = typer.Option(None, file_okay=False, dir_okay=True),
) -> None:
    """Compute the Hatano-Nelson Fermi skin density, its modes & a Fermi-Dirac fit."""
    overrides = {"L": L, "N": N, "kappa": kappa, "check_oracle": check_oracle}
    cfg = _resolve_config(FermiSkinConfig, config, overrides)
    out = _resolve_out_dir(out)

    fs = cfg.fermi_skin_settings
    print(f"Computing Fermi skin (L={fs.L}, N={fs.N}, kappa={fs.kappa})...", end="")
    try:
        decomposition = hn_fermi_skin(fs.L, fs.N, fs.kappa)
        report = decomposition.fit_report()
        if fs.check_oracle:
            oracle = slater_density_bruteforce(skin_deform(hn_basis(fs.L, fs.N), fs.kappa))
            report["oracle_max_deviation"] = float(np.max(np.abs(oracle - decomposition.total)))
    except LIBRARY_ERRORS as e:
        _abort_with_message(f"\nError: {e}")
    print("Done!")

    if fs.check_oracle:
        print(f"Max deviation from Slater oracle: {report['oracle_max_deviation']:.3e}")

    decomposition.to_frame().write_csv(out / "density.csv")
    polars.DataFrame(
        {"nu": np.arange(1, decomposition.b.size + 1), "b": decomposition.b}
    ).write_csv(out / "spectrum.csv")
    with (out / "fit.json").open("w") as f:
        json.dump(report, f, indent=4)

    artifacts = ["density.csv", "spectrum.csv", "fit.json"]
    if sweep:
        try:
            scaling = hn_temperature_scaling(fs.L, fs.N, sorted({fs.kappa, *sweep}))
        except (ValueError, *LIBRARY_ERRORS) as e:
            _abort_with_message(f"Error: {e}")

        print(f"beta_eff vs kappa slope: {scaling.slope:.3f} (offset {scaling.offset:.3f})")
        scaling.to_frame().write_csv(out / "scaling.csv")
        artifacts.append("scaling.csv")

    _finalize(out, "fermi-skin", cfg, artifacts)


def _params_frame(spec: AnsatzSpec, params: np.ndarray) -> polars.DataFrame:
    columns = params.reshape(spec.num_layers + 1, spec.num_qubits, 3)
    return polars.DataFrame(
        {
            "column": np.repeat(np.arange(spec.num_layers + 1), spec.num_qubits),
            "qubit": np.tile(np.arange(spec.num_qubits), spec.num_layers + 1),
            "theta": columns[..., 0].reshape(-1),
            "phi": columns[..., 1].reshape(-1),
            "lam": columns[..., 2].reshape(-1),
        }
    )


@vqa_app.command()
def train(
    model: ModelKind = typer.Option(None, case_sensitive=False),
    length: int = typer.Option(None, "--length", min=2),
    J: float = typer.Option(None, "--J"),
    gamma: float = typer.Option(None, "--gamma"),
    U: float = typer.Option(None, "--U"),
    scheme: Scheme = typer.Option(
        None, case_sensitive=False, help="Ancilla scheme; omitted picks the model default."
    ),
    dt: float = typer.Option(None, "--dt"),
    steps: int = typer.Option(None, "--steps", min=0),
    initial: str = typer.Option(None, "--initial", help="Basis kets joined by '+'."),
    layers: int = typer.Option(None, "--layers", min=0),
    ladder_repeats: int = typer.Option(None, "--ladder-repeats", min=1),
    budget: int = typer.Option(None, "--budget", min=1),
    seed: int = typer.Option(None, "--seed"),
    restarts: int = typer.Option(None, "--restarts", min=1),
    tolerance: float = typer.Option(None, "--tolerance", min=0),
    workers: int = typer.Option(None, "--workers", min=1),
    replay: bool = typer.Option(None, "--replay/--no-replay"),
    config: Path = typer.Option(None, exists=True, file_okay=True, dir_okay=False),
    out: Path = typer.Option(None, file_okay=False, dir_okay=True),
) -> None:
    """
    Train a fixed-depth ansatz to reproduce a post-selected Trotter evolution.

    Nonconvergence is not an error; the achieved cost is recorded in the training report.
    """
    overrides = {
        "model": model,
        "length": length,
        "J": J,
        "gamma": gamma,
        "U": U,
        "scheme": scheme,
        "dt": dt,
        "steps": steps,
        "initial": initial,
        "layers": layers,
        "ladder_repeats": ladder_repeats,
        "budget": budget,
        "train_seed": seed,
        "restarts": restarts,
        "tolerance": tolerance,
        "workers": workers,
        "replay": replay,
    }
    cfg = _resolve_config(VQAConfig, config, overrides)
    out = _resolve_out_dir(out)

    es, vs = cfg.evolve_settings, cfg.vqa_settings
    try:
        spec = cfg.to_spec()
        psi0 = cfg.initial_state()
        plan = trotter_plan(spec, es.dt, cfg.scheme())
        register = attach_ancillas(psi0, plan, es.steps)
        target, amplitude = target_apply(plan, psi0, es.steps)
    except LIBRARY_ERRORS as e:
        _abort_with_message(f"Error: {e}")

    ansatz = AnsatzSpec(register.num_qubits, vs.layers, vs.ladder_repeats)
    print(f"Training {ansatz.num_params} parameters on {ansatz.num_qubits} qubits...", end="")
    result = optimize(
        ansatz,
        register,
        target,
        budget=vs.budget,
        seed=vs.train_seed,
        restarts=vs.restarts,
        tolerance=vs.tolerance,
        workers=vs.workers,
    )
    print("Done!")
    print(f"Final cost: {result.cost:.6g}")

    report = result.report(ansatz)
    report["raw_cost"] = raw_cost(ansatz, result.params, register, target, amplitude)
    report["success_amplitude"] = amplitude
    artifacts = ["training_report.json", "params.csv"]

    if vs.replay:
        replayed = replay_density(ansatz, result.params, register, spec.L)
        expected = density(strip_ancillas(target, spec.L))
        report["replay_max_deviation"] = float(np.max(np.abs(replayed.values - expected.values)))
        polars.DataFrame(
            {"site": np.arange(spec.L), "replay": replayed.values, "target": expected.values}
        ).write_csv(out / "replay.csv")
        artifacts.append("replay.csv")
        print(f"Replay max density deviation: {report['replay_max_deviation']:.3e}")

    with (out / "training_report.json").open("w") as f:
        json.dump(report, f, indent=4)
    _params_frame(ansatz, result.params).write_csv(out / "params.csv")

    _finalize(out, "vqa train", cfg, artifacts)


@vqa_app.command()
def selftest(
    qubits: int = typer.Option(3, min=1),
    layers: int = typer.Option(2, min=0),
    seed: int = 0,
    budget: int = typer.Option(2000, min=1),
    restarts: int = typer.Option(3, min=1),
) -> None:
    """Recover a planted ansatz solution from random parameters."""
    ansatz = AnsatzSpec(qubits, layers)
    planted = np.random.default_rng(seed).uniform(-np.pi, np.pi, ansatz.num_params)
    psi0 = init_basis(Bitstring((False,) * qubits))
    target = ansatz_apply(ansatz, planted, psi0)

    print(f"Recovering planted solution ({ansatz.num_params} parameters)...", end="")
    result = optimize(
        ansatz,
        psi0,
        target,
        budget=budget,
        seed=seed + 1,
        restarts=restarts,
        tolerance=SELFTEST_TOLERANCE,
    )
    print("Done!")

    print(f"Final cost: {result.cost:.3e} after {result.evaluations} evaluations")
    if result.cost > SELFTEST_TOLERANCE:
        _abort_with_message(f"Self-test failed: cost exceeds {SELFTEST_TOLERANCE:.0e}")


# For mkdocs-click, this must be after all the commands have been defined
pynhse_click = get_command(pynhse_cli)

if __name__ == "__main__":  # pragma: no cover
    pynhse_cli()
