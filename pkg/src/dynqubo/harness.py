"""Experiment runner: error metrics, gap-at-time curves, and grid sweeps.

A sweep runs a (solver x bits x seed x repetition) grid against one problem,
scores every run against a shared classical baseline, and writes fixed-column
CSV plus a structured text summary.  Completed cells found in the output are
skipped, so interrupted sweeps resume for free.  Hardware-only quantities
(QPU access time, microsecond annealing schedules) have no desk-scale
equivalent here; the gap-at-time columns are the substitute measure.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError
from .hybrid import HybridConfig, kerberos_run
from .model import DynamicOptProblem, load_preset, load_problem_file, simulate
from .solvers import (
    SaSchedule,
    TabuConfig,
    brute_force,
    decode,
    projected_gradient,
    simulated_annealing,
    tabu_search,
)
from .transform import CompiledProblem, compile_problem

GAP_TIMESLOTS_MS = (100, 500, 1000)
CSV_COLUMNS = (
    "instance", "solver", "bits", "seed", "energy", "error_K_per_step",
    "wall_ms", "gap_at_100ms", "gap_at_500ms", "gap_at_1000ms",
)
AGGREGATE_COLUMNS = (
    "instance", "solver", "bits", "n_runs",
    "energy_mean", "energy_min", "energy_max",
    "error_mean", "error_min", "error_max", "wall_ms_mean",
)


def error_per_timestep(candidate, reference) -> float:
    """Mean absolute input deviation per timestep, in input units (K)."""
    c = np.asarray(candidate, dtype=float)
    r = np.asarray(reference, dtype=float)
    if c.shape != r.shape:
        raise LengthMismatchError(f"shapes differ: {c.shape} vs {r.shape}")
    if c.size == 0:
        return 0.0
    return float(np.mean(np.abs(c - r)))


def gap_at_time(trace, e_star: float, t: float) -> float:
    """Relative gap of the best incumbent by wall time t.

    (E(t) - E*) / max(|E*|, 1e-12); +inf before the first recorded sample.
    """
    if not trace:
        raise ValueError("trace is empty")
    if not math.isfinite(e_star):
        raise ValueError("reference energy must be finite")
    best = math.inf
    for when, energy in trace:
        if when <= t and energy < best:
            best = energy
    if not math.isfinite(best):
        return math.inf
    return (best - e_star) / max(abs(e_star), 1e-12)


@dataclass(frozen=True)
class SolverSpec:
    """One solver column of the sweep grid."""

    name: str
    kind: str  # brute | sa | tabu | pgd | hybrid
    params: tuple = ()  # ordered (key, value) pairs

    def __post_init__(self):
        if self.kind not in ("brute", "sa", "tabu", "pgd", "hybrid"):
            raise ValueError(f"unknown solver kind {self.kind!r}")

    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass
class ExperimentConfig:
    """Sweep definition: problem, bit widths, solver matrix, seeds, reps."""

    preset: str | None = "cstr"
    problem_file: str | None = None
    bits: tuple[int, ...] = (4,)
    solvers: tuple[SolverSpec, ...] = (SolverSpec("sa", "sa"),)
    seeds: tuple[int, ...] = (0,)
    repetitions: int = 1
    reference: str = "pgd"  # pgd | brute
    out_dir: str | None = None

    def __post_init__(self):
        if not self.bits or not self.solvers or not self.seeds:
            raise ValueError("bits, solvers, and seeds grids must be nonempty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.reference not in ("pgd", "brute"):
            raise ValueError(f"unknown reference {self.reference!r}")


@dataclass
class RunRow:
    instance: str
    solver: str
    bits: int
    seed: int
    energy: float
    error_K_per_step: float
    wall_ms: float
    gap_at_100ms: float
    gap_at_500ms: float
    gap_at_1000ms: float

    def key(self) -> tuple:
        return (self.instance, self.solver, self.bits, self.seed)


@dataclass
class Report:
    """Sweep output: one row per run plus cell-level aggregates."""

    rows: list[RunRow] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    reference_label: str = "pgd"
    executed_cells: int = 0

    def aggregates(self) -> list[dict]:
        cells: dict[tuple, list[RunRow]] = {}
        for row in self.rows:
            cells.setdefault((row.instance, row.solver, row.bits), []).append(row)
        out = []
        for (instance, solver, bits), rows in sorted(cells.items()):
            energies = [r.energy for r in rows]
            errors = [r.error_K_per_step for r in rows]
            out.append(
                {
                    "instance": instance,
                    "solver": solver,
                    "bits": bits,
                    "n_runs": len(rows),
                    "energy_mean": float(np.mean(energies)),
                    "energy_min": min(energies),
                    "energy_max": max(energies),
                    "error_mean": float(np.mean(errors)),
                    "error_min": min(errors),
                    "error_max": max(errors),
                    "wall_ms_mean": float(np.mean([r.wall_ms for r in rows])),
                }
            )
        return out


def _fmt(value) -> str:
    """Serialize numbers at 9 significant digits (inf passes through)."""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.9g}"
    return str(value)


def _derived_seed(seed: int, rep: int) -> int:
    if rep == 0:
        return seed
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


def _load_spec(cfg: ExperimentConfig):
    if cfg.problem_file:
        return load_problem_file(cfg.problem_file)
    return load_preset(cfg.preset or "cstr")


def _run_cell(
    compiled: CompiledProblem,
    spec: SolverSpec,
    seed: int,
    ref_inputs: np.ndarray,
    e_star: float,
    problem: DynamicOptProblem,
) -> RunRow:
    params = spec.param_dict()
    qubo = compiled.qubo
    if spec.kind == "brute":
        result = brute_force(qubo)
    elif spec.kind == "sa":
        sched = SaSchedule.auto(
            qubo,
            num_reads=int(params.get("num_reads", 200)),
            sweeps_per_read=int(params.get("sweeps", 100)),
            probe_seed=seed,
        )
        result = simulated_annealing(qubo, sched=sched, seed=seed)
    elif spec.kind == "tabu":
        cfg = TabuConfig(
            tenure=int(params.get("tenure", 10)),
            max_iterations=int(params.get("max_iterations", 2000)),
            time_limit=params.get("time_limit"),
            restarts=int(params.get("restarts", 1)),
        )
        result = tabu_search(qubo, cfg, seed=seed)
    elif spec.kind == "hybrid":
        hybrid_cfg = HybridConfig(
            max_iterations=int(params.get("max_iterations", 6)),
            subproblem_size=min(int(params.get("subproblem_size", 40)), qubo.n_vars),
            sub_solver=params.get("sub_solver", "sa"),
        )
        result, _ = kerberos_run(qubo, hybrid_cfg, seed=seed)
    elif spec.kind == "pgd":
        t0 = time.monotonic()
        pgd = projected_gradient(
            compiled.box,
            tol=float(params.get("tol", 1e-9)),
            max_iter=int(params.get("max_iter", 10000)),
        )
        wall = time.monotonic() - t0
        inputs = pgd.input_sequence(problem)
        traj = simulate(problem, inputs)
        trace = [(wall, traj.objective_value)]
        return RunRow(
            instance=problem.label,
            solver=spec.name,
            bits=compiled_bits(compiled),
            seed=seed,
            energy=traj.objective_value,
            error_K_per_step=error_per_timestep(inputs, ref_inputs),
            wall_ms=wall * 1e3,
            gap_at_100ms=gap_at_time(trace, e_star, 0.1),
            gap_at_500ms=gap_at_time(trace, e_star, 0.5),
            gap_at_1000ms=gap_at_time(trace, e_star, 1.0),
        )
    else:  # pragma: no cover - guarded by SolverSpec
        raise ValueError(spec.kind)

    inputs, traj = decode(result.best.assignment, compiled.scheme, problem)
    if abs(result.best.energy - traj.objective_value) > 1e-9 * max(
        1.0, abs(traj.objective_value)
    ):
        raise AssertionError(
            f"energy {result.best.energy} disagrees with simulated objective "
            f"{traj.objective_value}"
        )
    trace = result.trace or [(result.wall_time, result.best.energy)]
    return RunRow(
        instance=problem.label,
        solver=spec.name,
        bits=compiled_bits(compiled),
        seed=seed,
        energy=result.best.energy,
        error_K_per_step=error_per_timestep(inputs, ref_inputs),
        wall_ms=result.wall_time * 1e3,
        gap_at_100ms=gap_at_time(trace, e_star, 0.1),
        gap_at_500ms=gap_at_time(trace, e_star, 0.5),
        gap_at_1000ms=gap_at_time(trace, e_star, 1.0),
    )


def compiled_bits(compiled: CompiledProblem) -> int:
    widths = {n for n, _, _ in compiled.scheme.entries.values()}
    return widths.pop() if len(widths) == 1 else -1


def sweep(cfg: ExperimentConfig) -> Report:
    """Run the full grid; cells already present in the output are skipped."""
    spec = _load_spec(cfg)
    problem = spec.problem
    report = Report(reference_label=cfg.reference)

    existing: dict[tuple, RunRow] = {}
    runs_path = None
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        runs_path = os.path.join(cfg.out_dir, "runs.csv")
        if os.path.exists(runs_path):
            for row in read_runs_csv(runs_path):
                existing[row.key()] = row

    compiled_cache: dict[int, CompiledProblem] = {}
    estar_cache: dict[int, float] = {}
    baseline = None
    ref_cache: dict[int, np.ndarray] = {}

    for bits in cfg.bits:
        if bits not in compiled_cache:
            compiled_cache[bits] = compile_problem(problem, bits)
        compiled = compiled_cache[bits]
        if baseline is None:
            baseline = projected_gradient(compiled.box, tol=1e-10, max_iter=100_000)
        if bits not in ref_cache:
            if cfg.reference == "brute":
                best = brute_force(compiled.qubo).best
                ref_cache[bits], _ = decode(best.assignment, compiled.scheme, problem)
            else:
                ref_cache[bits] = baseline.input_sequence(problem)
        if bits not in estar_cache:
            if compiled.qubo.n_vars <= 30:
                estar_cache[bits] = brute_force(compiled.qubo).best_energy()
            else:
                estar_cache[bits] = baseline.objective

        for solver_spec in cfg.solvers:
            for seed in cfg.seeds:
                for rep in range(cfg.repetitions):
                    run_seed = _derived_seed(seed, rep)
                    key = (problem.label, solver_spec.name, bits, run_seed)
                    if key in existing:
                        report.rows.append(existing[key])
                        continue
                    try:
                        row = _run_cell(
                            compiled, solver_spec, run_seed,
                            ref_cache[bits], estar_cache[bits], problem,
                        )
                    except Exception as exc:  # per-cell failures do not stop the sweep
                        report.failures.append(
                            f"{solver_spec.name} bits={bits} seed={run_seed}: {exc}"
                        )
                        continue
                    report.rows.append(row)
                    report.executed_cells += 1

    if cfg.out_dir:
        report_export(report, "csv", cfg.out_dir)
        report_export(report, "structured-text", cfg.out_dir)
    return report


# -- export / import -----------------------------------------------------------


def write_runs_csv(rows: list[RunRow], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.instance, row.solver, _fmt(row.bits), _fmt(row.seed),
                    _fmt(row.energy), _fmt(row.error_K_per_step), _fmt(row.wall_ms),
                    _fmt(row.gap_at_100ms), _fmt(row.gap_at_500ms), _fmt(row.gap_at_1000ms),
                ]
            )


def read_runs_csv(path: str) -> list[RunRow]:
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for record in reader:
                rows.append(
                    RunRow(
                        instance=record["instance"],
                        solver=record["solver"],
                        bits=int(record["bits"]),
                        seed=int(record["seed"]),
                        energy=float(record["energy"]),
                        error_K_per_step=float(record["error_K_per_step"]),
                        wall_ms=float(record["wall_ms"]),
                        gap_at_100ms=float(record["gap_at_100ms"]),
                        gap_at_500ms=float(record["gap_at_500ms"]),
                        gap_at_1000ms=float(record["gap_at_1000ms"]),
                    )
                )
    except OSError as exc:
        raise OSError(f"cannot read runs csv at {path}: {exc}") from exc
    return rows


def report_export(report: Report, fmt: str, out_dir: str) -> list[str]:
    """Write the report files; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if fmt == "csv":
        runs_path = os.path.join(out_dir, "runs.csv")
        write_runs_csv(report.rows, runs_path)
        written.append(runs_path)
        agg_path = os.path.join(out_dir, "aggregates.csv")
        with open(agg_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(AGGREGATE_COLUMNS)
            for agg in report.aggregates():
                writer.writerow([_fmt(agg[c]) for c in AGGREGATE_COLUMNS])
        written.append(agg_path)
    elif fmt == "structured-text":
        summary_path = os.path.join(out_dir, "summary.txt")
        lines = [
            f"reference: {report.reference_label}",
            f"rows: {len(report.rows)}",
            f"failures: {len(report.failures)}",
        ]
        for failure in report.failures:
            lines.append(f"  failure: {failure}")
        for agg in report.aggregates():
            lines.append(
                "cell "
                + " ".join(f"{c}={_fmt(agg[c])}" for c in AGGREGATE_COLUMNS)
            )
        with open(summary_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(summary_path)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return written


def load_experiment_file(path: str) -> ExperimentConfig:
    """Read a sweep definition: [experiment] plus [solver.<name>] sections."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not cp.read(path):
        raise FileNotFoundError(f"experiment file not found: {path}")
    exp = cp["experiment"] if cp.has_section("experiment") else {}

    def int_list(raw: str) -> tuple[int, ...]:
        return tuple(int(tok) for tok in raw.replace(",", " ").split())

    solvers = []
    for section in cp.sections():
        if not section.startswith("solver."):
            continue
        name = section.split(".", 1)[1]
        body = dict(cp[section])
        kind = body.pop("kind", name)
        solvers.append(SolverSpec(name=name, kind=kind, params=tuple(sorted(body.items()))))
    if not solvers:
        solvers = [SolverSpec("sa", "sa")]
    return ExperimentConfig(
        preset=exp.get("preset", "cstr") if "problem" not in exp else None,
        problem_file=exp.get("problem"),
        bits=int_list(exp.get("bits", "4")),
        solvers=tuple(solvers),
        seeds=int_list(exp.get("seeds", "0")),
        repetitions=int(exp.get("repetitions", 1)),
        reference=exp.get("reference", "pgd"),
        out_dir=exp.get("out_dir"),
    )
