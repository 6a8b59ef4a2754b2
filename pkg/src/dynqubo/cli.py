"""Command-line entry points: compile, solve, embed, hybrid, sweep, report."""

from __future__ import annotations

import argparse
import os
import sys

from . import harness, polyalg
from .embedding import (
    default_chain_strength,
    embed_qubo,
    find_embedding,
    grid,
    pegasus,
    qubo_interaction_graph,
    write_chains_dot,
)
from .hybrid import HybridConfig, kerberos_run, write_trace_csv
from .model import load_preset, load_problem_file
from .solvers import (
    SaSchedule,
    TabuConfig,
    brute_force,
    projected_gradient,
    simulated_annealing,
    tabu_search,
)
from .transform import compile_problem, read_qubo, write_qubo


def _add_problem_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--problem", help="problem definition file")
    parser.add_argument("--preset", help="built-in problem preset (cstr)")
    parser.add_argument("--bits", type=int, help="bits per input variable")


def _load_problem_spec(args):
    if args.problem:
        spec = load_problem_file(args.problem)
    else:
        spec = load_preset(args.preset or "cstr")
    if getattr(args, "bits", None):
        spec.bits_per_input = args.bits
    return spec


def _compile_from_args(args):
    spec = _load_problem_spec(args)
    return spec, compile_problem(spec.problem, spec.bits_per_input)


def _parse_topology(text: str):
    kind, _, size = text.partition(":")
    if kind == "pegasus":
        return pegasus(int(size or 16))
    if kind == "grid":
        rows, _, cols = size.partition("x")
        return grid(int(rows), int(cols or rows))
    raise SystemExit(f"unknown topology {text!r} (use pegasus:M or grid:RxC)")


def cmd_compile(args) -> int:
    spec, compiled = _compile_from_args(args)
    qubo = compiled.qubo
    print(f"instance: {spec.problem.label}")
    print(f"box variables: {len(compiled.box.input_vars())}")
    print(f"binary variables: {qubo.n_vars} (auxiliaries: {len(compiled.aux_definitions)})")
    print(f"qubo terms: {len(qubo.coefficients)}  offset: {qubo.offset:.9g}")
    if args.dump_poly:
        with open(args.dump_poly, "w") as fh:
            fh.write(polyalg.to_text(compiled.binary_objective))
        print(f"wrote polynomial to {args.dump_poly}")
    if args.emit_qubo:
        write_qubo(qubo, args.emit_qubo)
        print(f"wrote qubo to {args.emit_qubo}")
    return 0


def _qubo_from_args(args):
    if args.qubo:
        return None, read_qubo(args.qubo)
    spec, compiled = _compile_from_args(args)
    return compiled, compiled.qubo


def cmd_solve(args) -> int:
    if args.solver == "pgd":
        if args.qubo:
            raise SystemExit("pgd solves the continuous box problem; pass --preset/--problem")
        _, compiled = _compile_from_args(args)
        result = projected_gradient(compiled.box, tol=args.tol, max_iter=args.max_iterations)
        print(f"solver: pgd\nconverged: {result.converged}")
        print(f"objective: {result.objective:.9g}")
        for var, value in zip(result.var_order, result.values):
            print(f"{var} = {value:.9g}")
        return 0
    _, qubo = _qubo_from_args(args)
    if args.solver == "brute":
        sampleset = brute_force(qubo)
    elif args.solver == "sa":
        sched = SaSchedule.auto(
            qubo, num_reads=args.reads, sweeps_per_read=args.sweeps, probe_seed=args.seed
        )
        sampleset = simulated_annealing(qubo, sched=sched, seed=args.seed)
    else:  # tabu
        cfg = TabuConfig(
            tenure=args.tenure,
            max_iterations=args.max_iterations,
            time_limit=args.time_limit,
        )
        sampleset = tabu_search(qubo, cfg, seed=args.seed)
    text = sampleset.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"best energy: {sampleset.best_energy():.9g} ({len(sampleset.samples)} samples)")
        print(f"wrote samples to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_embed(args) -> int:
    _, qubo = _qubo_from_args(args)
    hw = _parse_topology(args.topology)
    labels, edges = qubo_interaction_graph(qubo)
    emb, report = find_embedding(labels, edges, hw, seed=args.seed, tries=args.tries)
    cs = args.chain_strength if args.chain_strength else default_chain_strength(qubo)
    embedded = embed_qubo(qubo, emb, cs, hw)
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    emb_path = os.path.join(out_dir, "embedding.txt")
    with open(emb_path, "w") as fh:
        fh.write(emb.to_text())
    report_path = os.path.join(out_dir, "embedding_report.txt")
    with open(report_path, "w") as fh:
        fh.write(report.to_text())
    print(f"topology: {hw.topology_tag}  chain strength: {cs:.9g}")
    print(report.to_text(), end="")
    print(f"wrote {emb_path} and {report_path}")
    if args.dot:
        write_chains_dot(embedded, hw, args.dot)
        print(f"wrote chain visualization to {args.dot}")
    return 0


def cmd_hybrid(args) -> int:
    _, qubo = _qubo_from_args(args)
    cfg = HybridConfig(
        max_iterations=args.iters,
        subproblem_size=min(args.subsize, qubo.n_vars),
        sub_solver=args.sub_solver,
    )
    sampleset, trace = kerberos_run(qubo, cfg, seed=args.seed)
    print(f"iterations: {len(trace)}")
    print(f"best energy: {sampleset.best_energy():.9g}")
    if args.trace_csv:
        write_trace_csv(trace, args.trace_csv)
        print(f"wrote trace to {args.trace_csv}")
    return 0


def cmd_sweep(args) -> int:
    cfg = harness.load_experiment_file(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    report = harness.sweep(cfg)
    print(f"rows: {len(report.rows)}  executed: {report.executed_cells}  "
          f"failures: {len(report.failures)}")
    for failure in report.failures:
        print(f"failure: {failure}")
    return 1 if report.failures else 0


def cmd_report(args) -> int:
    rows = harness.read_runs_csv(os.path.join(args.in_dir, "runs.csv"))
    report = harness.Report(rows=rows)
    out_dir = args.out_dir or args.in_dir
    written = harness.report_export(report, args.format, out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynqubo",
        description="compile dynamic optimization problems to QUBO and solve them",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="problem -> box -> binary -> qubo")
    _add_problem_flags(p)
    p.add_argument("--dump-poly", help="write the binarized polynomial to this path")
    p.add_argument("--emit-qubo", help="write the qubo text file to this path")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("solve", help="run one solver on a qubo or problem")
    p.add_argument("--solver", required=True, choices=("brute", "sa", "tabu", "pgd"))
    p.add_argument("--qubo", help="qubo text file to solve")
    _add_problem_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reads", type=int, default=200, help="sa reads")
    p.add_argument("--sweeps", type=int, default=100, help="sa sweeps per read")
    p.add_argument("--tenure", type=int, default=10, help="tabu tenure")
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-9, help="pgd tolerance")
    p.add_argument("--out", help="write the sample set to this path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("embed", help="minor-embed a qubo onto a hardware topology")
    p.add_argument("--qubo", help="qubo text file")
    _add_problem_flags(p)
    p.add_argument("--topology", default="pegasus:16", help="pegasus:M or grid:RxC")
    p.add_argument("--chain-strength", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tries", type=int, default=16)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--dot", help="write a DOT dump of the chains")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("hybrid", help="iterative hybrid solve")
    p.add_argument("--qubo", help="qubo text file")
    _add_problem_flags(p)
    p.add_argument("--subsize", type=int, default=40)
    p.add_argument("--iters", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sub-solver", default="sa", choices=("sa", "brute_force", "virtual_qpu"))
    p.add_argument("--trace-csv", help="write per-iteration trace CSV")
    p.set_defaults(func=cmd_hybrid)

    p = sub.add_parser("sweep", help="run a solver x bits x seed grid")
    p.add_argument("--config", required=True, help="experiment definition file")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-export aggregates from a sweep directory")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--format", default="csv", choices=("csv", "structured-text"))
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
