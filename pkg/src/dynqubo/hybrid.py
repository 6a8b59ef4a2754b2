"""Iterative hybrid solver: parallel branches merged around one incumbent.

Each round runs three branches against the current incumbent -- tabu search
on the full problem, simulated annealing on the full problem, and a
decompose/subsolve/compose branch that extracts the highest-flip-impact
variables into a sub-QUBO -- then keeps the lowest-energy result.  Branches
share only the immutable QUBO and the frozen incumbent, so they may run
concurrently; the merge is associative, making results independent of
execution order.  Budgets are iteration/read counts by default so runs are
reproducible; wall-clock limits act only as safety caps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError
from .solvers import (
    SampleSet,
    SaSchedule,
    TabuConfig,
    _make_sampleset,
    brute_force,
    simulated_annealing,
    tabu_search,
)
from .transform import Qubo


@dataclass(frozen=True)
class HybridConfig:
    """Round budget and branch configuration for the hybrid loop."""

    max_iterations: int = 8
    convergence_patience: int = 3
    subproblem_size: int = 40
    branch_time_budget: float = 0.35  # seconds per branch per iteration (cap)
    sub_solver: str = "sa"  # virtual_qpu | sa | brute_force
    tabu_iterations: int = 2000
    sa_reads: int = 32
    sa_sweeps: int = 60
    sub_reads: int = 64
    sub_sweeps: int = 80
    random_init: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.subproblem_size < 1:
            raise ValueError("subproblem_size must be >= 1")
        if self.branch_time_budget <= 0:
            raise ValueError("branch time budget must be positive")
        if self.sub_solver not in ("virtual_qpu", "sa", "brute_force"):
            raise ValueError(f"unknown sub_solver {self.sub_solver!r}")


@dataclass
class BranchResult:
    """Best assignment found by one branch in one iteration."""

    branch_name: str
    assignment: np.ndarray
    energy: float
    wall_time: float


@dataclass
class IterationTrace:
    iteration: int
    branch_energies: dict[str, float]
    incumbent_energy: float
    cumulative_time: float


def energy_impact_decompose(
    qubo: Qubo, incumbent, size: int
) -> tuple[Qubo, list[int]]:
    """Restrict to the `size` variables with largest flip impact |dE|.

    Frozen variables keep their incumbent values; their contributions fold
    into the sub-QUBO's linear terms and offset, so a sub-assignment's energy
    equals the full energy of the composed assignment.
    """
    n = qubo.n_vars
    if not 1 <= size <= n:
        raise ValueError(f"size must be in [1, {n}]")
    y = np.asarray(incumbent, dtype=float).ravel()
    if y.size != n:
        raise ShapeMismatchError(f"incumbent has {y.size} entries, expected {n}")
    q = qubo.to_dense()
    q_sym = q + q.T
    np.fill_diagonal(q_sym, 0.0)
    fields = np.diag(q) + q_sym @ y
    impact = np.abs((1.0 - 2.0 * y) * fields)
    # stable selection: largest impact first, index breaking ties
    chosen = sorted(np.argsort(-impact, kind="stable")[:size].tolist())

    chosen_set = set(chosen)
    frozen = [i for i in range(n) if i not in chosen_set]
    sub_index = {full: s for s, full in enumerate(chosen)}
    offset = qubo.offset
    linear = np.zeros(size)
    coeff: dict[tuple[int, int], float] = {}
    for (i, j), value in qubo.coefficients.items():
        ii, jj = i in chosen_set, j in chosen_set
        if i == j:
            if ii:
                linear[sub_index[i]] += value
            else:
                offset += value * y[i]
        elif ii and jj:
            a, b = sorted((sub_index[i], sub_index[j]))
            coeff[(a, b)] = coeff.get((a, b), 0.0) + value
        elif ii:
            linear[sub_index[i]] += value * y[j]
        elif jj:
            linear[sub_index[j]] += value * y[i]
        else:
            offset += value * y[i] * y[j]
    for s, value in enumerate(linear):
        if value != 0.0:
            coeff[(s, s)] = coeff.get((s, s), 0.0) + value
    coeff = {k: v for k, v in coeff.items() if v != 0.0}
    labels = tuple(qubo.var_labels[i] for i in chosen) if qubo.var_labels else tuple(chosen)
    sub = Qubo(n_vars=size, coefficients=coeff, offset=offset, var_labels=labels)
    return sub, chosen


def compose(sub_sample, variable_map: list[int], incumbent) -> np.ndarray:
    """Merge a sub-assignment back into the incumbent."""
    sub = np.asarray(sub_sample).ravel()
    full = np.asarray(incumbent).ravel().astype(np.uint8).copy()
    if sub.size != len(variable_map):
        raise ShapeMismatchError(
            f"sub sample has {sub.size} entries, map has {len(variable_map)}"
        )
    if variable_map and max(variable_map) >= full.size:
        raise ShapeMismatchError("variable map exceeds incumbent length")
    for s, full_idx in enumerate(variable_map):
        full[full_idx] = int(sub[s])
    return full


def _virtual_sub_solve(sub: Qubo, cfg: HybridConfig, seed: int, virtual_ctx) -> np.ndarray:
    """Solve a sub-QUBO on the virtual QPU, reusing one clique embedding.

    The decomposer picks different variables each round but the sub-problem
    graph is always a subgraph of the complete graph on `size` nodes, so a
    single clique embedding per size serves every round.
    """
    from .embedding import (  # late import; embedding depends on solvers
        Embedding,
        default_chain_strength,
        embed_qubo,
        find_embedding,
        pegasus,
        virtual_qpu_solve,
    )

    ctx = virtual_ctx
    if ctx.get("hw") is None:
        ctx["hw"] = pegasus(6)
    hw = ctx["hw"]
    size = sub.n_vars
    if size not in ctx:
        nodes = list(range(size))
        edges = [(i, j) for i in range(size) for j in range(i + 1, size)]
        ctx[size], _ = find_embedding(nodes, edges, hw, seed=0)
    clique = ctx[size]
    rekeyed = Embedding({sub.var_labels[i]: clique.chains[i] for i in range(size)})
    embedded = embed_qubo(sub, rekeyed, default_chain_strength(sub), hw)
    sched = SaSchedule.auto(sub, cfg.sub_reads, cfg.sub_sweeps, probe_seed=seed)
    result, _ = virtual_qpu_solve(sub, hw, sched=sched, seed=seed, embedded=embedded)
    return result.best.assignment


def _sub_branch(qubo, incumbent, cfg: HybridConfig, seed: int, virtual_ctx) -> BranchResult:
    t0 = time.monotonic()
    size = min(cfg.subproblem_size, qubo.n_vars)
    sub, var_map = energy_impact_decompose(qubo, incumbent, size)
    if cfg.sub_solver == "brute_force":
        best = brute_force(sub).best.assignment
    elif cfg.sub_solver == "virtual_qpu":
        best = _virtual_sub_solve(sub, cfg, seed, virtual_ctx)
    else:
        sched = SaSchedule.auto(sub, cfg.sub_reads, cfg.sub_sweeps, probe_seed=seed)
        best = simulated_annealing(sub, sched=sched, seed=seed).best.assignment
    full = compose(best, var_map, incumbent)
    return BranchResult("decomposed", full, 0.0, time.monotonic() - t0)


def kerberos_run(
    qubo: Qubo,
    cfg: HybridConfig | None = None,
    seed: int = 0,
    branches: tuple[str, ...] = ("tabu", "sa", "decomposed"),
    virtual_hw=None,
) -> tuple[SampleSet, list[IterationTrace]]:
    """Run the budgeted-synchronous hybrid loop.

    Per iteration every enabled branch attacks the current incumbent within
    its budget; the merge keeps the lowest energy seen (so the incumbent
    sequence is non-increasing).  Stops at `max_iterations` or after
    `convergence_patience` iterations without improvement.  Real Kerberos
    races branches asynchronously; here rounds are synchronous so results
    are deterministic given the seed and branch set.
    """
    cfg = cfg or HybridConfig()
    rng = np.random.default_rng(seed)
    n = qubo.n_vars
    if cfg.random_init:
        incumbent = rng.integers(0, 2, n).astype(np.uint8)
    else:
        incumbent = np.zeros(n, dtype=np.uint8)
    incumbent_energy = qubo.energy(incumbent)
    t0 = time.monotonic()
    trace: list[IterationTrace] = []
    virtual_ctx: dict = {"hw": virtual_hw}
    stale = 0
    for iteration in range(cfg.max_iterations):
        iter_seed = int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])
        results: list[BranchResult] = []
        if "tabu" in branches:
            t_branch = time.monotonic()
            tabu_cfg = TabuConfig(
                tenure=min(10, max(n - 1, 1)),
                max_iterations=cfg.tabu_iterations,
                time_limit=cfg.branch_time_budget,
            )
            out = tabu_search(qubo, tabu_cfg, seed=iter_seed)
            results.append(
                BranchResult("tabu", out.best.assignment, out.best.energy,
                             time.monotonic() - t_branch)
            )
        if "sa" in branches:
            t_branch = time.monotonic()
            sched = SaSchedule.auto(qubo, cfg.sa_reads, cfg.sa_sweeps, probe_seed=seed)
            out = simulated_annealing(qubo, sched=sched, seed=iter_seed)
            results.append(
                BranchResult("sa", out.best.assignment, out.best.energy,
                             time.monotonic() - t_branch)
            )
        if "decomposed" in branches:
            results.append(_sub_branch(qubo, incumbent, cfg, iter_seed, virtual_ctx))
        for r in results:
            r.energy = qubo.energy(r.assignment)

        best_branch = min(results, key=lambda r: (r.energy, tuple(r.assignment)))
        improved = best_branch.energy < incumbent_energy
        if improved:
            incumbent = best_branch.assignment.astype(np.uint8)
            incumbent_energy = best_branch.energy
        stale = 0 if improved else stale + 1
        trace.append(
            IterationTrace(
                iteration=iteration,
                branch_energies={r.branch_name: r.energy for r in results},
                incumbent_energy=incumbent_energy,
                cumulative_time=time.monotonic() - t0,
            )
        )
        if stale >= cfg.convergence_patience:
            break
    wall = time.monotonic() - t0
    out = _make_sampleset(qubo, incumbent[None, :], "kerberos", wall, seed)
    out.trace = [(t.cumulative_time, t.incumbent_energy) for t in trace]
    return out, trace


def write_trace_csv(trace: list[IterationTrace], path: str):
    """Per-iteration trace: iteration, branch, energy, cumulative_ms."""
    lines = ["iteration,branch,energy,cumulative_ms"]
    for entry in trace:
        for branch, energy in sorted(entry.branch_energies.items()):
            lines.append(
                f"{entry.iteration},{branch},{energy!r},{entry.cumulative_time * 1e3:.3f}"
            )
        lines.append(
            f"{entry.iteration},incumbent,{entry.incumbent_energy!r},"
            f"{entry.cumulative_time * 1e3:.3f}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
