"""Classical solution engines for QUBO and box-constrained problems.

Four engines with one sample-set currency: exhaustive enumeration (the
ground-truth oracle on small instances), simulated annealing, tabu search,
and a projected-gradient method for the continuous box problem that serves
as the classical baseline.  All stochastic solvers are deterministic given
their seed; per-read seeds derive as seed XOR read-index.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import LengthMismatchError, TooLargeError
from .model import DynamicOptProblem, Trajectory, simulate
from .polyalg import evaluate_batch
from .transform import BinarizationScheme, BoxProblem, Qubo

BRUTE_FORCE_MAX_VARS = 30


@dataclass
class Sample:
    """One binary assignment with its energy and multiplicity."""

    assignment: np.ndarray  # uint8 vector
    energy: float
    occurrences: int = 1


@dataclass
class SampleSet:
    """Solver output: samples sorted by energy, plus timing metadata.

    `trace` records (cumulative_seconds, best_energy_so_far) checkpoints for
    gap-at-time reporting.
    """

    samples: list[Sample]
    solver_name: str
    wall_time: float
    rng_seed: int | None = None
    trace: list[tuple[float, float]] = field(default_factory=list)

    @property
    def best(self) -> Sample:
        return self.samples[0]

    def best_energy(self) -> float:
        return self.samples[0].energy

    def to_text(self) -> str:
        lines = [
            f"solver: {self.solver_name}",
            f"wall_time_s: {self.wall_time:.6f}",
            f"seed: {self.rng_seed}",
            f"num_samples: {len(self.samples)}",
            "# energy occurrences bitstring",
        ]
        for s in self.samples:
            bits = "".join(str(int(x)) for x in s.assignment)
            lines.append(f"{s.energy!r} {s.occurrences} {bits}")
        return "\n".join(lines) + "\n"


def _make_sampleset(
    qubo: Qubo,
    bit_matrix: np.ndarray,
    solver_name: str,
    wall_time: float,
    seed: int | None,
    trace: list[tuple[float, float]] | None = None,
) -> SampleSet:
    """Score, deduplicate, and sort assignments (energy, then lexicographic)."""
    bits = np.asarray(bit_matrix, dtype=np.uint8)
    if bits.ndim == 1:
        bits = bits[None, :]
    energies = qubo.energies(bits.astype(np.float64))
    merged: dict[bytes, Sample] = {}
    for row, energy in zip(bits, energies):
        key = row.tobytes()
        if key in merged:
            merged[key].occurrences += 1
        else:
            merged[key] = Sample(assignment=row.copy(), energy=float(energy))
    samples = sorted(
        merged.values(), key=lambda s: (s.energy, tuple(s.assignment))
    )
    return SampleSet(
        samples=samples,
        solver_name=solver_name,
        wall_time=wall_time,
        rng_seed=seed,
        trace=trace or [],
    )


def brute_force(qubo: Qubo) -> SampleSet:
    """Score every assignment; returns all global minima (exact ties).

    Guarded at 30 variables; enumeration runs in vectorized blocks.
    """
    n = qubo.n_vars
    if n > BRUTE_FORCE_MAX_VARS:
        raise TooLargeError(f"{n} variables exceeds brute-force guard ({BRUTE_FORCE_MAX_VARS})")
    t0 = time.monotonic()
    total = 1 << n
    block = 1 << min(n, 16)
    shifts = np.arange(n, dtype=np.uint64)
    best_energy = np.inf
    best_rows: list[np.ndarray] = []
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.uint64)
        bits = ((idx[:, None] >> shifts) & 1).astype(np.float64)
        energies = qubo.energies(bits)
        m = float(energies.min())
        if m < best_energy:
            best_energy = m
            best_rows = [bits[energies == m].astype(np.uint8)]
        elif m == best_energy:
            best_rows.append(bits[energies == m].astype(np.uint8))
    rows = np.vstack(best_rows)
    wall = time.monotonic() - t0
    out = _make_sampleset(qubo, rows, "brute_force", wall, None)
    out.trace = [(wall, out.best_energy())]
    return out


@dataclass(frozen=True)
class SaSchedule:
    """Annealing schedule: reads, sweeps, and the inverse-temperature ramp."""

    num_reads: int = 100
    sweeps_per_read: int = 100
    beta_start: float = 0.1
    beta_end: float = 10.0
    schedule_kind: str = "geometric"

    def __post_init__(self):
        if self.num_reads < 1 or self.sweeps_per_read < 1:
            raise ValueError("num_reads and sweeps_per_read must be >= 1")
        if not 0 < self.beta_start < self.beta_end:
            raise ValueError("need 0 < beta_start < beta_end")
        if self.schedule_kind not in ("geometric", "linear"):
            raise ValueError(f"unknown schedule_kind {self.schedule_kind!r}")

    def betas(self) -> np.ndarray:
        if self.schedule_kind == "geometric":
            return np.geomspace(self.beta_start, self.beta_end, self.sweeps_per_read)
        return np.linspace(self.beta_start, self.beta_end, self.sweeps_per_read)

    @staticmethod
    def auto(
        qubo: Qubo,
        num_reads: int = 100,
        sweeps_per_read: int = 100,
        probe_seed: int = 0,
    ) -> "SaSchedule":
        """Self-scaling ramp: betas 0.1/<|dE|> .. 50/<|dE|> from 100 random probes."""
        rng = np.random.default_rng(probe_seed)
        n = qubo.n_vars
        q = qubo.to_dense()
        q_sym = q + q.T
        np.fill_diagonal(q_sym, 0.0)
        q_diag = np.diag(q).copy()
        deltas = []
        for _ in range(100):
            b = rng.integers(0, 2, n).astype(float)
            i = int(rng.integers(0, n))
            deltas.append(abs((1 - 2 * b[i]) * (q_diag[i] + q_sym[i] @ b)))
        mean_abs = float(np.mean(deltas)) if deltas else 0.0
        if mean_abs <= 0.0:
            mean_abs = 1.0
        return SaSchedule(
            num_reads=num_reads,
            sweeps_per_read=sweeps_per_read,
            beta_start=0.1 / mean_abs,
            beta_end=50.0 / mean_abs,
            schedule_kind="geometric",
        )


def _split_fields(qubo: Qubo) -> tuple[np.ndarray, np.ndarray]:
    q = qubo.to_dense()
    q_sym = q + q.T
    np.fill_diagonal(q_sym, 0.0)
    q_diag = np.diag(q).copy()
    return np.ascontiguousarray(q_sym), q_diag


def simulated_annealing(
    qubo: Qubo, sched: SaSchedule | None = None, seed: int = 0
) -> SampleSet:
    """Single-bit-flip Metropolis annealing, one sample per read.

    Read r seeds its own generator with (seed XOR r), so results are
    independent of read batching and reproducible across runs.
    """
    if sched is None:
        sched = SaSchedule.auto(qubo, probe_seed=seed)
    q_sym, q_diag = _split_fields(qubo)
    betas = sched.betas()
    seeds = np.array(
        [(seed ^ r) & 0xFFFFFFFF for r in range(sched.num_reads)], dtype=np.uint32
    )
    t0 = time.monotonic()
    bits = np.empty((sched.num_reads, qubo.n_vars), dtype=np.float64)
    trace: list[tuple[float, float]] = []
    best_so_far = np.inf
    batch = 256
    for start in range(0, sched.num_reads, batch):
        stop = min(start + batch, sched.num_reads)
        _kernels.sa_run_reads(q_sym, q_diag, betas, seeds[start:stop], bits[start:stop])
        batch_best = float(qubo.energies(bits[start:stop]).min())
        best_so_far = min(best_so_far, batch_best)
        trace.append((time.monotonic() - t0, best_so_far))
    wall = time.monotonic() - t0
    return _make_sampleset(qubo, bits, "simulated_annealing", wall, seed, trace)


@dataclass(frozen=True)
class TabuConfig:
    """Recency-tabu search parameters.

    `tenure` is clamped to n_vars - 1 at solve time; `time_limit` of None
    means iteration-bounded only (fully deterministic).
    """

    tenure: int = 10
    max_iterations: int = 1000
    time_limit: float | None = None
    restarts: int = 1

    def __post_init__(self):
        if self.tenure < 0:
            raise ValueError("tenure must be >= 0")
        if self.max_iterations < 0 or self.restarts < 1:
            raise ValueError("max_iterations must be >= 0 and restarts >= 1")


def tabu_search(qubo: Qubo, cfg: TabuConfig | None = None, seed: int = 0) -> SampleSet:
    """Best-admissible single-flip tabu search with aspiration.

    Interruptible: honors `cfg.time_limit` between fixed-size iteration
    chunks and returns the best assignment seen so far.
    """
    cfg = cfg or TabuConfig()
    n = qubo.n_vars
    tenure = min(cfg.tenure, max(n - 1, 0))
    q_sym, q_diag = _split_fields(qubo)
    rng = np.random.default_rng(seed)
    t0 = time.monotonic()
    deadline = None if cfg.time_limit is None else t0 + cfg.time_limit

    best_bits = rng.integers(0, 2, n).astype(np.float64)
    best_energy = qubo.energy(best_bits)
    trace: list[tuple[float, float]] = [(time.monotonic() - t0, best_energy)]
    chunk = 512
    for restart in range(cfg.restarts):
        if restart == 0:
            b = best_bits.copy()
        else:
            b = rng.integers(0, 2, n).astype(np.float64)
        current = qubo.energy(b)
        if current < best_energy:
            best_energy, best_bits = current, b.copy()
        h = q_diag + q_sym @ b
        tabu_until = np.zeros(n, dtype=np.int64)
        done = 0
        while done < cfg.max_iterations:
            if deadline is not None and time.monotonic() >= deadline:
                break
            n_iters = min(chunk, cfg.max_iterations - done)
            best_energy, current = _kernels.tabu_sweep(
                q_sym, q_diag, b, h, tabu_until, done, n_iters, tenure,
                best_bits, best_energy, current,
            )
            done += n_iters
            trace.append((time.monotonic() - t0, best_energy))
        if deadline is not None and time.monotonic() >= deadline:
            break
    wall = time.monotonic() - t0
    out = _make_sampleset(qubo, best_bits[None, :], "tabu_search", wall, seed)
    out.trace = [(t, e) for t, e in trace]
    return out


@dataclass
class PgdResult:
    """Projected-gradient output on the continuous box problem."""

    var_order: tuple
    values: np.ndarray
    objective: float
    converged: bool
    iterations: int
    grad_norm: float

    def input_sequence(self, problem: DynamicOptProblem) -> np.ndarray:
        """Arrange values as a (N, input_dim) sequence; uncovered stages
        (inputs with no objective influence) sit at the lower bound."""
        u = np.tile(np.asarray(problem.input_lower, dtype=float), (problem.horizon_N, 1))
        for var, value in zip(self.var_order, self.values):
            if var.stage < problem.horizon_N:
                u[var.stage, var.slot] = value
        return u


def projected_gradient(
    box: BoxProblem, tol: float = 1e-9, max_iter: int = 10_000
) -> PgdResult:
    """Projected-gradient descent with Barzilai-Borwein steps and backtracking.

    Stops when the projected-gradient norm ||u - P(u - g)|| drops below
    `tol`.  For a convex quadratic objective (the reactor case) the result
    is the global box-constrained optimum.  On hitting `max_iter` the best
    iterate is returned with `converged=False`.
    """
    variables = box.input_vars()
    if not variables:
        value = box.objective.constant_term()
        return PgdResult(variables, np.zeros(0), value, True, 0, 0.0)
    lo = np.array([box.bounds[v][0] for v in variables])
    hi = np.array([box.bounds[v][1] for v in variables])
    grads = [box.objective.differentiate(v) for v in variables]

    def f(u: np.ndarray) -> float:
        return float(evaluate_batch(box.objective, list(variables), u[None, :])[0])

    def grad(u: np.ndarray) -> np.ndarray:
        point = u[None, :]
        return np.array([evaluate_batch(g, list(variables), point)[0] for g in grads])

    u = (lo + hi) / 2.0
    fu = f(u)
    g = grad(u)
    alpha = 1.0 / max(1.0, float(np.linalg.norm(g)))
    prev_u, prev_g = None, None
    it = 0
    for it in range(1, max_iter + 1):
        pg = u - np.clip(u - g, lo, hi)
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm < tol:
            return PgdResult(variables, u, fu, True, it - 1, pg_norm)
        if prev_u is not None:
            du = u - prev_u
            dg = g - prev_g
            denom = float(du @ dg)
            if denom > 0:
                alpha = float(du @ du) / denom
            alpha = float(np.clip(alpha, 1e-12, 1e12))
        accepted = False
        step = alpha
        for _ in range(60):
            candidate = np.clip(u - step * g, lo, hi)
            d = candidate - u
            fc = f(candidate)
            if fc <= fu + 1e-4 * float(g @ d):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        prev_u, prev_g = u, g
        u, fu = candidate, fc
        g = grad(u)
    pg = u - np.clip(u - g, lo, hi)
    return PgdResult(variables, u, fu, False, it, float(np.linalg.norm(pg)))


def decode(
    sample, scheme: BinarizationScheme, problem: DynamicOptProblem
) -> tuple[np.ndarray, Trajectory]:
    """Bits -> input sequence -> simulated trajectory.

    The sample is indexed in `scheme.all_bit_vars()` order (the QUBO's
    variable order).  Stages without a scheme entry default to the lower
    bound.
    """
    values = scheme.decode_values(sample)
    u = np.tile(np.asarray(problem.input_lower, dtype=float), (problem.horizon_N, 1))
    for var, value in values.items():
        if var.stage < problem.horizon_N:
            u[var.stage, var.slot] = value
    return u, simulate(problem, u)


def solve_box_reference(box: BoxProblem, tol: float = 1e-10) -> PgdResult:
    """The classical baseline used as error reference throughout."""
    return projected_gradient(box, tol=tol, max_iter=100_000)
