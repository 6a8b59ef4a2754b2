"""Numba inner loops for the annealing-family solvers.

All kernels keep per-variable local fields h_i = Q_ii + sum_j Qsym_ij b_j so
a single-bit flip costs O(1) to evaluate and O(n) to commit.  `q_sym` is the
symmetrized off-diagonal matrix (zero diagonal); `q_diag` the linear terms.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def sa_run_reads(q_sym, q_diag, betas, seeds, out_bits):
    """Independent annealing reads; each fills one row of `out_bits`.

    A read seeds numpy's generator, starts from a uniform random assignment,
    and performs one Metropolis sweep per beta over all variables in a fresh
    random order.
    """
    n = q_diag.shape[0]
    n_sweeps = betas.shape[0]
    for r in range(seeds.shape[0]):
        np.random.seed(seeds[r])
        b = (np.random.rand(n) < 0.5).astype(np.float64)
        h = q_diag + q_sym @ b
        for s in range(n_sweeps):
            beta = betas[s]
            order = np.random.permutation(n)
            for t in range(n):
                i = order[t]
                d_e = (1.0 - 2.0 * b[i]) * h[i]
                if d_e <= 0.0 or np.random.rand() < np.exp(-beta * d_e):
                    delta = 1.0 - 2.0 * b[i]
                    b[i] = 1.0 - b[i]
                    h += delta * q_sym[i]
        out_bits[r] = b


@njit(cache=True)
def tabu_sweep(q_sym, q_diag, b, h, tabu_until, t_start, n_iters, tenure,
               best_bits, best_energy, current_energy):
    """Run `n_iters` tabu iterations in place; returns updated energies.

    Each iteration flips the best admissible single-bit move: non-tabu, or
    tabu but improving on the incumbent (aspiration).  If every move is
    inadmissible, the one whose tabu expires soonest is taken.
    """
    n = b.shape[0]
    for it in range(n_iters):
        t = t_start + it
        best_move = -1
        best_gain = np.inf
        for i in range(n):
            d_e = (1.0 - 2.0 * b[i]) * h[i]
            if tabu_until[i] <= t or current_energy + d_e < best_energy:
                if d_e < best_gain:
                    best_gain = d_e
                    best_move = i
        if best_move < 0:
            best_move = 0
            soonest = tabu_until[0]
            for i in range(1, n):
                if tabu_until[i] < soonest:
                    soonest = tabu_until[i]
                    best_move = i
            best_gain = (1.0 - 2.0 * b[best_move]) * h[best_move]
        delta = 1.0 - 2.0 * b[best_move]
        b[best_move] = 1.0 - b[best_move]
        current_energy += best_gain
        h += delta * q_sym[best_move]
        tabu_until[best_move] = t + tenure + 1
        if current_energy < best_energy:
            best_energy = current_energy
            best_bits[:] = b
    return best_energy, current_energy
