"""From a dynamic optimization problem to a quadratic binary form.

Three steps: eliminate the states by direct substitution through the explicit
step maps (leaving an input-only box-constrained objective), encode each
bounded input with a fixed-point bit expansion, and reduce any remaining
higher-order products with penalized auxiliary variables so the result
assembles into an upper-triangular QUBO coefficient map.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegreeTooHighError,
    LengthMismatchError,
    MissingSchemeError,
    NonExplicitDynamicsError,
    NotMultilinearError,
)
from .model import DynamicOptProblem
from .polyalg import (
    Monomial,
    Namespace,
    Polynomial,
    VarId,
    aux_var,
    binary_var,
    parse_varid,
    state_var,
)


@dataclass(frozen=True)
class BoxProblem:
    """Input-only objective with per-variable box bounds."""

    objective: Polynomial
    bounds: dict[VarId, tuple[float, float]]  # input var -> (lower, upper)
    provenance: DynamicOptProblem | None = None

    def input_vars(self) -> tuple[VarId, ...]:
        return tuple(sorted(self.bounds))


def _raw_substitute_into(
    acc: dict[Monomial, float],
    p: Polynomial,
    mapping: dict[VarId, Polynomial],
    scale: float = 1.0,
):
    """Accumulate scale * p with `mapping` substituted, term by term.

    Works on a raw coefficient dict with no intermediate canonicalization:
    the stagewise squares mix coefficients spanning many orders of
    magnitude, and dropping small pieces per stage would compound into an
    energy-identity error; one canonicalization at the end keeps the
    round-trip against the forward recursion at float precision.
    """
    for mono, coeff in p.items():
        partial: dict[Monomial, float] = {Monomial(): scale * coeff}
        for var, exp in mono.pairs:
            rep = mapping.get(var)
            rep_terms = list(rep.items()) if rep is not None else [(Monomial({var: 1}), 1.0)]
            for _ in range(exp):
                grown: dict[Monomial, float] = {}
                for m1, c1 in partial.items():
                    for m2, c2 in rep_terms:
                        mm = m1.mul(m2)
                        grown[mm] = grown.get(mm, 0.0) + c1 * c2
                partial = grown
        for m, c in partial.items():
            acc[m] = acc.get(m, 0.0) + c


def eliminate_states(problem: DynamicOptProblem) -> BoxProblem:
    """Substitute every state through the step maps into the objective.

    Each stage-t state becomes a polynomial in the initial state (constants)
    and the inputs of stages < t; the summed stage costs and any weighted
    equality penalties are rewritten in those terms.  The resulting box
    problem keeps only the input variables that actually influence the
    objective.
    """
    N = problem.horizon_N
    exprs: dict[VarId, Polynomial] = {
        state_var(0, s): Polynomial.constant(v)
        for s, v in enumerate(problem.initial_state)
    }
    for t in range(N):
        stage_map = {v: e for v, e in exprs.items() if v.stage == t}
        for s in range(problem.state_dim):
            step = problem.dynamics[t][s]
            for v in step.variables():
                if v.namespace not in (Namespace.STATE, Namespace.INPUT) or v.stage != t:
                    raise NonExplicitDynamicsError(
                        f"stage-{t} dynamics reference {v}; cannot eliminate"
                    )
            exprs[state_var(t + 1, s)] = step.substitute_many(stage_map)

    acc: dict[Monomial, float] = {}
    for i in range(N + 1):
        stage_map = {v: e for v, e in exprs.items() if v.stage == i}
        _raw_substitute_into(acc, problem.stage_cost.shift_stage(i), stage_map)
    for residual, weight in problem.equality_penalties:
        reduced = residual.substitute_many(exprs)
        _raw_substitute_into(acc, reduced * reduced, {}, scale=weight)
    objective = Polynomial(acc)

    bounds = {
        v: (problem.input_lower[v.slot], problem.input_upper[v.slot])
        for v in objective.variables()
        if v.namespace == Namespace.INPUT
    }
    return BoxProblem(objective=objective, bounds=bounds, provenance=problem)


@dataclass(frozen=True)
class BinarizationScheme:
    """Fixed-point bit encoding, per scalar input variable.

    Each covered input u maps to lower + (upper - lower) * sum(b_i 2^i) / (2^n - 1),
    so the all-zeros and all-ones words hit the bounds exactly.
    """

    entries: dict[VarId, tuple[int, float, float]]  # var -> (n_bits, lower, upper)

    def __post_init__(self):
        for var, (n_bits, lower, upper) in self.entries.items():
            if n_bits < 1:
                raise ValueError(f"{var}: n_bits must be >= 1")
            if not lower < upper:
                raise ValueError(f"{var}: need lower < upper")

    @staticmethod
    def uniform(box: BoxProblem, n_bits: int) -> "BinarizationScheme":
        """One scheme entry per box variable, bounds taken from the box."""
        return BinarizationScheme(
            {v: (n_bits, lo, hi) for v, (lo, hi) in box.bounds.items()}
        )

    def resolution(self, var: VarId) -> float:
        n_bits, lower, upper = self.entries[var]
        return (upper - lower) / (2**n_bits - 1)

    def bit_vars(self, var: VarId) -> tuple[VarId, ...]:
        """Bit variables for `var`: stage kept, slots offset within the stage."""
        offset = 0
        for other in sorted(self.entries):
            if other.stage != var.stage:
                continue
            if other == var:
                return tuple(
                    binary_var(var.stage, offset + k)
                    for k in range(self.entries[var][0])
                )
            offset += self.entries[other][0]
        raise MissingSchemeError(f"no scheme entry for {var}")

    def all_bit_vars(self) -> tuple[VarId, ...]:
        out: list[VarId] = []
        for var in sorted(self.entries):
            out.extend(self.bit_vars(var))
        return tuple(sorted(out))

    def total_bits(self) -> int:
        return sum(n for n, _, _ in self.entries.values())

    def encoding_poly(self, var: VarId) -> Polynomial:
        n_bits, lower, upper = self.entries[var]
        scale = (upper - lower) / (2**n_bits - 1)
        p = Polynomial.constant(lower)
        for k, bit in enumerate(self.bit_vars(var)):
            p = p + (scale * 2**k) * Polynomial.variable(bit)
        return p

    def decode_values(self, sample) -> dict[VarId, float]:
        """Map a bit vector (in all_bit_vars order) back to input values."""
        bits = np.asarray(sample).ravel()
        order = {v: i for i, v in enumerate(self.all_bit_vars())}
        if len(bits) != len(order):
            raise LengthMismatchError(
                f"sample has {len(bits)} bits, scheme defines {len(order)}"
            )
        values: dict[VarId, float] = {}
        for var, (n_bits, lower, upper) in self.entries.items():
            word = sum(
                int(bits[order[bv]]) << k for k, bv in enumerate(self.bit_vars(var))
            )
            values[var] = lower + (upper - lower) * word / (2**n_bits - 1)
        return values


def binarize(box: BoxProblem, scheme: BinarizationScheme) -> Polynomial:
    """Substitute every box variable by its bit expansion.

    The result is multilinear in binary variables and, by construction, only
    takes values the box bounds allow.
    """
    missing = [v for v in box.input_vars() if v not in scheme.entries]
    if missing:
        raise MissingSchemeError(f"scheme does not cover: {missing}")
    mapping = {v: scheme.encoding_poly(v) for v in box.input_vars()}
    return box.objective.substitute_many(mapping)


def quadratize(
    p: Polynomial, penalty_M: float | None = None
) -> tuple[Polynomial, list[tuple[VarId, tuple[VarId, VarId]]]]:
    """Reduce a multilinear pseudo-Boolean polynomial to degree <= 2.

    Repeatedly picks the product pair appearing in the most degree->=3 terms
    (ties broken by variable order), replaces it with a fresh auxiliary a,
    and adds the penalty M * (b_i b_j - 2 b_i a - 2 b_j a + 3 a), which is
    zero exactly when a = b_i b_j and at least M otherwise.

    Returns the reduced polynomial and the auxiliary definitions.  The
    default M = 10 * max|coefficient| dominates single-term gains; callers
    with many terms sharing a pair should pass M >= sum|coefficients|.
    """
    for v in p.variables():
        if v.namespace not in (Namespace.BINARY, Namespace.AUXILIARY):
            raise NotMultilinearError(f"{v} is not a binary variable")
    for mono, _ in p.items():
        if any(e != 1 for _, e in mono.pairs):
            raise NotMultilinearError(f"term {mono} is not multilinear")
    if penalty_M is None:
        penalty_M = 10.0 * p.max_abs_coefficient()
    if penalty_M <= 0:
        raise ValueError("penalty_M must be positive")

    next_slot = 1 + max(
        (v.slot for v in p.variables() if v.namespace == Namespace.AUXILIARY),
        default=-1,
    )
    definitions: list[tuple[VarId, tuple[VarId, VarId]]] = []
    while p.total_degree() > 2:
        counts: dict[tuple[VarId, VarId], int] = {}
        for mono, _ in p.items():
            if mono.degree() < 3:
                continue
            for pair in itertools.combinations(mono.variables(), 2):
                counts[pair] = counts.get(pair, 0) + 1
        pair = min(counts, key=lambda pr: (-counts[pr], pr))
        a = aux_var(next_slot)
        next_slot += 1
        bi, bj = pair
        replaced: dict[Monomial, float] = {}
        for mono, coeff in p.items():
            vars_ = mono.variables()
            if mono.degree() >= 3 and bi in vars_ and bj in vars_:
                rest = [v for v in vars_ if v not in (bi, bj)]
                mono = Monomial({v: 1 for v in rest} | {a: 1})
            replaced[mono] = replaced.get(mono, 0.0) + coeff
        penalty = penalty_M * (
            Polynomial.variable(bi) * Polynomial.variable(bj)
            - 2.0 * Polynomial.variable(bi) * Polynomial.variable(a)
            - 2.0 * Polynomial.variable(bj) * Polynomial.variable(a)
            + 3.0 * Polynomial.variable(a)
        )
        p = Polynomial(replaced) + penalty
        definitions.append((a, pair))
    return p, definitions


@dataclass
class Qubo:
    """Upper-triangular QUBO coefficients plus the constant offset.

    energy(b) = offset + sum_i Q_ii b_i + sum_{i<j} Q_ij b_i b_j.  The offset
    is carried so energies stay directly comparable with simulated
    objectives.
    """

    n_vars: int
    coefficients: dict[tuple[int, int], float]
    offset: float
    var_labels: tuple = ()
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for (i, j), value in self.coefficients.items():
            if not (0 <= i <= j < self.n_vars):
                raise ValueError(f"coefficient index ({i},{j}) out of range")
            if value == 0.0:
                raise ValueError("zero entries must not be stored")

    def to_dense(self) -> np.ndarray:
        """Upper-triangular dense matrix (diagonal = linear terms)."""
        if self._dense is None:
            dense = np.zeros((self.n_vars, self.n_vars))
            for (i, j), value in self.coefficients.items():
                dense[i, j] = value
            self._dense = dense
        return self._dense

    def energy(self, bits) -> float:
        b = np.asarray(bits, dtype=float).ravel()
        if b.size != self.n_vars:
            raise LengthMismatchError(f"expected {self.n_vars} bits, got {b.size}")
        q = self.to_dense()
        return float(self.offset + b @ q @ b)

    def energies(self, bit_matrix: np.ndarray) -> np.ndarray:
        """Energies for a (rows, n_vars) matrix of assignments."""
        B = np.asarray(bit_matrix, dtype=float)
        q = self.to_dense()
        return self.offset + ((B @ q) * B).sum(axis=1)

    def interaction_edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for (i, j) in self.coefficients if i != j)

    def max_abs_entry(self) -> float:
        if not self.coefficients:
            return 0.0
        return max(abs(v) for v in self.coefficients.values())


def assemble_qubo(p: Polynomial, variables: tuple[VarId, ...] | None = None) -> Qubo:
    """Pack a degree-<=2 polynomial over binary variables into a Qubo.

    `variables` fixes the index order (defaults to the sorted variables of
    `p`); passing the full bit list keeps zero-influence bits addressable.
    """
    if p.total_degree() > 2:
        raise DegreeTooHighError(f"degree {p.total_degree()} polynomial; quadratize first")
    pvars = p.variables()
    for v in pvars:
        if v.namespace not in (Namespace.BINARY, Namespace.AUXILIARY):
            raise ValueError(f"{v} is not a binary variable")
    if variables is None:
        variables = pvars
    else:
        variables = tuple(variables)
        missing = set(pvars) - set(variables)
        if missing:
            raise ValueError(f"variable order misses {sorted(missing)}")
    index = {v: i for i, v in enumerate(variables)}

    offset = 0.0
    coefficients: dict[tuple[int, int], float] = {}
    for mono, coeff in p.items():
        vs = mono.variables()
        if len(vs) == 0:
            offset += coeff
        elif len(vs) == 1:
            i = index[vs[0]]
            key = (i, i)
            coefficients[key] = coefficients.get(key, 0.0) + coeff
        else:
            i, j = sorted(index[v] for v in vs)
            coefficients[(i, j)] = coefficients.get((i, j), 0.0) + coeff
    coefficients = {k: v for k, v in coefficients.items() if v != 0.0}
    return Qubo(
        n_vars=len(variables),
        coefficients=coefficients,
        offset=offset,
        var_labels=tuple(variables),
    )


@dataclass
class CompiledProblem:
    """Everything the downstream solvers need, bundled."""

    problem: DynamicOptProblem
    box: BoxProblem
    scheme: BinarizationScheme
    binary_objective: Polynomial
    qubo: Qubo
    aux_definitions: list[tuple[VarId, tuple[VarId, VarId]]]


def compile_problem(
    problem: DynamicOptProblem,
    n_bits: int,
    penalty_M: float | None = None,
) -> CompiledProblem:
    """Full pipeline: eliminate states, binarize, quadratize, assemble."""
    box = eliminate_states(problem)
    scheme = BinarizationScheme.uniform(box, n_bits)
    binary = binarize(box, scheme)
    reduced, definitions = (
        quadratize(binary, penalty_M) if binary.total_degree() > 2 else (binary, [])
    )
    order = list(scheme.all_bit_vars()) + [a for a, _ in definitions]
    qubo = assemble_qubo(reduced, tuple(order))
    return CompiledProblem(
        problem=problem,
        box=box,
        scheme=scheme,
        binary_objective=reduced,
        qubo=qubo,
        aux_definitions=definitions,
    )


# -- QUBO text files -----------------------------------------------------------


def write_qubo(qubo: Qubo, path: str):
    """`qubo <n_vars> <n_terms> <offset>` header, then sorted `i j value` rows."""
    lines = [f"qubo {qubo.n_vars} {len(qubo.coefficients)} {qubo.offset!r}"]
    if qubo.var_labels:
        lines.append("# labels: " + " ".join(str(v) for v in qubo.var_labels))
    for (i, j), value in sorted(qubo.coefficients.items()):
        lines.append(f"{i} {j} {value!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_qubo(path: str) -> Qubo:
    """Read the `write_qubo` format; `#` comment lines are tolerated."""
    header = None
    labels: tuple = ()
    coefficients: dict[tuple[int, int], float] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# labels:"):
                    labels = tuple(
                        parse_varid(tok)[0] for tok in line.split(":", 1)[1].split()
                    )
                continue
            if header is None:
                tag, n_vars, n_terms, offset = line.split()
                if tag != "qubo":
                    raise ValueError(f"{path}: expected 'qubo' header, got {tag!r}")
                header = (int(n_vars), int(n_terms), float(offset))
                continue
            i, j, value = line.split()
            i, j = int(i), int(j)
            if i > j:
                raise ValueError(f"{path}: entry {i} {j} not upper-triangular")
            coefficients[(i, j)] = float(value)
    if header is None:
        raise ValueError(f"{path}: missing qubo header")
    n_vars, n_terms, offset = header
    if len(coefficients) != n_terms:
        raise ValueError(f"{path}: header says {n_terms} terms, found {len(coefficients)}")
    if not labels:
        labels = tuple(binary_var(0, i) for i in range(n_vars))
    return Qubo(n_vars=n_vars, coefficients=coefficients, offset=offset, var_labels=labels)
