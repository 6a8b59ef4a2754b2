"""Hardware-graph model, minor embedding, and the virtual-QPU solve path.

The Pegasus generator follows the geometric coordinate construction: qubits
are length-12 segments on a grid, vertical and horizontal families cross to
give internal couplers, segments in line give external couplers, and paired
tracks give odd couplers.  Logical problems are mapped onto the hardware by
a randomized shortest-path heuristic: place variables one at a time, route
chains through cheapest paths where overused qubits cost exponentially more,
and iterate rip-and-reroute rounds until chains are disjoint.

Nothing here talks to real hardware: a "virtual QPU" solve is simulated
annealing on the embedded problem followed by chain-break postprocessing, so
the structural costs of embedding (qubit counts, chain lengths, broken
chains) are reproduced without a hardware noise model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import EmbeddingNotFoundError, InvalidEmbeddingError
from .solvers import SampleSet, SaSchedule, _make_sampleset, simulated_annealing
from .transform import Qubo

# Track offsets of the segment construction (vertical, horizontal families).
_PEGASUS_OFFSETS = (
    (2, 2, 2, 2, 6, 6, 6, 6, 10, 10, 10, 10),
    (6, 6, 6, 6, 10, 10, 10, 10, 2, 2, 2, 2),
)


@dataclass
class HardwareGraph:
    """Undirected hardware connectivity: qubit ids, couplers, topology tag."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    topology_tag: str = "custom"
    _adjacency: dict | None = field(default=None, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> dict[int, tuple[int, ...]]:
        if self._adjacency is None:
            adj: dict[int, list[int]] = {q: [] for q in self.nodes}
            for a, b in self.edges:
                adj[a].append(b)
                adj[b].append(a)
            self._adjacency = {q: tuple(sorted(set(n))) for q, n in adj.items()}
        return self._adjacency

    def max_degree(self) -> int:
        return max((len(n) for n in self.adjacency().values()), default=0)

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.adjacency().get(a, ())

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj = self.adjacency()
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            q = stack.pop()
            for nb in adj[q]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.nodes)


def pegasus(m: int, fabric_only: bool = True) -> HardwareGraph:
    """Pegasus hardware graph of size m.

    Qubit (u, w, k, z): u selects the vertical (0) or horizontal (1) family,
    w the cross-track line, k in 0..11 the track, z the in-line offset.  A
    vertical qubit occupies column 12w+k over rows [12z+off, 12z+off+12);
    internal couplers join crossing segments, external couplers consecutive
    in-line segments, odd couplers track pairs (2j, 2j+1).  With
    `fabric_only` the boundary qubits that cross nothing are dropped.
    """
    if m < 2:
        raise ValueError("pegasus size m must be >= 2")
    s_vert, s_horiz = _PEGASUS_OFFSETS

    def linear(u: int, w: int, k: int, z: int) -> int:
        return ((u * m + w) * 12 + k) * (m - 1) + z

    internal: list[tuple[int, int]] = []
    internal_degree: dict[int, int] = {}
    for w in range(m):
        for k in range(12):
            col = 12 * w + k
            for z in range(m - 1):
                v = linear(0, w, k, z)
                for row in range(12 * z + s_vert[k], 12 * z + s_vert[k] + 12):
                    wp, kp = divmod(row, 12)
                    if not 0 <= wp < m:
                        continue
                    zp, rem = divmod(col - s_horiz[kp], 12)
                    if rem < 0 or not 0 <= zp < m - 1:
                        continue
                    h = linear(1, wp, kp, zp)
                    internal.append((v, h))
                    internal_degree[v] = internal_degree.get(v, 0) + 1
                    internal_degree[h] = internal_degree.get(h, 0) + 1

    all_nodes = [
        linear(u, w, k, z)
        for u in (0, 1)
        for w in range(m)
        for k in range(12)
        for z in range(m - 1)
    ]
    if fabric_only:
        keep = set(internal_degree)
    else:
        keep = set(all_nodes)

    edges: list[tuple[int, int]] = [(min(a, b), max(a, b)) for a, b in internal]
    for u in (0, 1):
        for w in range(m):
            for k in range(12):
                for z in range(m - 1):
                    q = linear(u, w, k, z)
                    if q not in keep:
                        continue
                    if z + 1 < m - 1:  # external: next segment in line
                        nxt = linear(u, w, k, z + 1)
                        if nxt in keep:
                            edges.append((min(q, nxt), max(q, nxt)))
                    if k % 2 == 0:  # odd: paired track
                        twin = linear(u, w, k + 1, z)
                        if twin in keep:
                            edges.append((min(q, twin), max(q, twin)))
    nodes = tuple(sorted(keep))
    return HardwareGraph(
        nodes=nodes, edges=tuple(sorted(set(edges))), topology_tag=f"pegasus({m})"
    )


def grid(rows: int, cols: int) -> HardwareGraph:
    """Simple 4-neighbor lattice, mostly for tests and demos."""
    nodes = tuple(range(rows * cols))
    edges = []
    for r in range(rows):
        for c in range(cols):
            q = r * cols + c
            if c + 1 < cols:
                edges.append((q, q + 1))
            if r + 1 < rows:
                edges.append((q, q + cols))
    return HardwareGraph(nodes=nodes, edges=tuple(edges), topology_tag=f"grid({rows}x{cols})")


@dataclass
class Embedding:
    """Map from logical node to its chain of physical qubits."""

    chains: dict[object, frozenset[int]]

    def physical_qubit_count(self) -> int:
        return sum(len(c) for c in self.chains.values())

    def max_chain_length(self) -> int:
        return max((len(c) for c in self.chains.values()), default=0)

    def to_text(self) -> str:
        lines = []
        for label in sorted(self.chains, key=str):
            qubits = " ".join(str(q) for q in sorted(self.chains[label]))
            lines.append(f"{label}: {qubits}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "Embedding":
        chains: dict[object, frozenset[int]] = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            label, _, rest = line.partition(":")
            chains[label.strip()] = frozenset(int(tok) for tok in rest.split())
        return Embedding(chains)


@dataclass
class EmbeddingReport:
    """Structural costs of one embedding (and optionally one solve)."""

    physical_qubit_count: int
    embedding_wall_time: float
    max_chain_length: int
    chain_break_fraction: float | None = None

    def to_text(self) -> str:
        lines = [
            f"physical_qubit_count: {self.physical_qubit_count}",
            f"embedding_wall_time_s: {self.embedding_wall_time:.6f}",
            f"max_chain_length: {self.max_chain_length}",
        ]
        if self.chain_break_fraction is not None:
            lines.append(f"chain_break_fraction: {self.chain_break_fraction:.6f}")
        return "\n".join(lines) + "\n"


def validate_embedding(
    emb: Embedding, logical_edges, hw: HardwareGraph
) -> None:
    """Independent validity check: disjoint, connected, edges covered.

    Deliberately separate from the finder; raises InvalidEmbeddingError with
    the first violation found.
    """
    adj = hw.adjacency()
    seen: dict[int, object] = {}
    for label, chain in emb.chains.items():
        if not chain:
            raise InvalidEmbeddingError(f"chain for {label} is empty")
        for q in chain:
            if q not in adj:
                raise InvalidEmbeddingError(f"chain for {label} uses unknown qubit {q}")
            if q in seen:
                raise InvalidEmbeddingError(
                    f"qubit {q} shared by chains {seen[q]} and {label}"
                )
            seen[q] = label
        start = next(iter(chain))
        reached = {start}
        stack = [start]
        while stack:
            q = stack.pop()
            for nb in adj[q]:
                if nb in chain and nb not in reached:
                    reached.add(nb)
                    stack.append(nb)
        if reached != set(chain):
            raise InvalidEmbeddingError(f"chain for {label} is not connected")
    for a, b in logical_edges:
        if a not in emb.chains or b not in emb.chains:
            raise InvalidEmbeddingError(f"logical edge ({a}, {b}) has unmapped endpoint")
        ca, cb = emb.chains[a], emb.chains[b]
        if not any(nb in cb for q in ca for nb in adj[q]):
            raise InvalidEmbeddingError(
                f"no physical edge between chains of {a} and {b}"
            )


class _Router:
    """Shared state for the rip-and-reroute embedding heuristic."""

    PENALTY_BASE = 8.0
    MAX_EXPONENT = 30

    def __init__(self, nodes, edges, hw: HardwareGraph, rng: np.random.Generator):
        self.rng = rng
        self.logical_nodes = list(nodes)
        self.neighbors: dict[object, list] = {x: [] for x in self.logical_nodes}
        for a, b in edges:
            self.neighbors[a].append(b)
            self.neighbors[b].append(a)
        self.hw_nodes = list(hw.nodes)
        self.index = {q: i for i, q in enumerate(self.hw_nodes)}
        n = len(self.hw_nodes)
        tails, heads = [], []
        for a, b in hw.edges:
            ia, ib = self.index[a], self.index[b]
            tails += [ia, ib]
            heads += [ib, ia]
        order = np.lexsort((np.array(heads), np.array(tails)))
        self.tails = np.asarray(tails, dtype=np.int32)[order]
        self.heads = np.asarray(heads, dtype=np.int32)[order]
        self.indptr = np.searchsorted(self.tails, np.arange(n + 1))
        self.n_hw = n
        self.usage = np.zeros(n, dtype=np.int64)
        self.chains: dict[object, set[int]] = {}

    def _graph(self, weights: np.ndarray) -> csr_matrix:
        data = weights[self.heads]
        return csr_matrix((data, self.heads, self.indptr), shape=(self.n_hw, self.n_hw))

    def _weights(self) -> np.ndarray:
        exp = np.minimum(self.usage, self.MAX_EXPONENT)
        return self.PENALTY_BASE**exp.astype(np.float64)

    def _rip(self, x) -> None:
        for q in self.chains.pop(x, ()):
            self.usage[q] -= 1

    def _commit(self, x, chain: set[int]) -> None:
        self.chains[x] = chain
        for q in chain:
            self.usage[q] += 1

    def place(self, x, free_only: bool = False) -> bool:
        """Rip out x's chain and re-route it through cheapest paths.

        With `free_only`, qubits held by other chains are forbidden, so a
        successful placement keeps global disjointness (used by the shrink
        pass).  Returns False when no routing exists.
        """
        self._rip(x)
        if free_only:
            weights = np.ones(self.n_hw)
            weights[self.usage > 0] = np.inf
        else:
            weights = self._weights()
        placed = [c for c in self.neighbors[x] if c in self.chains]
        if not placed:
            candidates = np.flatnonzero(self.usage == self.usage.min())
            root = int(self.rng.choice(candidates))
            self._commit(x, {root})
            return True

        # Root cost: the root pays its own usage-priced weight exactly once,
        # plus per neighbor the interior cost of the connecting path.  A root
        # inside a neighbor's chain therefore still pays its (already
        # elevated) weight instead of looking free, which is what pushes
        # overlapping chains apart across rounds.
        graph = self._graph(weights)
        preds = []
        cost = weights.copy()
        with np.errstate(invalid="ignore"):
            for c in placed:
                sources = sorted(self.chains[c])
                dist, pred, _ = dijkstra(
                    graph, directed=True, indices=sources,
                    return_predecessors=True, min_only=True,
                )
                preds.append(pred)
                interior = dist - weights
                interior[sources] = 0.0
                cost += interior
        cost[~np.isfinite(cost)] = np.inf
        if not np.isfinite(cost).any():
            return False
        root = int(np.argmin(cost))
        chain = {root}
        for c, pred in zip(placed, preds):
            node = root
            source_chain = self.chains[c]
            while node >= 0 and node not in source_chain:
                chain.add(node)
                node = int(pred[node])
        self._commit(x, chain)
        return True

    def overfill(self) -> int:
        return int(np.maximum(self.usage - 1, 0).sum())

    def total_size(self) -> int:
        return int(sum(len(c) for c in self.chains.values()))


def find_embedding(
    logical_nodes,
    logical_edges,
    hw: HardwareGraph,
    seed: int = 0,
    tries: int = 16,
    max_rounds: int = 48,
    patience: int = 10,
    shrink_passes: int = 1,
) -> tuple[Embedding, EmbeddingReport]:
    """Heuristic minor embedding of a logical graph into hardware.

    Each try shuffles the placement order (high logical degree first),
    places every variable by shortest-path routing to its placed neighbors
    (overused qubits priced exponentially), then runs rip-and-reroute rounds
    until chains are pairwise disjoint.  A shrink pass then reroutes chains
    through free qubits only, keeping strictly smaller results.  Raises
    EmbeddingNotFoundError with per-try diagnostics after `tries` failures.
    """
    logical_nodes = list(logical_nodes)
    logical_edges = [tuple(e) for e in logical_edges]
    known = set(logical_nodes)
    for a, b in logical_edges:
        if a not in known or b not in known:
            raise ValueError(f"edge ({a}, {b}) references unknown logical node")
    t0 = time.monotonic()
    diagnostics = []
    for attempt in range(tries):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        router = _Router(logical_nodes, logical_edges, hw, rng)
        degree = {x: len(router.neighbors[x]) for x in logical_nodes}
        order = sorted(
            logical_nodes, key=lambda x: (-degree[x], rng.random())
        )
        ok = all(router.place(x) for x in order)
        if ok:
            best_overfill = router.overfill()
            stale = 0
            rounds = 0
            while router.overfill() > 0 and rounds < max_rounds and stale < patience:
                rounds += 1
                for x in rng.permutation(len(order)):
                    if not router.place(order[int(x)]):
                        ok = False
                        break
                if not ok:
                    break
                if router.overfill() < best_overfill:
                    best_overfill = router.overfill()
                    stale = 0
                else:
                    stale += 1
        if not ok or router.overfill() > 0:
            diagnostics.append(
                f"try {attempt}: overfill {router.overfill()} "
                f"after routing ({'routable' if ok else 'unroutable'})"
            )
            continue
        for _ in range(shrink_passes):
            for x in rng.permutation(len(order)):
                label = order[int(x)]
                before = set(router.chains[label])
                size_before = len(before)
                if not router.place(label, free_only=True) or len(router.chains[label]) > size_before:
                    router._rip(label)
                    router._commit(label, before)
        emb = Embedding(
            {x: frozenset(router.hw_nodes[q] for q in router.chains[x]) for x in logical_nodes}
        )
        try:
            validate_embedding(emb, logical_edges, hw)
        except InvalidEmbeddingError as exc:
            diagnostics.append(f"try {attempt}: produced invalid embedding ({exc})")
            continue
        report = EmbeddingReport(
            physical_qubit_count=emb.physical_qubit_count(),
            embedding_wall_time=time.monotonic() - t0,
            max_chain_length=emb.max_chain_length(),
        )
        return emb, report
    raise EmbeddingNotFoundError(
        f"no embedding found in {tries} tries ({len(logical_nodes)} logical nodes "
        f"onto {hw.topology_tag})",
        attempts=diagnostics,
    )


def qubo_interaction_graph(qubo: Qubo) -> tuple[list, list[tuple]]:
    """Logical nodes (labels) and coupled pairs of a Qubo."""
    labels = list(qubo.var_labels)
    edges = [
        (labels[i], labels[j]) for (i, j) in qubo.interaction_edges()
    ]
    return labels, edges


def default_chain_strength(qubo: Qubo) -> float:
    """Uniform default: 1.414 x the largest coefficient magnitude."""
    return 1.414 * max(qubo.max_abs_entry(), 1e-12)


def dominance_chain_strength(qubo: Qubo) -> float:
    """A strength guaranteeing chain-consistent global minima.

    1 + max over variables of the total coefficient magnitude incident to
    it; breaking a chain then always costs more than any logical gain.
    """
    incident = np.zeros(qubo.n_vars)
    for (i, j), value in qubo.coefficients.items():
        incident[i] += abs(value)
        if i != j:
            incident[j] += abs(value)
    return 1.0 + float(incident.max(initial=0.0))


@dataclass
class EmbeddedQubo:
    """A logical problem, its embedding, and the physical-qubit QUBO."""

    logical: Qubo
    physical: Qubo
    embedding: Embedding
    chain_strength: float
    physical_order: tuple[int, ...]  # qubit id per physical index


def embed_qubo(
    qubo: Qubo, emb: Embedding, chain_strength: float, hw: HardwareGraph
) -> EmbeddedQubo:
    """Build the physical QUBO for an embedded logical problem.

    Linear terms split uniformly over chain members; each logical coupling
    lands on the first (sorted) physical edge between the two chains; every
    intra-chain edge receives the ferromagnetic penalty cs*(b_p + b_q -
    2 b_p b_q), which vanishes exactly on chain-consistent assignments, so
    consistent physical energies equal logical energies.
    """
    labels, edges = qubo_interaction_graph(qubo)
    validate_embedding(emb, edges, hw)
    adj = hw.adjacency()
    used = sorted(q for chain in emb.chains.values() for q in chain)
    phys_index = {q: i for i, q in enumerate(used)}
    coeff: dict[tuple[int, int], float] = {}

    def add(i: int, j: int, value: float):
        key = (min(i, j), max(i, j))
        coeff[key] = coeff.get(key, 0.0) + value

    for idx, label in enumerate(labels):
        chain = sorted(emb.chains[label])
        linear = qubo.coefficients.get((idx, idx), 0.0)
        for q in chain:
            if linear != 0.0:
                add(phys_index[q], phys_index[q], linear / len(chain))
        for a_pos, qa in enumerate(chain):
            for qb in chain[a_pos + 1:]:
                if qb in adj[qa]:
                    add(phys_index[qa], phys_index[qa], chain_strength)
                    add(phys_index[qb], phys_index[qb], chain_strength)
                    add(phys_index[qa], phys_index[qb], -2.0 * chain_strength)

    label_index = {label: i for i, label in enumerate(labels)}
    for (i, j) in qubo.interaction_edges():
        la, lb = labels[i], labels[j]
        candidates = sorted(
            (min(qa, qb), max(qa, qb))
            for qa in emb.chains[la]
            for qb in emb.chains[lb]
            if qb in adj[qa]
        )
        qa, qb = candidates[0]
        add(phys_index[qa], phys_index[qb], qubo.coefficients[(i, j)])

    coeff = {k: v for k, v in coeff.items() if v != 0.0}
    physical = Qubo(
        n_vars=len(used),
        coefficients=coeff,
        offset=qubo.offset,
        var_labels=tuple(used),
    )
    return EmbeddedQubo(
        logical=qubo,
        physical=physical,
        embedding=emb,
        chain_strength=chain_strength,
        physical_order=tuple(used),
    )


def unembed(
    embedded: EmbeddedQubo, physical_bits, strategy: str = "majority_vote"
) -> tuple[np.ndarray | None, float]:
    """Physical sample -> logical sample plus the broken-chain fraction.

    majority_vote: per-chain majority, ties to 1.  discard: None when any
    chain is broken.  energy_min: each broken chain takes the value of lower
    logical energy with the others held fixed (majority-initialized).
    """
    if strategy not in ("majority_vote", "discard", "energy_min"):
        raise ValueError(f"unknown unembed strategy {strategy!r}")
    bits = np.asarray(physical_bits).ravel()
    pos = {q: i for i, q in enumerate(embedded.physical_order)}
    labels = list(embedded.logical.var_labels)
    logical = np.zeros(len(labels), dtype=np.uint8)
    broken = []
    for idx, label in enumerate(labels):
        chain_bits = [int(bits[pos[q]]) for q in sorted(embedded.embedding.chains[label])]
        ones = sum(chain_bits)
        if 0 < ones < len(chain_bits):
            broken.append(idx)
        logical[idx] = 1 if 2 * ones >= len(chain_bits) else 0
    fraction = len(broken) / max(len(labels), 1)
    if strategy == "discard" and broken:
        return None, fraction
    if strategy == "energy_min" and broken:
        for idx in broken:
            logical[idx] = 0
            e0 = embedded.logical.energy(logical)
            logical[idx] = 1
            e1 = embedded.logical.energy(logical)
            logical[idx] = 0 if e0 <= e1 else 1
    return logical, fraction


def virtual_qpu_solve(
    qubo: Qubo,
    hw: HardwareGraph,
    chain_strength: float | None = None,
    sched: SaSchedule | None = None,
    seed: int = 0,
    unembed_strategy: str = "majority_vote",
    embedded: EmbeddedQubo | None = None,
    embedding_tries: int = 16,
) -> tuple[SampleSet, EmbeddingReport]:
    """Embed, anneal on the physical graph, and post-process chains.

    Stands in for a QPU call: wall-clock of the simulated anneal replaces
    hardware timing.  Pass `embedded` to reuse a previously computed
    embedding.
    """
    if embedded is None:
        labels, edges = qubo_interaction_graph(qubo)
        emb, report = find_embedding(labels, edges, hw, seed=seed, tries=embedding_tries)
        cs = chain_strength if chain_strength is not None else default_chain_strength(qubo)
        embedded = embed_qubo(qubo, emb, cs, hw)
    else:
        report = EmbeddingReport(
            physical_qubit_count=embedded.embedding.physical_qubit_count(),
            embedding_wall_time=0.0,
            max_chain_length=embedded.embedding.max_chain_length(),
        )
    physical_result = simulated_annealing(embedded.physical, sched=sched, seed=seed)
    logical_rows = []
    fractions = []
    for sample in physical_result.samples:
        for _ in range(sample.occurrences):
            logical, fraction = unembed(embedded, sample.assignment, unembed_strategy)
            fractions.append(fraction)
            if logical is not None:
                logical_rows.append(logical)
    report.chain_break_fraction = float(np.mean(fractions)) if fractions else 0.0
    if not logical_rows:
        return (
            SampleSet(samples=[], solver_name="virtual_qpu", wall_time=physical_result.wall_time,
                      rng_seed=seed),
            report,
        )
    out = _make_sampleset(
        qubo, np.array(logical_rows), "virtual_qpu", physical_result.wall_time, seed
    )
    return out, report


def write_chains_dot(embedded: EmbeddedQubo, hw: HardwareGraph, path: str):
    """DOT dump of the embedded subgraph, one color class per chain."""
    palette = [
        "lightblue", "salmon", "palegreen", "gold", "orchid", "tan",
        "turquoise", "tomato", "yellowgreen", "plum",
    ]
    chain_of = {}
    for i, (label, chain) in enumerate(sorted(embedded.embedding.chains.items(), key=lambda kv: str(kv[0]))):
        for q in chain:
            chain_of[q] = (label, palette[i % len(palette)])
    lines = ["graph embedding {", "  node [style=filled];"]
    for q in sorted(chain_of):
        label, color = chain_of[q]
        lines.append(f'  q{q} [label="{label}\\n{q}", fillcolor={color}];')
    adj = hw.adjacency()
    for q in sorted(chain_of):
        for nb in adj[q]:
            if nb > q and nb in chain_of:
                lines.append(f"  q{q} -- q{nb};")
    lines.append("}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
