"""Zero/nonzero observability tests for HDV dynamics over a CAV network."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import graph as g_
from .graph import DirectedGraph
from .matrices import build_dc, check_row_stochastic, kronecker

DEFAULT_RANK_TOL = None  # None -> d * eps * sigma_max


@dataclass(frozen=True)
class StructuredMatrix:
    rows: int
    cols: int
    pattern: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("structured matrix needs positive dimensions")
        for r, c in self.pattern:
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise ValueError(f"pattern entry ({r}, {c}) out of range")

    @classmethod
    def from_dense(cls, m, tol: float = 0.0) -> "StructuredMatrix":
        m = np.atleast_2d(np.asarray(m, dtype=float))
        nz = np.argwhere(np.abs(m) > tol)
        return cls(m.shape[0], m.shape[1], frozenset((int(r), int(c)) for r, c in nz))

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    def zero_diagonal(self) -> list[int]:
        return [i for i in range(min(self.rows, self.cols)) if (i, i) not in self.pattern]

    def kron(self, other: "StructuredMatrix") -> "StructuredMatrix":
        pattern = {
            (i * other.rows + k, j * other.cols + l)
            for i, j in self.pattern
            for k, l in other.pattern
        }
        return StructuredMatrix(self.rows * other.rows, self.cols * other.cols, frozenset(pattern))


@dataclass(frozen=True)
class SensorPlacement:
    """Per-CAV lists of measured global state indices."""

    state_dim: int
    measured: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        measured = tuple(tuple(int(i) for i in idx) for idx in self.measured)
        object.__setattr__(self, "measured", measured)
        if not measured:
            raise ValueError("placement needs at least one CAV")
        for cav, idx in enumerate(measured):
            for i in idx:
                if not 0 <= i < self.state_dim:
                    raise ValueError(f"CAV {cav} measures state {i}, outside [0, {self.state_dim})")

    @property
    def cav_count(self) -> int:
        return len(self.measured)

    def union(self) -> set[int]:
        return {i for idx in self.measured for i in idx}

    def cavs_measuring(self, states: Iterable[int]) -> set[int]:
        states = set(states)
        return {cav for cav, idx in enumerate(self.measured) if states & set(idx)}

    def without(self, cavs: Iterable[int]) -> "SensorPlacement":
        cavs = set(cavs)
        return SensorPlacement(self.state_dim, tuple(m for c, m in enumerate(self.measured) if c not in cavs))


@dataclass
class ObservabilityVerdict:
    observable: bool
    uncovered_parent_components: list[frozenset[int]]
    redundancy_level: int
    diagnostics: dict[str, bool] = field(default_factory=dict)
    parent_components: list[frozenset[int]] = field(default_factory=list)
    sufficiency_only: bool = False

    def as_key_values(self) -> str:
        uncovered = ",".join("{" + ",".join(str(i) for i in sorted(c)) + "}"
                             for c in self.uncovered_parent_components)
        parents = ",".join("{" + ",".join(str(i) for i in sorted(c)) + "}"
                           for c in self.parent_components)
        lines = [
            f"observable={str(self.observable).lower()}",
            f"redundancy_level={self.redundancy_level}",
            f"uncovered=[{uncovered}]",
            f"parent_sccs=[{parents}]",
        ]
        lines += [f"{k}={str(v).lower()}" for k, v in self.diagnostics.items()]
        if self.sufficiency_only:
            lines.append("basis=sufficient_condition")
        return "\n".join(lines) + "\n"

    def report(self, state_names: Sequence[str] | None = None) -> str:
        def name(i):
            return state_names[i] if state_names else f"x{i}"

        out = ["Observability: " + ("OBSERVABLE" if self.observable else "NOT OBSERVABLE")]
        out.append("Parent SCCs: " + ", ".join(
            "{" + ", ".join(name(i) for i in sorted(c)) + "}" for c in self.parent_components))
        if self.uncovered_parent_components:
            out.append("Unmeasured parent SCCs: " + ", ".join(
                "{" + ", ".join(name(i) for i in sorted(c)) + "}" for c in self.uncovered_parent_components))
        for k, v in self.diagnostics.items():
            out.append(f"  [{'pass' if v else 'FAIL'}] {k}")
        out.append(f"Redundancy level q = {self.redundancy_level}")
        if self.sufficiency_only:
            out.append("(network condition is sufficient, not necessary)")
        return "\n".join(out) + "\n"


def _structured(a) -> StructuredMatrix:
    return a if isinstance(a, StructuredMatrix) else StructuredMatrix.from_dense(a)


def system_digraph(a) -> DirectedGraph:
    """Node per state, link j -> i for every nonzero A[i, j]."""
    a = _structured(a)
    if not a.is_square:
        raise ValueError("system matrix must be square")
    return DirectedGraph(a.rows, frozenset((j, i) for i, j in a.pattern))


def _require_self_damped(a: StructuredMatrix) -> None:
    if not a.is_square:
        raise ValueError("system matrix must be square")
    if a.zero_diagonal():
        raise ValueError("non-self-damped system; cyclic-graph precondition violated")


def parent_components(a) -> list[frozenset[int]]:
    return scc_parents(system_digraph(a))


def scc_parents(g: DirectedGraph) -> list[frozenset[int]]:
    return sorted(g_.scc_decompose(g).parents, key=min)


def _coverage(a: StructuredMatrix, placement: SensorPlacement):
    if placement.state_dim != a.rows:
        raise ValueError(f"placement is for {placement.state_dim} states, A has {a.rows}")
    parents = parent_components(a)
    counts = [len(placement.cavs_measuring(c)) for c in parents]
    uncovered = [c for c, k in zip(parents, counts) if k == 0]
    return parents, counts, uncovered


def centralized_structural_observability(a, placement: SensorPlacement) -> ObservabilityVerdict:
    """Observable iff some CAV measures a state in every parent SCC of G_A."""
    a = _structured(a)
    _require_self_damped(a)
    parents, counts, uncovered = _coverage(a, placement)
    observable = not uncovered
    return ObservabilityVerdict(
        observable=observable,
        uncovered_parent_components=uncovered,
        redundancy_level=min(counts) if observable and counts else 0,
        diagnostics={"parent_sccs_measured": observable},
        parent_components=parents,
    )


def _check_network(w_graph: DirectedGraph, placement: SensorPlacement) -> None:
    if w_graph.node_count != placement.cav_count:
        raise ValueError(f"network has {w_graph.node_count} CAVs, placement has {placement.cav_count}")
    missing = [i for i in range(w_graph.node_count) if (i, i) not in w_graph.links]
    if missing:
        raise ValueError(f"CAV(s) {missing} lack a self-loop in the consensus network")


def network_redundancy(w_graph: DirectedGraph) -> int | None:
    """min(node, link) connectivity ignoring self-loops; None for a single CAV."""
    if w_graph.node_count < 2:
        return None
    bare = w_graph.without_self_loops()
    return min(g_.node_connectivity(bare), g_.link_connectivity(bare))


def redundant_observability_level(a, w_graph: DirectedGraph, placement: SensorPlacement) -> int:
    """Largest q with (i) >= q distinct CAVs measuring each parent SCC and
    (ii) a q-node- and q-link-connected CAV network."""
    a = _structured(a)
    _require_self_damped(a)
    _check_network(w_graph, placement)
    parents, counts, uncovered = _coverage(a, placement)
    if uncovered or not g_.is_strongly_connected(w_graph):
        return 0
    sensors = min(counts) if counts else 0
    net = network_redundancy(w_graph)
    return sensors if net is None else min(sensors, net)


def distributed_structural_observability(a, w_graph: DirectedGraph, placement: SensorPlacement) -> ObservabilityVerdict:
    a = _structured(a)
    _require_self_damped(a)
    _check_network(w_graph, placement)
    central = centralized_structural_observability(a, placement)
    connected = g_.is_strongly_connected(w_graph)
    observable = central.observable and connected
    return ObservabilityVerdict(
        observable=observable,
        uncovered_parent_components=central.uncovered_parent_components,
        redundancy_level=redundant_observability_level(a, w_graph, placement) if observable else 0,
        diagnostics={
            "parent_sccs_measured": central.observable,
            "network_strongly_connected": connected,
        },
        parent_components=central.parent_components,
        sufficiency_only=True,
    )


def observability_matrix(q: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Stack [C; C Q; ...; C Q^(d-1)], each block scaled to unit norm.

    The scaling keeps powers of Q from swamping the rank decision and does
    not change the rank.
    """
    d = q.shape[0]
    blocks = []
    block = c.copy()
    for _ in range(d):
        norm = np.linalg.norm(block)
        blocks.append(block / norm if norm > 0 else block)
        block = block @ q
    return np.vstack(blocks)


def numeric_rank(m: np.ndarray, rank_tol: float | None = None) -> int:
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    rel = rank_tol if rank_tol is not None else max(m.shape[1], 1) * np.finfo(float).eps
    return int(np.sum(s > rel * s[0]))


def numeric_observability_check(a_matrix, w_matrix, placement: SensorPlacement,
                                rank_tol: float | None = DEFAULT_RANK_TOL) -> bool:
    """Full-rank test of the observability matrix of (W ⊗ A, D_C)."""
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    w = np.atleast_2d(np.asarray(w_matrix, dtype=float))
    check_row_stochastic(w)
    if a.shape[0] != a.shape[1] or a.shape[0] != placement.state_dim:
        raise ValueError("A does not match the placement's state dimension")
    if w.shape[0] != placement.cav_count:
        raise ValueError("W does not match the number of CAVs")
    nbrs = [sorted({i} | set(np.flatnonzero(w[i]).tolist())) for i in range(w.shape[0])]
    q = kronecker(w, a)
    dc = build_dc(placement.measured, nbrs, placement.state_dim)
    return numeric_rank(observability_matrix(q, dc), rank_tol) == q.shape[0]
