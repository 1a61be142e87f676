"""Dense matrix helpers: Kronecker products, consensus weights, D_C, Â."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .graph import DirectedGraph, GraphError

MAX_DIM = 4096


class DimensionError(ValueError):
    pass


def as_matrix(m, name="matrix") -> np.ndarray:
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} has non-finite entries")
    return arr


def kronecker(lhs, rhs, max_dim: int = MAX_DIM) -> np.ndarray:
    lhs, rhs = as_matrix(lhs, "lhs"), as_matrix(rhs, "rhs")
    rows = lhs.shape[0] * rhs.shape[0]
    cols = lhs.shape[1] * rhs.shape[1]
    if max(rows, cols) > max_dim:
        raise DimensionError(f"kronecker result {rows}x{cols} exceeds cap {max_dim}")
    return np.kron(lhs, rhs)


def neighborhoods(g: DirectedGraph) -> list[list[int]]:
    """In-neighbourhood N_i = {j : j sends to i}; includes i when it has a self-loop."""
    return [g.predecessors(i) for i in range(g.node_count)]


def build_row_stochastic(g: DirectedGraph, rule: str = "uniform") -> np.ndarray:
    """Consensus matrix W with w_ij > 0 iff j sends to i.

    ``uniform`` sets w_ij = 1/|N_i|; ``weights`` normalizes the link weights
    stored on the graph (missing weights count as 1).
    """
    n = g.node_count
    w = np.zeros((n, n))
    for i in range(n):
        if (i, i) not in g.links:
            raise GraphError(f"node {i} lacks a self-loop")
    for i, nbrs in enumerate(neighborhoods(g)):
        if nbrs == [i] and n > 1:
            raise GraphError(f"node {i} is isolated (receives from no neighbour)")
        if rule == "uniform":
            for j in nbrs:
                w[i, j] = 1.0 / len(nbrs)
        elif rule == "weights":
            raw = np.array([g.weights.get((j, i), 1.0) for j in nbrs])
            if np.any(raw <= 0):
                raise GraphError(f"non-positive link weight into node {i}")
            w[i, nbrs] = raw / raw.sum()
        else:
            raise ValueError(f"unknown weight rule {rule!r}")
    return w


def check_row_stochastic(w: np.ndarray, tol: float = 1e-9) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionError("W must be square")
    if np.any(w < -tol) or np.max(np.abs(w.sum(axis=1) - 1.0)) > tol:
        raise ValueError("W is not row-stochastic")


def selection_rows(indices: Sequence[int], state_dim: int) -> np.ndarray:
    """Output matrix C_i with one unit entry per measured global state."""
    c = np.zeros((len(indices), state_dim))
    for r, idx in enumerate(indices):
        if not 0 <= idx < state_dim:
            raise DimensionError(f"state index {idx} out of range [0, {state_dim})")
        c[r, idx] = 1.0
    return c


def build_dc(measured: Sequence[Sequence[int]], nbrs: Sequence[Sequence[int]], state_dim: int) -> np.ndarray:
    """Block-diagonal D_C whose block i is the sum of C_j^T C_j over j in N_i."""
    local = []
    for idx in measured:
        c = selection_rows(idx, state_dim)
        local.append(c.T @ c)
    blocks = []
    for i, group in enumerate(nbrs):
        block = np.zeros((state_dim, state_dim))
        for j in group:
            if not 0 <= j < len(local):
                raise DimensionError(f"neighbour {j} of node {i} has no placement")
            block += local[j]
        blocks.append(block)
    return block_diag(*blocks) if blocks else np.zeros((0, 0))


@dataclass(frozen=True)
class ObserverGain:
    """Block-diagonal gain K = diag(K_1, ..., K_n)."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(as_matrix(b, "gain block") for b in self.blocks)
        if not blocks:
            raise DimensionError("gain needs at least one block")
        shape = blocks[0].shape
        if shape[0] != shape[1]:
            raise DimensionError("gain blocks must be square")
        if any(b.shape != shape for b in blocks):
            raise DimensionError("gain blocks must share one dimension")
        object.__setattr__(self, "blocks", blocks)

    @property
    def block_dim(self) -> int:
        return self.blocks[0].shape[0]

    def matrix(self) -> np.ndarray:
        return block_diag(*self.blocks)

    @classmethod
    def zeros(cls, n: int, block_dim: int) -> "ObserverGain":
        return cls(tuple(np.zeros((block_dim, block_dim)) for _ in range(n)))

    @classmethod
    def from_matrix(cls, k: np.ndarray, block_dim: int) -> "ObserverGain":
        n = k.shape[0] // block_dim
        return cls(tuple(k[i * block_dim:(i + 1) * block_dim, i * block_dim:(i + 1) * block_dim].copy()
                         for i in range(n)))

    def drop(self, index: int) -> "ObserverGain":
        return ObserverGain(self.blocks[:index] + self.blocks[index + 1:])

    def __eq__(self, other):
        return (isinstance(other, ObserverGain) and len(self.blocks) == len(other.blocks)
                and all(np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks)))

    __hash__ = None


def assemble_ahat(w, a, k, dc) -> np.ndarray:
    """Closed-loop error matrix (I - K D_C)(W ⊗ A)."""
    q = kronecker(w, a)
    kmat = k.matrix() if isinstance(k, ObserverGain) else as_matrix(k, "K")
    dc = as_matrix(dc, "D_C")
    if kmat.shape != q.shape or dc.shape != q.shape:
        raise DimensionError(f"K {kmat.shape}, D_C {dc.shape} and W⊗A {q.shape} disagree")
    return q - kmat @ dc @ q


def spectral_radius(m) -> float:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("spectral radius needs a square matrix")
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def format_matrix(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in m]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    tokens = text.split()
    if len(tokens) < 2:
        raise DimensionError("matrix text needs a 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = [float(t) for t in tokens[2:]]
    if len(values) != rows * cols:
        raise DimensionError(f"expected {rows * cols} entries, found {len(values)}")
    return np.array(values, dtype=float).reshape(rows, cols)


def format_gain(gain: ObserverGain) -> str:
    parts = [f"# blocks {len(gain.blocks)}\n"]
    for i, b in enumerate(gain.blocks):
        parts.append(f"[block {i}]\n")
        parts.append(format_matrix(b))
    return "".join(parts)


def parse_gain(text: str) -> ObserverGain:
    blocks = []
    current: list[str] | None = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#") or not stripped:
            continue
        if stripped.startswith("[block"):
            if current is not None:
                blocks.append(parse_matrix("\n".join(current)))
            current = []
        elif current is None:
            raise DimensionError("gain text must start with a [block i] section")
        else:
            current.append(stripped)
    if current is not None:
        blocks.append(parse_matrix("\n".join(current)))
    return ObserverGain(tuple(blocks))
