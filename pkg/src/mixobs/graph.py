"""Directed graphs, SCC decomposition and Menger-style connectivity.

Graphs are stored directed.  A link ``(i, j)`` means node ``i`` sends
information to node ``j``.  Undirected inputs are represented by inserting
both arcs.  Self-loops are kept in the data model (system digraphs and the
consensus network need them) but never take part in connectivity.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

Link = tuple[int, int]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class DirectedGraph:
    node_count: int
    links: frozenset[Link]
    weights: Mapping[Link, float] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        if self.node_count < 0:
            raise GraphError("node_count must be nonnegative")
        for i, j in self.links:
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise GraphError(f"link ({i}, {j}) out of range for {self.node_count} nodes")
        for link in self.weights:
            if link not in self.links:
                raise GraphError(f"weight given for missing link {link}")

    @classmethod
    def from_links(cls, node_count: int, links: Iterable, weights=None) -> "DirectedGraph":
        seen: set[Link] = set()
        for link in links:
            link = (int(link[0]), int(link[1]))
            if link in seen:
                raise GraphError(f"duplicate link {link}")
            seen.add(link)
        return cls(node_count, frozenset(seen), dict(weights or {}))

    @classmethod
    def undirected(cls, node_count: int, edges: Iterable) -> "DirectedGraph":
        arcs: set[Link] = set()
        for i, j in edges:
            arcs.add((i, j))
            arcs.add((j, i))
        return cls(node_count, frozenset(arcs))

    def successors(self, node: int) -> list[int]:
        return sorted(j for i, j in self.links if i == node)

    def predecessors(self, node: int) -> list[int]:
        return sorted(i for i, j in self.links if j == node)

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for i, j in sorted(self.links):
            adj[i].append(j)
        return adj

    def has_self_loops(self) -> bool:
        return all((i, i) in self.links for i in range(self.node_count))

    def with_self_loops(self) -> "DirectedGraph":
        loops = {(i, i) for i in range(self.node_count)}
        return DirectedGraph(self.node_count, self.links | loops, dict(self.weights))

    def without_self_loops(self) -> "DirectedGraph":
        links = frozenset((i, j) for i, j in self.links if i != j)
        weights = {k: v for k, v in self.weights.items() if k in links}
        return DirectedGraph(self.node_count, links, weights)

    def symmetrized(self) -> "DirectedGraph":
        return DirectedGraph(self.node_count, self.links | {(j, i) for i, j in self.links})

    def is_symmetric(self) -> bool:
        return all((j, i) in self.links for i, j in self.links)


# -- named constructors (all undirected, no self-loops) ---------------------

def complete(n: int) -> DirectedGraph:
    return DirectedGraph.undirected(n, itertools.combinations(range(n), 2))


def cycle(n: int) -> DirectedGraph:
    if n < 3:
        raise GraphError("cycle needs at least 3 nodes")
    return DirectedGraph.undirected(n, [(i, (i + 1) % n) for i in range(n)])


def star(n: int) -> DirectedGraph:
    return DirectedGraph.undirected(n, [(0, i) for i in range(1, n)])


def path(n: int) -> DirectedGraph:
    return DirectedGraph.undirected(n, [(i, i + 1) for i in range(n - 1)])


def ring(n: int, m: int) -> DirectedGraph:
    """m-nearest-neighbour ring: node i links to i±1, ..., i±m (mod n)."""
    if m < 1 or 2 * m >= n:
        raise GraphError("ring(n, m) requires 1 <= m and 2m < n")
    edges = [(i, (i + d) % n) for i in range(n) for d in range(1, m + 1)]
    return DirectedGraph.undirected(n, edges)


NAMED_CONSTRUCTORS = {
    "complete": complete,
    "cycle": cycle,
    "star": star,
    "path": path,
    "ring": ring,
}

# Tabulated convention sometimes used for these families: complete graphs are
# listed with connectivity n, while removal-based counting gives n - 1.
TABLE_CONVENTION = {
    "complete": lambda n: (n, n),
    "cycle": lambda n: (2, 2),
    "star": lambda n: (1, 1),
    "path": lambda n: (1, 1),
    "ring": lambda n, m: (2 * m, 2 * m),
}


def build_named(spec: str) -> DirectedGraph:
    """Build a graph from text like ``ring(8, 2)`` or ``cycle(5)``."""
    name, args = parse_named(spec)
    return NAMED_CONSTRUCTORS[name](*args)


def parse_named(spec: str) -> tuple[str, tuple[int, ...]]:
    text = spec.strip()
    if "(" not in text or not text.endswith(")"):
        raise GraphError(f"not a named graph constructor: {spec!r}")
    name, _, rest = text.partition("(")
    name = name.strip()
    if name not in NAMED_CONSTRUCTORS:
        raise GraphError(f"unknown graph constructor {name!r}")
    try:
        args = tuple(int(a) for a in rest[:-1].split(",") if a.strip())
    except ValueError:
        raise GraphError(f"non-integer argument in {spec!r}") from None
    expected = 2 if name == "ring" else 1
    if len(args) != expected:
        raise GraphError(f"{name} takes {expected} argument(s), got {len(args)}")
    return name, args


# -- text format ------------------------------------------------------------

def format_graph(g: DirectedGraph) -> str:
    lines = [f"nodes {g.node_count}"]
    for i, j in sorted(g.links):
        if (i, j) in g.weights:
            lines.append(f"{i} {j} {g.weights[(i, j)]!r}")
        else:
            lines.append(f"{i} {j}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> DirectedGraph:
    node_count = None
    links: list[Link] = []
    weights: dict[Link, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if node_count is None:
            if parts[0] != "nodes" or len(parts) != 2:
                raise GraphError(f"line {lineno}: expected header 'nodes N'")
            node_count = int(parts[1])
            continue
        if len(parts) not in (2, 3):
            raise GraphError(f"line {lineno}: expected 'i j [w]'")
        try:
            link = (int(parts[0]), int(parts[1]))
            if len(parts) == 3:
                weights[link] = float(parts[2])
        except ValueError:
            raise GraphError(f"line {lineno}: malformed link {line!r}") from None
        links.append(link)
    if node_count is None:
        raise GraphError("missing 'nodes N' header")
    return DirectedGraph.from_links(node_count, links, weights)


# -- strongly connected components -----------------------------------------

@dataclass(frozen=True)
class SccDecomposition:
    components: tuple[frozenset[int], ...]
    component_of: tuple[int, ...]
    condensation: DirectedGraph
    parent_flags: tuple[bool, ...]

    @property
    def parents(self) -> list[frozenset[int]]:
        return [c for c, p in zip(self.components, self.parent_flags) if p]

    def precedes(self, a: int, b: int) -> bool:
        """True when component ``a`` reaches component ``b`` in the condensation."""
        return a != b and b in _reachable(self.condensation.adjacency(), a)


def scc_decompose(g: DirectedGraph) -> SccDecomposition:
    """Tarjan's algorithm, iterative.

    Components come out in reverse topological order of the condensation,
    so sinks (parent components) appear first.
    """
    adj = g.adjacency()
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    components: list[frozenset[int]] = []
    counter = 0

    for root in range(g.node_count):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            for k in range(pos, len(adj[v])):
                w = adj[v][k]
                if w not in index:
                    work.append((v, k + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                components.append(frozenset(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])

    component_of = [0] * g.node_count
    for c, comp in enumerate(components):
        for v in comp:
            component_of[v] = c
    cond_links = {
        (component_of[i], component_of[j])
        for i, j in g.links
        if component_of[i] != component_of[j]
    }
    condensation = DirectedGraph(len(components), frozenset(cond_links))
    has_out = {a for a, _ in cond_links}
    parent_flags = tuple(c not in has_out for c in range(len(components)))
    return SccDecomposition(tuple(components), tuple(component_of), condensation, parent_flags)


def _reachable(adj: list[list[int]], source: int) -> set[int]:
    seen = {source}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def is_strongly_connected(g: DirectedGraph) -> bool:
    if g.node_count < 1:
        raise GraphError("strong connectivity needs at least one node")
    return len(scc_decompose(g).components) == 1


# -- max-flow connectivity --------------------------------------------------

def _max_flow(capacity: dict[int, dict[int, int]], source: int, sink: int, limit=None) -> int:
    """Edmonds-Karp on a residual dict-of-dicts (mutated in place)."""
    flow = 0
    while limit is None or flow < limit:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, cap in capacity[u].items():
                if cap > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            break
        bottleneck = None
        v = sink
        while parent[v] is not None:
            u = parent[v]
            c = capacity[u][v]
            bottleneck = c if bottleneck is None else min(bottleneck, c)
            v = u
        v = sink
        while parent[v] is not None:
            u = parent[v]
            capacity[u][v] -= bottleneck
            capacity[v].setdefault(u, 0)
            capacity[v][u] += bottleneck
            v = u
        flow += bottleneck
    return flow


def local_link_connectivity(g: DirectedGraph, source: int, target: int) -> int:
    """Maximum number of link-disjoint paths from ``source`` to ``target``."""
    capacity: dict[int, dict[int, int]] = {v: {} for v in range(g.node_count)}
    for i, j in g.links:
        if i != j:
            capacity[i][j] = 1
    return _max_flow(capacity, source, target)


def local_node_connectivity(g: DirectedGraph, source: int, target: int) -> int:
    """Maximum number of internally node-disjoint paths from ``source`` to ``target``.

    Node-split transform: v becomes v_in=2v -> v_out=2v+1 with unit capacity
    (unbounded for the endpoints); original links get unbounded capacity.
    A direct link ``source -> target`` is not counted.
    """
    n = g.node_count
    big = n + 1
    capacity: dict[int, dict[int, int]] = {v: {} for v in range(2 * n)}
    for v in range(n):
        capacity[2 * v][2 * v + 1] = big if v in (source, target) else 1
    for i, j in g.links:
        if i != j and not (i == source and j == target):
            capacity[2 * i + 1][2 * j] = big
    return _max_flow(capacity, 2 * source + 1, 2 * target, limit=n)


def link_connectivity(g: DirectedGraph) -> int:
    """Minimum link cut over all ordered node pairs."""
    if g.node_count < 2:
        raise GraphError("connectivity undefined for fewer than two nodes")
    return min(
        local_link_connectivity(g, s, t)
        for s in range(g.node_count)
        for t in range(g.node_count)
        if s != t
    )


def node_connectivity(g: DirectedGraph) -> int:
    """Minimum node cut over ordered pairs (s, t) with no link s -> t.

    A graph where every ordered pair is linked (complete) gets ``n - 1``;
    graphs with fewer than three nodes get ``n - 1`` when strongly connected
    and 0 otherwise.
    """
    n = g.node_count
    if n < 1:
        raise GraphError("connectivity undefined for an empty graph")
    if n < 3:
        return n - 1 if is_strongly_connected(g) else 0
    best = n - 1
    for s in range(n):
        for t in range(n):
            if s != t and (s, t) not in g.links:
                best = min(best, local_node_connectivity(g, s, t))
                if best == 0:
                    return 0
    return best


def survives_removal(
    g: DirectedGraph,
    removed_nodes: Iterable[int] = (),
    removed_links: Iterable[Link] = (),
) -> DirectedGraph:
    """Graph left after deleting nodes and links.

    Surviving nodes are relabelled 0..k-1 in their original order (see
    :func:`surviving_nodes`).  Links touching a removed node disappear with it.
    """
    removed_nodes = set(removed_nodes)
    removed_links = {tuple(l) for l in removed_links}
    for v in removed_nodes:
        if not 0 <= v < g.node_count:
            raise GraphError(f"cannot remove nonexistent node {v}")
    for link in removed_links:
        if link not in g.links:
            raise GraphError(f"cannot remove nonexistent link {link}")
    keep = surviving_nodes(g.node_count, removed_nodes)
    relabel = {old: new for new, old in enumerate(keep)}
    links = {
        (relabel[i], relabel[j])
        for i, j in g.links
        if (i, j) not in removed_links and i in relabel and j in relabel
    }
    weights = {
        (relabel[i], relabel[j]): w
        for (i, j), w in g.weights.items()
        if (relabel.get(i), relabel.get(j)) in links
    }
    return DirectedGraph(len(keep), frozenset(links), weights)


def surviving_nodes(node_count: int, removed_nodes: Iterable[int]) -> list[int]:
    removed = set(removed_nodes)
    return [v for v in range(node_count) if v not in removed]
