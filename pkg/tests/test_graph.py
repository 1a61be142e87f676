import itertools
import time

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mixobs import graph as g_
from mixobs.graph import DirectedGraph, GraphError


@st.composite
def digraphs(draw, max_nodes=7, min_nodes=1):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(n)]
    links = draw(st.sets(st.sampled_from(pairs), max_size=len(pairs)))
    return DirectedGraph.from_links(n, links)


@given(digraphs())
@settings(max_examples=150, deadline=None)
def test_scc_matches_mutual_reachability(g):
    dec = g_.scc_decompose(g)
    assert set(dec.components) == oracles.sccs(g.node_count, g.links)
    assert set(dec.parents) == oracles.sink_sccs(g.node_count, g.links)
    for v, c in enumerate(dec.component_of):
        assert v in dec.components[c]


@given(digraphs())
@settings(max_examples=100, deadline=None)
def test_condensation_is_acyclic_and_precedes_matches_reach(g):
    dec = g_.scc_decompose(g)
    cond = dec.condensation
    assert len(oracles.sccs(cond.node_count, cond.links)) == cond.node_count
    for a, b in itertools.permutations(range(cond.node_count), 2):
        assert dec.precedes(a, b) == (b in oracles.reach(cond.node_count, cond.links, a))


@given(digraphs(max_nodes=6, min_nodes=2))
@settings(max_examples=80, deadline=None)
def test_local_connectivity_matches_exhaustive_cuts(g):
    for s, t in itertools.permutations(range(g.node_count), 2):
        assert g_.local_link_connectivity(g, s, t) == oracles.min_link_cut(g.node_count, g.links, s, t)
        expected = oracles.min_node_cut(g.node_count, g.links, s, t)
        if expected is not None:
            assert g_.local_node_connectivity(g, s, t) == expected


@given(digraphs(max_nodes=6, min_nodes=3))
@settings(max_examples=60, deadline=None)
def test_global_connectivity_matches_exhaustive_removal(g):
    assert g_.link_connectivity(g) == oracles.link_connectivity(g.node_count, g.links)
    assert g_.node_connectivity(g) == oracles.node_connectivity(g.node_count, g.links)


@pytest.mark.parametrize("spec, expected", [
    ("cycle(5)", 2), ("cycle(8)", 2), ("star(6)", 1), ("path(6)", 1),
    ("ring(8, 1)", 2), ("ring(8, 2)", 4), ("ring(8, 3)", 6), ("complete(6)", 5),
])
def test_named_graph_connectivity(spec, expected):
    g = g_.build_named(spec)
    assert g_.node_connectivity(g) == expected
    assert g_.link_connectivity(g) == expected


def test_table_convention_lists_complete_graph_as_n():
    assert g_.TABLE_CONVENTION["complete"](6) == (6, 6)
    assert g_.TABLE_CONVENTION["ring"](8, 3) == (6, 6)


def test_connectivity_is_fast_on_small_rings():
    start = time.perf_counter()
    for m in (1, 2, 3):
        g_.node_connectivity(g_.ring(8, m))
        g_.link_connectivity(g_.ring(8, m))
    assert time.perf_counter() - start < 1.0


def test_self_loops_do_not_change_connectivity():
    g = g_.cycle(5)
    assert g_.node_connectivity(g.with_self_loops()) == g_.node_connectivity(g)
    assert g_.link_connectivity(g.with_self_loops()) == g_.link_connectivity(g)


def test_small_graph_conventions():
    assert g_.node_connectivity(DirectedGraph.from_links(1, [])) == 0
    assert g_.node_connectivity(DirectedGraph.undirected(2, [(0, 1)])) == 1
    assert g_.node_connectivity(DirectedGraph.from_links(2, [(0, 1)])) == 0
    with pytest.raises(GraphError, match="undefined"):
        g_.link_connectivity(DirectedGraph.from_links(1, []))
    with pytest.raises(GraphError):
        g_.is_strongly_connected(DirectedGraph.from_links(0, []))


def test_disconnected_graph_has_zero_connectivity():
    g = DirectedGraph.undirected(4, [(0, 1), (2, 3)])
    assert g_.node_connectivity(g) == 0
    assert g_.link_connectivity(g) == 0
    assert not g_.is_strongly_connected(g)


def test_survives_removal_relabels_in_order():
    g = g_.cycle(5)
    rest = g_.survives_removal(g, removed_nodes=[1])
    assert rest.node_count == 4
    assert g_.surviving_nodes(5, [1]) == [0, 2, 3, 4]
    # 0-2 was not a link; 2-3, 3-4, 4-0 survive as 1-2, 2-3, 3-0
    assert rest.links == frozenset({(1, 2), (2, 1), (2, 3), (3, 2), (3, 0), (0, 3)})


def test_survives_removal_rejects_unknown_targets():
    g = g_.cycle(4)
    with pytest.raises(GraphError):
        g_.survives_removal(g, removed_nodes=[7])
    with pytest.raises(GraphError):
        g_.survives_removal(g, removed_links=[(0, 2)])


def test_cycle_stays_connected_after_any_single_removal():
    g = g_.cycle(5)
    for v in range(5):
        assert g_.is_strongly_connected(g_.survives_removal(g, removed_nodes=[v]))
    for i in range(5):
        j = (i + 1) % 5
        assert g_.is_strongly_connected(g_.survives_removal(g, removed_links=[(i, j), (j, i)]))


def test_duplicate_and_out_of_range_links_rejected():
    with pytest.raises(GraphError, match="duplicate"):
        DirectedGraph.from_links(3, [(0, 1), (0, 1)])
    with pytest.raises(GraphError, match="out of range"):
        DirectedGraph.from_links(2, [(0, 2)])


@given(digraphs())
@settings(max_examples=60, deadline=None)
def test_graph_text_round_trip(g):
    assert g_.parse_graph(g_.format_graph(g)) == g


def test_parse_graph_reports_line_numbers():
    with pytest.raises(GraphError, match="line 3"):
        g_.parse_graph("nodes 3\n0 1\n0 x\n")


@pytest.mark.parametrize("spec", ["ring(8)", "blob(3)", "cycle(2)", "ring(4, 2)", "cycle"])
def test_bad_named_specs(spec):
    with pytest.raises(GraphError):
        g_.build_named(spec)
