import pytest
from hypothesis import given, settings

from strategies import graphs

from sclaloha.topology import (
    Flow,
    Topology,
    TopologyError,
    build_chain,
    build_ring,
    chain3_flows,
    neighborhood_flow_count,
    neighbors,
    reception_conflict_set,
    ring_flows,
    validate,
)


def test_build_chain():
    t = build_chain(3)
    assert t.node_count == 3
    assert t.edges == {(0, 1), (1, 2)}
    assert build_chain(1).edges == frozenset()
    assert build_chain(4).edges == {(0, 1), (1, 2), (2, 3)}
    with pytest.raises(TopologyError):
        build_chain(0)


def test_build_ring():
    t = build_ring(6)
    assert len(t.edges) == 6
    assert all(t.degree(v) == 2 for v in range(6))
    tri = build_ring(3)
    assert tri.edges == {(0, 1), (1, 2), (0, 2)}
    assert build_ring(4).edges == {(0, 1), (1, 2), (2, 3), (0, 3)}
    for n in (0, 1, 2):
        with pytest.raises(TopologyError):
            build_ring(n)


def test_neighbors():
    assert neighbors(build_chain(3), 1) == {0, 2}
    assert neighbors(build_chain(3), 0) == {1}
    assert neighbors(build_ring(6), 0) == {1, 5}
    with pytest.raises(TopologyError):
        neighbors(build_chain(3), 3)


def test_neighborhood_flow_count_chain3():
    t, flows = build_chain(3), chain3_flows()
    assert [neighborhood_flow_count(t, flows, i) for i in range(3)] == [3, 3, 3]


def test_neighborhood_flow_count_pair():
    assert neighborhood_flow_count(build_chain(2), [Flow(0, 0, 1)], 0) == 1


def test_reception_conflict_set():
    # D, E, F, G = 0, 1, 2, 3
    assert reception_conflict_set(build_chain(4), 2) == {1, 2, 3}
    assert reception_conflict_set(build_chain(3), 0) == {0, 1}
    assert reception_conflict_set(build_ring(6), 2) == {1, 2, 3}


def test_validate():
    t = build_chain(3)
    assert validate(t, chain3_flows()) == []
    assert any("not along an edge" in p for p in validate(t, [Flow(0, 0, 2)]))
    assert any("self-loop" in p for p in validate(t, [Flow(0, 1, 1)]))
    assert any("duplicate" in p for p in validate(t, [Flow(0, 0, 1), Flow(0, 1, 0)]))
    assert any("out of range" in p for p in validate(t, [Flow(0, 0, 7)]))


def test_bad_edges_rejected():
    with pytest.raises(TopologyError):
        Topology.from_edges(2, [(0, 0)])
    with pytest.raises(TopologyError):
        Topology.from_edges(2, [(0, 5)])


@settings(max_examples=200, deadline=None)
@given(graphs())
def test_neighbor_symmetry_and_conflict_size(g):
    t, _ = g
    for v in range(t.node_count):
        for u in neighbors(t, v):
            assert v in neighbors(t, u)
        cs = reception_conflict_set(t, v)
        assert v in cs and len(cs) == t.degree(v) + 1


@settings(max_examples=200, deadline=None)
@given(graphs())
def test_flow_count_matches_incidence_count(g):
    t, flows = g
    for i in range(t.node_count):
        brute = 0
        for f in flows:
            for k in range(t.node_count):
                if k != i and t.has_edge(i, k):
                    brute += (k == f.src) + (k == f.dst)
        assert neighborhood_flow_count(t, flows, i) == brute


@pytest.mark.parametrize("n", [3, 4, 5, 6, 9])
def test_ring_is_two_regular(n):
    t = build_ring(n)
    assert len(t.edges) == n
    assert {t.degree(v) for v in range(n)} == {2}
    assert validate(t, ring_flows(n)) == []
