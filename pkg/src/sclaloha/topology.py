"""Network graph, one-hop flows and the neighbourhood queries built on them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


class TopologyError(ValueError):
    """Invalid topology construction or query."""


@dataclass(frozen=True)
class Flow:
    flow_id: int
    src: int
    dst: int


@dataclass(frozen=True)
class Topology:
    """Undirected graph over nodes ``0..node_count-1``.

    An edge means the two stations hear each other; interference range
    equals transmission range.
    """

    node_count: int
    edges: frozenset = field(default_factory=frozenset)
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count < 0:
            raise TopologyError("node_count must be non-negative")
        norm = set()
        for e in self.edges:
            u, v = tuple(e)
            if u == v:
                raise TopologyError(f"self-loop at node {u}")
            for x in (u, v):
                if not 0 <= x < self.node_count:
                    raise TopologyError(f"edge ({u},{v}) references unknown node {x}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))
        adj = [set() for _ in range(self.node_count)]
        for u, v in norm:
            adj[u].add(v)
            adj[v].add(u)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable) -> "Topology":
        return cls(node_count, frozenset(tuple(e) for e in edges))

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def degree(self, v: int) -> int:
        return len(neighbors(self, v))


def build_chain(n: int) -> Topology:
    if n < 1:
        raise TopologyError("a chain needs at least one node")
    return Topology.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def build_ring(n: int) -> Topology:
    if n < 3:
        raise TopologyError("a ring needs at least three nodes")
    return Topology.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def _check_node(t: Topology, v: int) -> None:
    if not (isinstance(v, int) and 0 <= v < t.node_count):
        raise TopologyError(f"node {v!r} not in topology of {t.node_count} nodes")


def neighbors(t: Topology, v: int) -> frozenset:
    """Stations that hear ``v``. ``v`` itself is not included."""
    _check_node(t, v)
    return t._adj[v]


def reception_conflict_set(t: Topology, receiver: int) -> frozenset:
    """Stations whose simultaneous activity can destroy a reception at ``receiver``.

    The receiver belongs to the set because a transmitting station cannot
    receive.
    """
    return neighbors(t, receiver) | {receiver}


def flow_degrees(t: Topology, flows: Iterable[Flow]) -> tuple[list[int], list[int]]:
    """Per-node (incoming, outgoing) flow counts."""
    inc = [0] * t.node_count
    out = [0] * t.node_count
    for f in flows:
        inc[f.dst] += 1
        out[f.src] += 1
    return inc, out


def neighborhood_flow_count(t: Topology, flows: Iterable[Flow], i: int) -> int:
    """Sum of incoming plus outgoing flow counts over the neighbours of ``i``.

    A flow between two neighbours of ``i`` is counted twice.
    """
    inc, out = flow_degrees(t, flows)
    return sum(inc[k] + out[k] for k in neighbors(t, i))


def validate(t: Topology, flows: Iterable[Flow]) -> list[str]:
    """Return a list of violations; empty means the flow set is usable on ``t``."""
    problems = []
    seen = set()
    for f in flows:
        if f.flow_id in seen:
            problems.append(f"flow {f.flow_id}: duplicate flow id")
        seen.add(f.flow_id)
        bad = [x for x in (f.src, f.dst)
               if not (isinstance(x, int) and 0 <= x < t.node_count)]
        if bad:
            problems.append(f"flow {f.flow_id}: node {bad[0]} out of range")
            continue
        if f.src == f.dst:
            problems.append(f"flow {f.flow_id}: self-loop at node {f.src}")
        elif not t.has_edge(f.src, f.dst):
            problems.append(f"flow {f.flow_id}: flow not along an edge ({f.src}->{f.dst})")
    return problems


def chain3_flows() -> list[Flow]:
    """Three flows on the 3-node chain: 0->1, 1->2, 2->1."""
    return [Flow(0, 0, 1), Flow(1, 1, 2), Flow(2, 2, 1)]


def ring_flows(n: int) -> list[Flow]:
    """One flow per station on a ring, each to its clockwise neighbour."""
    return [Flow(i, i, (i + 1) % n) for i in range(n)]


def canonical_flows(kind: str, n: int) -> list[Flow]:
    """Default flow set for a builtin topology."""
    if kind == "ring":
        return ring_flows(n)
    if kind == "chain":
        if n == 3:
            return chain3_flows()
        # one flow per link direction keeps every station saturated and every flow acknowledged
        flows = []
        for i in range(n - 1):
            flows.append(Flow(len(flows), i, i + 1))
            flows.append(Flow(len(flows), i + 1, i))
        return flows
    raise TopologyError(f"unknown builtin topology {kind!r}")
