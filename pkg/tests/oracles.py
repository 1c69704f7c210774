"""Independent checkers that replay finished logs.

Deliberately built from the raw edge list and interval arithmetic only,
without the engine's reception helpers.
"""


def hears(edges, u, v):
    return (min(u, v), max(u, v)) in edges


def brute_force_outcome(edges, txs, x, r, self_interference=False):
    for y in txs:
        if y is x:
            continue
        overlap = min(x.end, y.end) - max(x.start, y.start)
        if overlap <= 0:
            continue
        if y.sender == x.sender:
            if self_interference:
                return "collided"
            continue
        if y.sender == r or hears(edges, y.sender, r):
            return "collided"
    return "delivered"


def replay_mismatches(topology, log, self_interference=False):
    edges = set(topology.edges)
    bad = []
    for x in log.transmissions:
        for r, out in x.outcomes.items():
            want = brute_force_outcome(edges, log.transmissions, x, r, self_interference)
            if want != out:
                bad.append((x.tx_id, r, out, want))
    return bad


def own_overlaps(log):
    by_sender = {}
    for tx in log.transmissions:
        by_sender.setdefault(tx.sender, []).append(tx)
    n = 0
    for txs in by_sender.values():
        txs.sort(key=lambda t: t.start)
        for a, b in zip(txs, txs[1:]):
            if b.start < a.end:
                n += 1
    return n
