"""Continuous-time event core: queue, channel, reception and the ACK ledger."""
from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from enum import Enum

from .protocols import (
    Action,
    FlowInstance,
    Mode,
    TransitionContext,
    Trigger,
    aloha_schedule_next,
    draw_exp_backoff,
    internal_collision_arbitrate,
    scl_transition,
)
from .topology import Flow, Topology, neighbors, reception_conflict_set, validate

DELIVERED = "delivered"
COLLIDED = "collided"
TIME_TOL = 1e-9


class SimulationError(RuntimeError):
    """Internal inconsistency; indicates a simulator bug."""


class AckMode(str, Enum):
    DELAYED = "delayed"
    IMMEDIATE = "immediate"


class EventKind(int, Enum):
    BACKOFF_EXPIRED = 0
    DET_EXPIRED = 1
    TXOP_GRANT = 2
    TX_END = 3
    ALOHA_ATTEMPT = 4
    SIMULATION_END = 5


@dataclass(order=True, slots=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: object = field(default=None, compare=False)


class EventQueue:
    """Min-heap of events ordered by ``(time, insertion sequence)``."""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0.0

    def __len__(self):
        return len(self._heap)

    def push(self, time: float, kind: EventKind, payload=None) -> Event:
        if time < self.now - TIME_TOL:
            raise SimulationError(f"event at {time} scheduled in the past (now={self.now})")
        ev = Event(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        if not self._heap:
            return Event(self.now, -1, EventKind.SIMULATION_END)
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        return ev


def push_event(q: EventQueue, e: Event) -> None:
    if e.time < q.now - TIME_TOL:
        raise SimulationError(f"event at {e.time} scheduled in the past (now={q.now})")
    e.seq = q._seq
    q._seq += 1
    heapq.heappush(q._heap, e)


def next_event(q: EventQueue) -> Event:
    return q.pop()


@dataclass(slots=True)
class Transmission:
    tx_id: int
    sender: int
    start: float
    end: float
    kind: str = "txop"
    acks: tuple = ()
    data: tuple | None = None
    dst: int | None = None
    outcomes: dict = field(default_factory=dict)

    def overlaps(self, other: "Transmission") -> bool:
        # half-open intervals: abutting transmissions do not overlap
        return self.start < other.end and other.start < self.end

    def addressees(self, flows: dict) -> list:
        out = []
        if self.data is not None:
            out.append(self.dst)
        for fid, _ in self.acks:
            src = flows[fid].src
            if src not in out:
                out.append(src)
        return out

    def to_record(self) -> dict:
        return {
            "t_start": self.start,
            "t_end": self.end,
            "sender": self.sender,
            "kind": self.kind,
            "acks": [list(a) for a in self.acks],
            "data": list(self.data) if self.data is not None else None,
            "dst": self.dst,
            "outcomes": {str(k): v for k, v in self.outcomes.items()},
        }


def resolve_reception(t: Topology, overlapping, x: Transmission, addressee: int,
                      self_interference: bool = False) -> str:
    """Outcome of ``x`` at ``addressee`` given the transmissions it may overlap.

    Lost if the addressee is itself on air during ``x``, or if any other
    station in the addressee's conflict set is on air for a positive time
    during ``x``. With ``self_interference`` the sender's own overlapping
    transmissions also count (textbook pure-Aloha attempt model).
    """
    if addressee == x.sender:
        raise SimulationError("a station cannot address itself")
    conflict = reception_conflict_set(t, addressee)
    for y in overlapping:
        if y is x or not x.overlaps(y):
            continue
        if y.sender == x.sender:
            if self_interference:
                return COLLIDED
            continue
        if y.sender in conflict:
            return COLLIDED
    return DELIVERED


def carrier_busy(t: Topology, active, station: int, now: float) -> bool:
    """True iff a neighbour of ``station`` is on air at instant ``now``."""
    nb = neighbors(t, station)
    return any(y.sender in nb and y.start <= now < y.end for y in active)


class AckLedger:
    """Pending delayed ACKs per station, each carried exactly once."""

    def __init__(self):
        self.pending = {}
        self.acked = set()

    def add(self, station: int, flow_id: int, seq: int, now: float) -> bool:
        key = (flow_id, seq)
        if key in self.acked:
            return False
        self.pending.setdefault(station, {})[key] = now
        self.acked.add(key)
        return True

    def drain(self, station: int) -> tuple:
        entries = self.pending.pop(station, None)
        if not entries:
            return ()
        return tuple(entries)

    def count(self, station: int) -> int:
        return len(self.pending.get(station, ()))


def ack_mode(config) -> AckMode:
    mode = AckMode(config.ack_mode)
    if mode is AckMode.IMMEDIATE and not 0 < config.ack_duration < 1:
        raise ValueError("immediate ACK duration must lie in (0, 1)")
    return mode


@dataclass
class SimConfig:
    """Everything a single run needs; picklable for process pools."""

    topology: Topology
    flows: list
    lengths: dict
    variant: str = "scl"
    stickiness: int = 1
    ack_mode: str = "delayed"
    ack_duration: float = 0.2
    horizon: float = 500.0
    rates: dict | None = None
    mean_is_T: bool = True

    def __post_init__(self):
        if self.variant not in ("scl", "sticky", "hybrid", "aloha"):
            raise ValueError(f"unknown protocol variant {self.variant!r}")
        problems = validate(self.topology, self.flows)
        if problems:
            raise ValueError("; ".join(problems))
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        ack_mode(self)
        if self.variant == "aloha":
            if not self.rates:
                raise ValueError("aloha variant requires per-flow rates")
        else:
            for f in self.flows:
                if f.src not in self.lengths:
                    raise ValueError(f"no schedule length for station {f.src}")

    @property
    def global_period(self) -> float:
        return max(self.lengths.values()) if self.lengths else 0.0


@dataclass
class RunLog:
    horizon: float
    global_period: float
    variant: str
    transmissions: list = field(default_factory=list)
    mode_changes: list = field(default_factory=list)
    dropped_acks: int = 0

    def to_jsonl(self, include_modes: bool = False) -> str:
        lines = [json.dumps(tx.to_record(), sort_keys=True) for tx in self.transmissions]
        if include_modes:
            lines += [json.dumps({"t": t, "station": s, "flow": f, "mode": m}, sort_keys=True)
                      for t, s, f, m in self.mode_changes]
        return "\n".join(lines) + "\n"


class _Station:
    __slots__ = ("node", "busy_until", "pending", "grant_pending", "rx_since_txop")

    def __init__(self, node):
        self.node = node
        self.busy_until = -1.0
        self.pending = []
        self.grant_pending = False
        self.rx_since_txop = False


class Simulator:
    """One run of a scenario. Strictly sequential; create one per run.

    ``draws`` optionally scripts exponential backoff durations per flow id
    (responder instances use ``("r", station)``); the RNG takes over when
    a script runs out.
    """

    def __init__(self, config: SimConfig, seed: int, draws: dict | None = None):
        self.cfg = config
        self.t = config.topology
        self.rng = random.Random(seed)
        self.draws = {k: list(v) for k, v in (draws or {}).items()}
        self.q = EventQueue()
        self.flows = {f.flow_id: f for f in config.flows}
        self.stations = [_Station(v) for v in range(self.t.node_count)]
        self.ledger = AckLedger()
        self.mode = ack_mode(config)
        self.hybrid = config.variant == "hybrid"
        self.recent = []
        self.log = RunLog(config.horizon, config.global_period, config.variant)
        self._tx_counter = 0
        self.instances = {}

    # -- helpers -------------------------------------------------------
    def _key(self, inst):
        return inst.flow_id if inst.flow_id is not None else ("r", inst.station)

    def _draw(self, inst) -> float:
        script = self.draws.get(self._key(inst))
        if script:
            return script.pop(0)
        return draw_exp_backoff(self.rng, inst.T, self.cfg.mean_is_T)

    def _set_mode(self, inst, now):
        if now <= self.cfg.horizon:
            self.log.mode_changes.append((now, inst.station, inst.flow_id, inst.mode.value))

    def _apply(self, inst, actions, now):
        self._set_mode(inst, now)
        for a in actions:
            if a is Action.REQUEST_TXOP:
                st = self.stations[inst.station]
                st.pending.append(inst)
                if not st.grant_pending:
                    st.grant_pending = True
                    self.q.push(now, EventKind.TXOP_GRANT, st)
            elif a is Action.START_DET:
                self.q.push(now + inst.T - 1.0, EventKind.DET_EXPIRED, inst)
            elif a is Action.DRAW_EXP or a is Action.DRAW_EXTRA:
                self.q.push(now + self._draw(inst), EventKind.BACKOFF_EXPIRED, inst)

    def _ctx(self, inst, now, acked=False):
        busy = self.hybrid and carrier_busy(self.t, self.recent, inst.station, now)
        return TransitionContext(acked=acked, carrier_busy=busy, hybrid=self.hybrid)

    def _new_tx(self, sender, start, end, kind, acks=(), data=None, dst=None):
        tx = Transmission(self._tx_counter, sender, start, end, kind, acks, data, dst)
        self._tx_counter += 1
        self.recent.append(tx)
        self.log.transmissions.append(tx)
        return tx

    def _prune(self, now):
        cutoff = now - 1.0 - TIME_TOL
        self.recent = [y for y in self.recent if y.end > cutoff]

    # -- setup ---------------------------------------------------------
    def _setup_scl(self):
        cfg = self.cfg
        outgoing = {f.src for f in cfg.flows}
        for f in sorted(cfg.flows, key=lambda f: f.flow_id):
            inst = FlowInstance(f.flow_id, f.src, f.dst, cfg.lengths[f.src], cfg.stickiness)
            self.instances[f.flow_id] = inst
        for v in sorted({f.dst for f in cfg.flows} - outgoing):
            inst = FlowInstance(None, v, None, cfg.lengths[v], cfg.stickiness)
            self.instances[("r", v)] = inst
        for inst in self.instances.values():
            self._apply(inst, [Action.DRAW_EXP], 0.0)

    def _setup_aloha(self):
        for f in sorted(self.cfg.flows, key=lambda f: f.flow_id):
            rate = self.cfg.rates[f.flow_id]
            self.q.push(aloha_schedule_next(self.rng, rate), EventKind.ALOHA_ATTEMPT, [f, 0])

    # -- event handlers ------------------------------------------------
    def _on_backoff(self, inst, now):
        _, actions = scl_transition(inst, Trigger.BACKOFF_EXPIRED, self._ctx(inst, now))
        self._apply(inst, actions, now)

    def _on_det(self, inst, now):
        st = self.stations[inst.station]
        acked = st.rx_since_txop if inst.flow_id is None else inst.last_packet_acked()
        _, actions = scl_transition(inst, Trigger.DET_EXPIRED, self._ctx(inst, now, acked))
        self._apply(inst, actions, now)

    def _on_grant(self, st, now):
        ready, st.pending = st.pending, []
        st.grant_pending = False
        if st.busy_until > now + TIME_TOL:
            winner, losers = None, ready
        else:
            winner, losers = internal_collision_arbitrate(st.node, ready)
        for inst in losers:
            _, actions = scl_transition(inst, Trigger.TXOP_DENIED, TransitionContext())
            self._apply(inst, actions, now)
        if winner is not None:
            self.begin_transmission(st, winner, now)

    def begin_transmission(self, st, inst, now) -> Transmission | None:
        if st.busy_until > now + TIME_TOL:
            raise SimulationError(f"station {st.node} already transmitting at {now}")
        acks = self.ledger.drain(st.node) if self.mode is AckMode.DELAYED else ()
        data = dst = None
        if inst.flow_id is not None:
            data = (inst.flow_id, inst.data_seq_for_txop(now))
            dst = inst.dst
        else:
            st.rx_since_txop = False
        st.busy_until = now + 1.0
        tx = None
        if acks or data is not None:
            tx = self._new_tx(st.node, now, now + 1.0, "txop", acks, data, dst)
        self.q.push(now + 1.0, EventKind.TX_END, (tx, inst))
        return tx

    def _resolve(self, tx, now):
        self_int = self.cfg.variant == "aloha"
        delivered = []
        for r in tx.addressees(self.flows):
            out = resolve_reception(self.t, self.recent, tx, r, self_int)
            tx.outcomes[r] = out
            if out == DELIVERED:
                delivered.append(r)
        return delivered

    def _on_tx_end(self, payload, now):
        tx, inst = payload
        if tx is not None:
            delivered = self._resolve(tx, now)
            if tx.data is not None and tx.dst in delivered:
                self._deliver_data(tx, now)
            for fid, seq in tx.acks:
                src = self.flows[fid].src
                if src in delivered:
                    self.instances[fid].on_ack(seq)
        if inst is not None:
            _, actions = scl_transition(inst, Trigger.TXOP_END, TransitionContext())
            self._apply(inst, actions, now)

    def _deliver_data(self, tx, now):
        fid, seq = tx.data
        receiver = self.stations[tx.dst]
        receiver.rx_since_txop = True
        if self.cfg.variant == "aloha":
            return
        if self.mode is AckMode.DELAYED:
            self.ledger.add(tx.dst, fid, seq, now)
            return
        if now > self.cfg.horizon:
            return
        if receiver.busy_until > now + TIME_TOL:
            self.log.dropped_acks += 1
            return
        receiver.busy_until = now + self.cfg.ack_duration
        ack = self._new_tx(tx.dst, now, now + self.cfg.ack_duration, "ack", ((fid, seq),))
        self.q.push(ack.end, EventKind.TX_END, (ack, None))

    def _on_aloha(self, payload, now):
        f, seq = payload
        tx = self._new_tx(f.src, now, now + 1.0, "aloha", (), (f.flow_id, seq), f.dst)
        self.q.push(tx.end, EventKind.TX_END, (tx, None))
        payload[1] = seq + 1
        self.q.push(now + aloha_schedule_next(self.rng, self.cfg.rates[f.flow_id]),
                    EventKind.ALOHA_ATTEMPT, payload)

    # -- main loop -----------------------------------------------------
    def run(self) -> RunLog:
        if self.cfg.variant == "aloha":
            self._setup_aloha()
        else:
            self._setup_scl()
        horizon = self.cfg.horizon
        q = self.q
        n = 0
        while True:
            ev = q.pop()
            kind = ev.kind
            if kind is EventKind.SIMULATION_END:
                break
            now = ev.time
            if now > horizon and kind is not EventKind.TX_END:
                continue
            if kind is EventKind.TX_END:
                self._on_tx_end(ev.payload, now)
            elif kind is EventKind.DET_EXPIRED:
                self._on_det(ev.payload, now)
            elif kind is EventKind.BACKOFF_EXPIRED:
                self._on_backoff(ev.payload, now)
            elif kind is EventKind.TXOP_GRANT:
                self._on_grant(ev.payload, now)
            elif kind is EventKind.ALOHA_ATTEMPT:
                self._on_aloha(ev.payload, now)
            n += 1
            if n % 64 == 0:
                self._prune(now)
        return self.log


def run(config: SimConfig, seed: int, draws: dict | None = None) -> RunLog:
    """Simulate ``config`` to its horizon; deterministic in ``(config, seed, draws)``."""
    return Simulator(config, seed, draws).run()
