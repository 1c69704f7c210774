"""Per-flow backoff state machines and the Aloha baseline.

The scl variants share one transition table. A flow instance moves through

    ExpBackoff -> InTxop -> DetBackoff -> (InTxop | ExtraExpBackoff -> InTxop)

and only leaves the deterministic loop when its last data unit is still
unacknowledged after ``stickiness`` consecutive deterministic backoffs.
"""
from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from .topology import Flow, Topology, reception_conflict_set

SEQ_TOL = 1e-9


class ProtocolError(RuntimeError):
    """Inapplicable event for the current mode (a simulator bug)."""


class Mode(str, Enum):
    EXP_BACKOFF = "ExpBackoff"
    IN_TXOP = "InTxop"
    DET_BACKOFF = "DetBackoff"
    EXTRA_EXP_BACKOFF = "ExtraExpBackoff"

    @property
    def is_random(self) -> bool:
        return self in (Mode.EXP_BACKOFF, Mode.EXTRA_EXP_BACKOFF)


class Trigger(str, Enum):
    BACKOFF_EXPIRED = "backoff_expired"
    TXOP_END = "txop_end"
    DET_EXPIRED = "det_expired"
    TXOP_DENIED = "txop_denied"


class Action(str, Enum):
    REQUEST_TXOP = "request_txop"
    START_DET = "start_det"
    DRAW_EXP = "draw_exp"
    DRAW_EXTRA = "draw_extra"


@dataclass
class TransitionContext:
    acked: bool = False
    carrier_busy: bool = False
    hybrid: bool = False


@dataclass
class FlowInstance:
    """Backoff instance for one outgoing flow.

    ``flow_id`` is None for a responder instance: a station with incoming
    but no outgoing flows runs one so that it gets TXOPs to carry ACKs.
    """

    flow_id: int | None
    station: int
    dst: int | None
    T: float
    stickiness: int = 1
    mode: Mode = Mode.EXP_BACKOFF
    consecutive_missed: int = 0
    seq: int = 0
    seq_first_tx: float | None = None
    seq_acked: bool = False
    last_tx_seq: int | None = None
    outstanding: list = field(default_factory=list)

    def __post_init__(self):
        if self.stickiness < 1:
            raise ValueError("stickiness must be >= 1")
        if self.T <= 0:
            raise ValueError("schedule length must be positive")

    @property
    def ack_timeout(self) -> float:
        return self.stickiness * self.T

    @property
    def sort_key(self):
        return (self.flow_id is None, self.flow_id if self.flow_id is not None else self.station)

    def data_seq_for_txop(self, now: float) -> int:
        """Head-of-line sequence number to send in a TXOP starting at ``now``.

        The same number is resent until acknowledged or older than the
        ACK timeout, at which point it is abandoned.
        """
        if self.seq_first_tx is not None:
            expired = now - self.seq_first_tx >= self.ack_timeout - SEQ_TOL
            if self.seq_acked or expired:
                if not self.seq_acked and self.seq in self.outstanding:
                    self.outstanding.remove(self.seq)
                self.seq += 1
                self.seq_acked = False
                self.seq_first_tx = None
        if self.seq_first_tx is None:
            self.seq_first_tx = now
            self.outstanding.append(self.seq)
        self.last_tx_seq = self.seq
        return self.seq

    def on_ack(self, seq: int) -> bool:
        """Record a received ACK; returns True if it matched an outstanding unit."""
        if seq in self.outstanding:
            self.outstanding.remove(seq)
            if seq == self.seq:
                self.seq_acked = True
            return True
        return False

    def last_packet_acked(self) -> bool:
        return self.last_tx_seq is not None and self.last_tx_seq == self.seq and self.seq_acked


def _request(ctx: TransitionContext):
    if ctx.hybrid and ctx.carrier_busy:
        return Mode.EXP_BACKOFF, [Action.DRAW_EXP]
    return Mode.IN_TXOP, [Action.REQUEST_TXOP]


def scl_transition(inst: FlowInstance, event: Trigger, ctx: TransitionContext):
    """Apply one protocol event to ``inst``; returns ``(new_mode, actions)``.

    Mutates ``inst.mode`` and the missed-ACK counter.
    """
    mode = inst.mode
    if event is Trigger.BACKOFF_EXPIRED and mode.is_random:
        new, actions = _request(ctx)
    elif event is Trigger.TXOP_END and mode is Mode.IN_TXOP:
        new, actions = Mode.DET_BACKOFF, [Action.START_DET]
    elif event is Trigger.TXOP_DENIED and mode is Mode.IN_TXOP:
        new, actions = Mode.EXP_BACKOFF, [Action.DRAW_EXP]
    elif event is Trigger.DET_EXPIRED and mode is Mode.DET_BACKOFF:
        if ctx.acked:
            inst.consecutive_missed = 0
            new, actions = _request(ctx)
        elif inst.consecutive_missed + 1 < inst.stickiness:
            inst.consecutive_missed += 1
            new, actions = _request(ctx)
        else:
            inst.consecutive_missed = 0
            new, actions = Mode.EXTRA_EXP_BACKOFF, [Action.DRAW_EXTRA]
    else:
        raise ProtocolError(f"event {event.value} not applicable in mode {mode.value}")
    inst.mode = new
    return new, actions


def draw_exp_backoff(rng: random.Random, T: float, mean_is_T: bool = True) -> float:
    """Exponential backoff whose mean is the schedule length.

    ``mean_is_T=False`` selects the alternative reading (rate equal to T).
    """
    if T <= 0:
        raise ValueError("schedule length must be positive")
    return rng.expovariate(1.0 / T if mean_is_T else T)


def internal_collision_arbitrate(station: int, ready: list):
    """Lowest flow id wins; the others must redraw an exponential backoff."""
    if not ready:
        raise ProtocolError(f"station {station}: nothing to arbitrate")
    ordered = sorted(ready, key=lambda inst: inst.sort_key)
    return ordered[0], ordered[1:]


@dataclass
class AlohaInstance:
    flow_id: int
    station: int
    dst: int
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("aloha rate must be positive")


def aloha_schedule_next(rng: random.Random, rate: float) -> float:
    if rate <= 0:
        raise ValueError("aloha rate must be positive")
    return rng.expovariate(rate)


def _station_rates(t: Topology, flows, rates) -> np.ndarray:
    G = np.zeros(t.node_count)
    for f in flows:
        G[f.src] += rates[f.flow_id]
    return G


def analytic_aloha_throughput(t: Topology, flows: list[Flow], rates: dict) -> dict:
    """Pure-Aloha per-flow throughput with a 2-unit vulnerability window.

    Every station in the receiver's conflict set contributes, the sender's
    own attempt process included.
    """
    if any(rates[f.flow_id] <= 0 for f in flows):
        raise ValueError("aloha rates must be positive")
    G = _station_rates(t, flows, rates)
    out = {}
    for f in flows:
        load = sum(G[k] for k in reception_conflict_set(t, f.dst) if k != f.src) + G[f.src]
        out[f.flow_id] = rates[f.flow_id] * math.exp(-2.0 * load)
    return out


def _pf(t, flows, rates) -> float:
    return sum(math.log(v) for v in analytic_aloha_throughput(t, flows, rates).values())


def aloha_pf_rates(t: Topology, flows: list[Flow], *, start: float = 0.1,
                   tol: float = 1e-9, max_sweeps: int = 500) -> dict:
    """Per-flow attempt rates maximising proportional fairness.

    Coordinate ascent; each coordinate is bracketed multiplicatively and
    refined with a bounded scalar search in log-rate.
    """
    rates = {f.flow_id: start for f in flows}
    best = _pf(t, flows, rates)
    for _ in range(max_sweeps):
        prev = best
        for f in flows:
            fid = f.flow_id

            def neg(logr, fid=fid):
                trial = dict(rates)
                trial[fid] = math.exp(logr)
                return -_pf(t, flows, trial)

            x0 = math.log(rates[fid])
            lo, hi = x0 - math.log(2), x0 + math.log(2)
            while neg(lo) < neg(x0):
                lo -= math.log(2)
            while neg(hi) < neg(x0):
                hi += math.log(2)
            res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            if -res.fun >= best:
                rates[fid] = math.exp(res.x)
                best = -res.fun
        if best - prev < tol:
            return rates
    warnings.warn("aloha_pf_rates: iteration cap reached, returning best rates so far")
    return rates
