"""Schedule lengths, the global period and steady-state throughput predictions.

Times are in transmission-opportunity units (one TXOP lasts 1.0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .topology import Flow, Topology, flow_degrees, neighborhood_flow_count, validate


class ScheduleError(ValueError):
    pass


@dataclass
class ScheduleParams:
    epsilon: float | None
    exponents: dict = field(default_factory=dict)
    lengths: dict = field(default_factory=dict)
    global_period: float = 0.0

    def length(self, station: int) -> float:
        return self.lengths[station]

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "exponents": {str(k): v for k, v in sorted(self.exponents.items())},
            "lengths": {str(k): v for k, v in sorted(self.lengths.items())},
            "global_period": self.global_period,
        }


def schedule_exponent(flow_count: int) -> int:
    """Smallest n with 2**n >= flow_count."""
    if flow_count < 1:
        raise ScheduleError(f"flow count must be >= 1, got {flow_count}")
    # integer form avoids log2 rounding at exact powers of two
    return (int(flow_count) - 1).bit_length()


def schedule_length(n: int, epsilon: float) -> float:
    if epsilon <= 0:
        raise ScheduleError("epsilon must be strictly positive")
    if n < 0:
        raise ScheduleError("exponent must be non-negative")
    # scaling by a power of two is exact in binary floating point, so lengths
    # computed by different stations divide each other exactly
    return math.ldexp(1.0 + epsilon, n)


def global_period(params: ScheduleParams | dict) -> float:
    lengths = params.lengths if isinstance(params, ScheduleParams) else params
    if not lengths:
        raise ScheduleError("no schedule lengths")
    return max(lengths.values())


def compute_schedule(t: Topology, flows: list[Flow], epsilon: float) -> ScheduleParams:
    """Self-configuration from the (known) topology and flow set.

    Every station that sees at least one flow in its neighbourhood gets a
    length; stations that see none do not take part in the schedule.
    """
    if epsilon <= 0:
        raise ScheduleError("epsilon must be strictly positive")
    problems = validate(t, flows)
    if problems:
        raise ScheduleError("; ".join(problems))
    _, out = flow_degrees(t, flows)
    params = ScheduleParams(epsilon=epsilon)
    for i in range(t.node_count):
        count = neighborhood_flow_count(t, flows, i)
        if count == 0:
            if out[i]:
                raise ScheduleError(f"station {i} has an outgoing flow but counts none nearby")
            continue
        n = schedule_exponent(count)
        params.exponents[i] = n
        params.lengths[i] = schedule_length(n, epsilon)
    if params.lengths:
        params.global_period = global_period(params)
    return params


def uniform_schedule(t: Topology, flows: list[Flow], length: float) -> ScheduleParams:
    """Every participating station uses the same explicit length (sweeps)."""
    if length < 1.0:
        raise ScheduleError("schedule length must cover one transmission opportunity")
    params = ScheduleParams(epsilon=None)
    for i in range(t.node_count):
        if neighborhood_flow_count(t, flows, i) > 0:
            params.lengths[i] = float(length)
    params.global_period = float(length) if params.lengths else 0.0
    return params


def predicted_throughput(outgoing_flows: int, T: float) -> float:
    if T <= 0:
        raise ScheduleError("schedule length must be positive")
    return outgoing_flows / T
