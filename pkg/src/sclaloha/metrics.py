"""Throughput and fairness metrics, absorption time and percentile summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import COLLIDED, DELIVERED, TIME_TOL, RunLog

PERCENTILES = (5, 25, 50, 75, 95)
RANDOM_MODES = ("ExpBackoff", "ExtraExpBackoff")


class MetricError(ValueError):
    pass


def jain(theta) -> float:
    x = np.asarray(theta, dtype=float)
    if x.size == 0 or not np.any(x > 0):
        raise MetricError("Jain index undefined for an all-zero vector")
    return float(x.sum() ** 2 / (x.size * np.square(x).sum()))


def aggregate(theta) -> float:
    return float(np.sum(np.asarray(theta, dtype=float)))


def proportional_fairness(theta) -> float:
    x = np.asarray(theta, dtype=float)
    if np.any(x <= 0):
        raise MetricError("proportional fairness undefined when a station is starved")
    return float(np.log(x).sum())


def measured_throughput(log: RunLog, window, node_count: int) -> np.ndarray:
    """Delivered data TXOPs per unit time for each station over ``[t1, t2)``."""
    t1, t2 = window
    if not t2 > t1:
        raise MetricError("empty measurement window")
    counts = np.zeros(node_count)
    for tx in log.transmissions:
        if tx.data is None or not t1 <= tx.start < t2:
            continue
        if tx.outcomes.get(tx.dst) == DELIVERED:
            counts[tx.sender] += 1
    return counts / (t2 - t1)


def bad_event_times(log: RunLog):
    """Times at which the run is visibly not in collision-free deterministic operation."""
    times = [tx.end for tx in log.transmissions
             if tx.start <= log.horizon and COLLIDED in tx.outcomes.values()]
    times += [t for t, _, _, m in log.mode_changes if m in RANDOM_MODES and t <= log.horizon]
    return times


def absorption_time(log: RunLog, global_period: float, horizon: float | None = None):
    """Earliest time after which the run stays collision-free and deterministic.

    Returns the time of the last collision (its end) or random-mode entry,
    0.0 if there was none after start-up, and None if the run is still in
    a random backoff at the horizon or the collision-free suffix is shorter
    than two global periods.
    """
    horizon = log.horizon if horizon is None else horizon
    if horizon < 2 * global_period:
        raise MetricError("horizon shorter than the two-period confirmation window")
    last_mode = {}
    for t, station, fid, m in log.mode_changes:
        if t <= horizon:
            last_mode[(station, fid)] = m
    if any(m in RANDOM_MODES for m in last_mode.values()):
        return None
    times = [tx.end for tx in log.transmissions
             if tx.start < horizon and COLLIDED in tx.outcomes.values()]
    times += [t for t, _, _, m in log.mode_changes if m in RANDOM_MODES and t <= horizon]
    t_star = max(times, default=0.0)
    if horizon - t_star < 2 * global_period - TIME_TOL:
        return None
    return t_star


def percentiles(samples) -> dict:
    """5/25/50/75/95 percentiles, linear interpolation between closest ranks."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise MetricError("no samples")
    vals = np.percentile(x, PERCENTILES, method="linear")
    return {f"p{p}": float(v) for p, v in zip(PERCENTILES, vals)}


@dataclass
class RunStats:
    absorption_time: float | None
    steady_AT: float
    transient_AT: float
    converged: bool
    theta: list
    steady_window: tuple | None = None

    def to_row(self) -> dict:
        row = {
            "absorption_time": "" if self.absorption_time is None else self.absorption_time,
            "steady_AT": self.steady_AT,
            "transient_AT": self.transient_AT,
            "converged": int(self.converged),
        }
        for i, v in enumerate(self.theta):
            row[f"theta_{i}"] = v
        return row


def steady_window(t_star: float, period: float, horizon: float):
    """Largest whole number of global periods after ``t_star`` that fits the horizon."""
    k = math.floor((horizon - t_star) / period + 1e-9)
    if k < 1:
        return None
    return (t_star, t_star + k * period)


def deterministic_since(log: RunLog, t_star: float) -> float:
    """First instant at or after ``t_star`` with every instance out of random backoff.

    An instance that entered a random backoff at ``t_star`` is still waiting
    out its draw, so the periodic pattern only starts once it leaves.
    """
    current, since = {}, t_star
    for t, station, fid, m in log.mode_changes:
        key = (station, fid)
        if current.get(key) in RANDOM_MODES and m not in RANDOM_MODES and t >= t_star:
            since = max(since, t)
        current[key] = m
    return since


def run_stats(log: RunLog, node_count: int) -> RunStats:
    """Summarise a scl-family run: absorption, steady and transient throughput."""
    period = log.global_period
    t_star = absorption_time(log, period, log.horizon)
    if t_star is None:
        return RunStats(None, math.nan, math.nan, False, [math.nan] * node_count)
    win = steady_window(deterministic_since(log, t_star), period, log.horizon)
    if win is None:
        return RunStats(t_star, math.nan, _transient(log, t_star, node_count), True,
                        [math.nan] * node_count)
    # timers accumulate by repeated addition, so shift both edges back a hair:
    # a start exactly at the window's right edge must fall outside it
    theta = measured_throughput(log, (win[0] - TIME_TOL, win[1] - TIME_TOL), node_count)
    return RunStats(t_star, aggregate(theta), _transient(log, t_star, node_count), True,
                    theta.tolist(), win)


def _transient(log, t_star, node_count):
    if t_star <= 0:
        return math.nan
    return aggregate(measured_throughput(log, (0.0, t_star), node_count))


def post_absorption_collisions(log: RunLog, t_star: float) -> int:
    return sum(1 for tx in log.transmissions
               if tx.start >= t_star and COLLIDED in tx.outcomes.values()
               and tx.start <= log.horizon)
