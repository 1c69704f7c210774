"""Scenario files, seeded batches, schedule-length sweeps and comparisons."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import jsonschema
import numpy as np

from . import metrics
from .engine import DELIVERED, SimConfig, Transmission, resolve_reception, run
from .protocols import aloha_pf_rates
from .schedule import ScheduleParams, compute_schedule, uniform_schedule
from .topology import Flow, Topology, build_chain, build_ring, canonical_flows, validate

RUNS_SCHEMA_VERSION = "# sclaloha-runs v1"
SWEEP_SCHEMA_VERSION = "# sclaloha-sweep v1"
COMPARE_SCHEMA_VERSION = "# sclaloha-compare v1"
VARIANTS = ("scl", "sticky", "hybrid", "aloha")


class ScenarioError(ValueError):
    pass


SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["topology"],
    "additionalProperties": False,
    "properties": {
        "topology": {
            "type": "object",
            "oneOf": [
                {"required": ["builtin", "n"]},
                {"required": ["nodes", "edges"]},
            ],
            "properties": {
                "builtin": {"enum": ["chain", "ring"]},
                "n": {"type": "integer", "minimum": 1},
                "nodes": {"type": "integer", "minimum": 1},
                "edges": {"type": "array",
                          "items": {"type": "array", "items": {"type": "integer"},
                                    "minItems": 2, "maxItems": 2}},
            },
            "additionalProperties": False,
        },
        "flows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "src", "dst"],
                "properties": {"id": {"type": "integer"}, "src": {"type": "integer"},
                               "dst": {"type": "integer"}},
                "additionalProperties": False,
            },
        },
        "protocol": {
            "type": "object",
            "properties": {
                "variant": {"enum": list(VARIANTS)},
                "epsilon": {"type": "number"},
                "stickiness": {"type": "integer", "minimum": 1},
                "aloha_rates": {"oneOf": [
                    {"const": "optimize"},
                    {"type": "object", "additionalProperties": {"type": "number"}},
                ]},
                "backoff_mean_is_T": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "T": {"oneOf": [{"const": "auto"}, {"type": "number"}]},
        "ack": {
            "type": "object",
            "properties": {"mode": {"enum": ["delayed", "immediate"]},
                           "duration": {"type": "number"}},
            "additionalProperties": False,
        },
        "horizon": {"type": "number"},
        "seeds": {"oneOf": [{"type": "integer", "minimum": 1},
                            {"type": "array", "items": {"type": "integer"}, "minItems": 1}]},
        "master_seed": {"type": "integer"},
    },
}


@dataclass
class Scenario:
    topology: Topology
    flows: list
    variant: str = "scl"
    epsilon: float = 0.05
    stickiness: int = 1
    aloha_rates: object = "optimize"
    T: object = "auto"
    ack_mode: str = "delayed"
    ack_duration: float = 0.2
    horizon: float = 500.0
    seeds: list = field(default_factory=lambda: [0])
    mean_is_T: bool = True
    schedule: ScheduleParams | None = None

    def resolve_schedule(self, T=None) -> ScheduleParams:
        T = self.T if T is None else T
        if T == "auto":
            return compute_schedule(self.topology, self.flows, self.epsilon)
        return uniform_schedule(self.topology, self.flows, float(T))

    def rates(self) -> dict:
        if self.aloha_rates == "optimize":
            return aloha_pf_rates(self.topology, self.flows)
        return {int(k): float(v) for k, v in self.aloha_rates.items()}

    def config(self, variant=None, T=None, horizon=None) -> SimConfig:
        variant = variant or self.variant
        sched = self.resolve_schedule(T)
        s = self.stickiness
        if variant == "sticky" and s < 2:
            s = 2
        return SimConfig(
            topology=self.topology,
            flows=self.flows,
            lengths=sched.lengths,
            variant=variant,
            stickiness=s,
            ack_mode=self.ack_mode,
            ack_duration=self.ack_duration,
            horizon=self.horizon if horizon is None else horizon,
            rates=self.rates() if variant == "aloha" else None,
            mean_is_T=self.mean_is_T,
        )


def derive_seeds(master_seed: int, count: int) -> list[int]:
    """Counter-based split: seed ``i`` depends only on (master, i)."""
    return [int(np.random.SeedSequence(master_seed, spawn_key=(i,)).generate_state(1)[0])
            for i in range(count)]


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse_scenario(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"<root>: invalid JSON ({exc})") from exc
    errors = sorted(jsonschema.Draft202012Validator(SCENARIO_SCHEMA).iter_errors(data),
                    key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError("; ".join(f"{_path(e)}: {e.message}" for e in errors))

    topo = data["topology"]
    try:
        if "builtin" in topo:
            build = build_chain if topo["builtin"] == "chain" else build_ring
            t = build(topo["n"])
        else:
            t = Topology.from_edges(topo["nodes"], topo["edges"])
    except ValueError as exc:
        raise ScenarioError(f"topology: {exc}") from exc

    if "flows" in data:
        flows = [Flow(f["id"], f["src"], f["dst"]) for f in data["flows"]]
    elif "builtin" in topo:
        flows = canonical_flows(topo["builtin"], topo["n"])
    else:
        raise ScenarioError("flows: required for an explicit topology")
    problems = validate(t, flows)
    if problems:
        raise ScenarioError("; ".join(f"flows: {p}" for p in problems))

    proto = data.get("protocol", {})
    eps = proto.get("epsilon", 0.05)
    T = data.get("T", "auto")
    if T == "auto" and eps <= 0:
        raise ScenarioError("protocol/epsilon: epsilon must be strictly positive")
    if T != "auto" and T < 1:
        raise ScenarioError("T: schedule length must be at least one transmission opportunity")
    ack = data.get("ack", {})
    ack_duration = ack.get("duration", 0.2)
    if ack.get("mode") == "immediate" and not 0 < ack_duration < 1:
        raise ScenarioError("ack/duration: must lie in (0, 1)")
    horizon = data.get("horizon", 500.0)
    rates = proto.get("aloha_rates", "optimize")
    if isinstance(rates, dict):
        ids = {f.flow_id for f in flows}
        for k, v in rates.items():
            if not k.lstrip("-").isdigit() or int(k) not in ids:
                raise ScenarioError(f"protocol/aloha_rates/{k}: unknown flow id")
            if v <= 0:
                raise ScenarioError(f"protocol/aloha_rates/{k}: rate must be positive")
        if set(int(k) for k in rates) != ids:
            raise ScenarioError("protocol/aloha_rates: a rate is required for every flow")
    seeds = data.get("seeds", 1)
    if isinstance(seeds, int):
        seeds = derive_seeds(data.get("master_seed", 0), seeds)

    sc = Scenario(
        topology=t, flows=flows,
        variant=proto.get("variant", "scl"), epsilon=eps,
        stickiness=proto.get("stickiness", 1), aloha_rates=rates, T=T,
        ack_mode=ack.get("mode", "delayed"), ack_duration=ack_duration,
        horizon=float(horizon), seeds=list(seeds),
        mean_is_T=proto.get("backoff_mean_is_T", True),
    )
    try:
        sc.schedule = sc.resolve_schedule()
    except ValueError as exc:
        raise ScenarioError(f"T: {exc}") from exc
    if sc.horizon < 2 * sc.schedule.global_period:
        raise ScenarioError("horizon: must be at least two global periods")
    return sc


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


# -- batches -----------------------------------------------------------

def aloha_stats(log, node_count: int) -> metrics.RunStats:
    theta = metrics.measured_throughput(log, (0.0, log.horizon), node_count)
    return metrics.RunStats(None, metrics.aggregate(theta), math.nan, False, theta.tolist())


def _one(args):
    cfg, seed = args
    log = run(cfg, seed)
    n = cfg.topology.node_count
    if cfg.variant == "aloha":
        return seed, aloha_stats(log, n)
    stats = metrics.run_stats(log, n)
    if stats.converged and metrics.post_absorption_collisions(log, stats.absorption_time):
        raise RuntimeError(f"seed {seed}: collisions after absorption")
    return seed, stats


def run_seeds(cfg: SimConfig, seeds, workers: int = 1) -> list:
    """``(seed, RunStats)`` pairs in seed-list order."""
    jobs = [(cfg, s) for s in seeds]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_one, jobs, chunksize=16))
    return [_one(j) for j in jobs]


@dataclass
class BatchResult:
    T: float
    protocol: str
    horizon: float
    results: list

    @property
    def converged(self) -> int:
        return sum(1 for _, st in self.results if st.converged)

    @property
    def censored(self) -> int:
        return len(self.results) - self.converged

    def absorption_samples(self) -> list:
        # non-converged runs are censored at the horizon
        return [st.absorption_time if st.converged else self.horizon for _, st in self.results]

    def summary(self) -> dict:
        row = {"T": self.T, "protocol": self.protocol, "runs": len(self.results),
               "converged": self.converged, "censored": self.censored}
        if self.protocol != "aloha":
            row.update({f"abs_{k}": v for k, v in
                        metrics.percentiles(self.absorption_samples()).items()})
        return row

    def rows(self) -> list:
        out = []
        for seed, st in sorted(self.results, key=lambda r: r[0]):
            row = {"seed": seed, "T": self.T, "protocol": self.protocol}
            row.update(st.to_row())
            out.append(row)
        return out


def run_batch(scenario: Scenario, seeds=None, *, T=None, variant=None, workers: int = 1) -> BatchResult:
    seeds = scenario.seeds if seeds is None else seeds
    cfg = scenario.config(variant=variant, T=T)
    return BatchResult(cfg.global_period, cfg.variant, cfg.horizon, run_seeds(cfg, seeds, workers))


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def write_csv(rows: list, header: str) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    if rows:
        fields = list(rows[0].keys())
        for r in rows[1:]:
            for k in r:
                if k not in fields:
                    fields.append(k)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in fields})
    return buf.getvalue()


def batch_csv(batch: BatchResult) -> str:
    return write_csv(batch.rows(), RUNS_SCHEMA_VERSION)


# -- sweeps ------------------------------------------------------------

def t_values(start: float, stop: float, step: float) -> list:
    if step <= 0:
        raise ScenarioError("step must be positive")
    if start <= 0:
        raise ScenarioError("schedule lengths must be positive")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 10) for i in range(n + 1)]


def sweep_row(batch: BatchResult) -> dict:
    row = batch.summary()
    conv = [st for _, st in batch.results if st.converged]
    steady = [st.steady_AT for st in conv if not math.isnan(st.steady_AT)]
    row["steady_AT"] = float(np.median(steady)) if steady else math.nan
    trans = [st.transient_AT for st in conv if not math.isnan(st.transient_AT)]
    if trans:
        row.update({f"trans_{k}": v for k, v in metrics.percentiles(trans).items()})
    return row


def sweep(scenario: Scenario, Ts, runs: int | None = None, *, variant=None,
          workers: int = 1, master_seed: int = 0) -> list:
    seeds = scenario.seeds if runs is None else derive_seeds(master_seed, runs)
    rows = [sweep_row(run_batch(scenario, seeds, T=T, variant=variant, workers=workers))
            for T in Ts]
    return sorted(rows, key=lambda r: r["T"])


# -- delayed ACK fragmentation -----------------------------------------

def _exchange(ack_duration: float, data_period: float, immediate: bool, periods=range(-2, 3)):
    """D and E (nodes 0, 1) exchanging one data frame each per period.

    D sends at the period start; E sends midway between the end of its
    immediate ACK and the next D frame, so both ACK modes share the same
    data timing.
    """
    txs = []
    e_offset = (1.0 + ack_duration + data_period) / 2.0
    for k in periods:
        base = k * data_period
        txs.append(Transmission(len(txs), 0, base, base + 1.0, data=(0, k), dst=1))
        txs.append(Transmission(len(txs), 1, base + e_offset, base + e_offset + 1.0,
                                data=(1, k), dst=0))
        if immediate:
            txs.append(Transmission(len(txs), 1, base + 1.0, base + 1.0 + ack_duration,
                                    kind="ack", acks=((0, k),)))
            end = base + e_offset + 1.0
            txs.append(Transmission(len(txs), 0, end, end + ack_duration,
                                    kind="ack", acks=((1, k),)))
    return txs


def fragmentation_demo(ack_duration: float = 0.2, data_period: float = 4.0,
                       resolution: int = 4000, silent: bool = False) -> dict:
    """Fraction of start instants at which G (node 3) can deliver to F (node 2).

    Four stations D-E-F-G in a row; D and E exchange fixed-period frames
    with either immediate or delayed ACKs.
    """
    if not 0 < ack_duration < 1:
        raise ValueError("ack duration must lie in (0, 1)")
    if data_period < 3.0 + 3.0 * ack_duration:
        raise ValueError("data period too short for the exchange")
    t = build_chain(4)
    out = {"ack_duration": ack_duration, "data_period": data_period, "resolution": resolution}
    for name, immediate in (("immediate", True), ("delayed", False)):
        others = [] if silent else _exchange(ack_duration, data_period, immediate)
        ok = 0
        for j in range(resolution):
            start = (j + 0.5) * data_period / resolution
            probe = Transmission(-1, 3, start, start + 1.0, data=(2, 0), dst=2)
            if resolve_reception(t, others, probe, 2) == DELIVERED:
                ok += 1
        out[f"{name}_fraction"] = ok / resolution
    return out


def exact_window_fraction(busy, period: float, length: float = 1.0) -> float:
    """Measure of start instants in one period whose ``length`` interval avoids ``busy``.

    ``busy`` is a list of periodic ``(start, end)`` intervals in ``[0, period)``.
    """
    blocked = []
    for s, e in busy:
        for k in (-1, 0, 1):
            lo, hi = s + k * period - length, e + k * period
            blocked.append((max(lo, 0.0), min(hi, period)))
    blocked = sorted(b for b in blocked if b[1] > b[0])
    total, cur_lo, cur_hi = 0.0, None, None
    for lo, hi in blocked:
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return (period - total) / period


# -- protocol comparison ----------------------------------------------

def compare_protocols(scenario: Scenario, protocols=VARIANTS, seeds=None, *,
                      T=None, workers: int = 1, aloha_horizon: float | None = None) -> list:
    """Per-protocol steady-state throughput, fairness and absorption summary."""
    seeds = scenario.seeds if seeds is None else seeds
    n = scenario.topology.node_count
    rows = []
    for proto in protocols:
        horizon = aloha_horizon if proto == "aloha" else None
        cfg = scenario.config(variant=proto, T=T, horizon=horizon)
        results = run_seeds(cfg, seeds, workers)
        batch = BatchResult(cfg.global_period, proto, cfg.horizon, results)
        used = [st for _, st in results
                if proto == "aloha" or (st.converged and not math.isnan(st.steady_AT))]
        theta = (np.mean([st.theta for st in used], axis=0) if used
                 else np.full(n, math.nan))
        active = sorted({f.src for f in scenario.flows})
        th = theta[active]
        row = {"protocol": proto, "T": cfg.global_period if proto != "aloha" else "",
               "runs": len(results), "converged": batch.converged}
        for i in range(n):
            row[f"theta_{i}"] = float(theta[i])
        ok = used and np.all(np.isfinite(th))
        row["JF"] = metrics.jain(th) if ok and np.any(th > 0) else math.nan
        row["AT"] = metrics.aggregate(th) if ok else math.nan
        row["PF"] = metrics.proportional_fairness(th) if ok and np.all(th > 0) else math.nan
        if proto != "aloha":
            row.update({f"abs_{k}": v for k, v in
                        metrics.percentiles(batch.absorption_samples()).items()})
        rows.append(row)
    return rows


def scenario_with(scenario: Scenario, **changes) -> Scenario:
    sc = replace(scenario, **changes)
    sc.schedule = sc.resolve_schedule()
    return sc
