"""Command-line entry point: ``sclaloha <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments as ex
from . import metrics
from .engine import run


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(path: str) -> ex.Scenario:
    return ex.load_scenario(path)


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    print(json.dumps({"ok": True, "schedule": sc.schedule.to_dict(),
                      "flows": len(sc.flows), "seeds": len(sc.seeds)}, indent=2))
    return 0


def cmd_run(args) -> int:
    sc = _load(args.scenario)
    cfg = sc.config()
    log = run(cfg, args.seed)
    _write(log.to_jsonl(include_modes=args.modes), args.out)
    if cfg.variant != "aloha":
        st = metrics.run_stats(log, sc.topology.node_count)
        print(json.dumps(st.to_row()), file=sys.stderr)
    return 0


def cmd_batch(args) -> int:
    sc = _load(args.scenario)
    seeds = ex.derive_seeds(args.master_seed, args.seeds) if args.seeds else sc.seeds
    batch = ex.run_batch(sc, seeds, workers=args.workers)
    _write(ex.batch_csv(batch), args.out)
    print(json.dumps(batch.summary()), file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    sc = _load(args.scenario)
    Ts = ex.t_values(args.t_start, args.t_stop, args.t_step)
    rows = ex.sweep(sc, Ts, args.runs, variant=args.protocol, workers=args.workers,
                    master_seed=args.master_seed)
    _write(ex.write_csv(rows, ex.SWEEP_SCHEMA_VERSION), args.out)
    return 0


def cmd_frag(args) -> int:
    res = ex.fragmentation_demo(args.ack_duration, args.data_period, args.resolution)
    _write(json.dumps(res, indent=2) + "\n", args.out)
    return 0


def cmd_compare(args) -> int:
    sc = _load(args.scenario)
    protos = [p.strip() for p in args.protocols.split(",") if p.strip()]
    bad = [p for p in protos if p not in ex.VARIANTS]
    if bad:
        raise ex.ScenarioError(f"unknown protocol(s): {', '.join(bad)}")
    rows = ex.compare_protocols(sc, protos, workers=args.workers,
                                aloha_horizon=args.aloha_horizon)
    _write(ex.write_csv(rows, ex.COMPARE_SCHEMA_VERSION), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sclaloha", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a scenario and print its schedule")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("run", help="simulate one seed and emit the JSON-lines log")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--modes", action="store_true", help="include mode-change records")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("batch", help="run many seeds, one CSV row per run")
    s.add_argument("scenario")
    s.add_argument("--seeds", type=int, help="number of derived seeds (default: scenario)")
    s.add_argument("--master-seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_batch)

    s = sub.add_parser("sweep", help="sweep the schedule length")
    s.add_argument("scenario")
    s.add_argument("--t-start", type=float, required=True)
    s.add_argument("--t-stop", type=float, required=True)
    s.add_argument("--t-step", type=float, default=0.25)
    s.add_argument("--runs", type=int, default=1000)
    s.add_argument("--protocol", choices=[v for v in ex.VARIANTS if v != "aloha"])
    s.add_argument("--master-seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("frag-demo", help="collision-free windows, immediate vs delayed ACK")
    s.add_argument("--ack-duration", type=float, default=0.2)
    s.add_argument("--data-period", type=float, default=4.0)
    s.add_argument("--resolution", type=int, default=4000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_frag)

    s = sub.add_parser("compare", help="compare protocol variants on one scenario")
    s.add_argument("scenario")
    s.add_argument("--protocols", default="scl,sticky,hybrid,aloha")
    s.add_argument("--aloha-horizon", type=float, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ex.ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
