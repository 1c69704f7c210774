"""Scripted two-station exchange with hand-derived expected output."""
import json
from pathlib import Path

from sclaloha.engine import SimConfig, run
from sclaloha.topology import Flow, build_chain

GOLDEN = Path(__file__).parent / "data" / "golden_pair_trace.jsonl"
DRAWS = {0: [0.5, 1.0, 2.5], 1: [0.8, 5.2]}

# (time, station, mode) in the order the two stations should step through them
EXPECTED_MODES = [
    (0.0, 0, "ExpBackoff"), (0.0, 1, "ExpBackoff"),
    (0.5, 0, "InTxop"), (0.8, 1, "InTxop"),
    (1.5, 0, "DetBackoff"), (1.8, 1, "DetBackoff"),
    (4.5, 0, "ExtraExpBackoff"), (4.8, 1, "ExtraExpBackoff"),
    (5.5, 0, "InTxop"), (6.5, 0, "DetBackoff"),
    (9.5, 0, "ExtraExpBackoff"),
    (10.0, 1, "InTxop"), (11.0, 1, "DetBackoff"),
    (12.0, 0, "InTxop"), (13.0, 0, "DetBackoff"),
]


def golden_log():
    cfg = SimConfig(build_chain(2), [Flow(0, 0, 1), Flow(1, 1, 0)], {0: 4.0, 1: 4.0}, horizon=20)
    return run(cfg, 0, draws=DRAWS)


def trace_problems():
    log = golden_log()
    problems = []
    want = [json.loads(line) for line in GOLDEN.read_text().splitlines() if line.strip()]
    got = [json.loads(json.dumps(x.to_record())) for x in log.transmissions]
    if got != want:
        problems.append(f"transmissions differ: got {got}")
    modes = [(t, s, m) for t, s, _, m in log.mode_changes][: len(EXPECTED_MODES)]
    if modes != EXPECTED_MODES:
        problems.append(f"mode sequence differs: got {modes}")
    return problems
