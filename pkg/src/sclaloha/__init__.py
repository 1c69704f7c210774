"""Self-configuring learning Aloha on multi-hop wireless graphs.

Discrete-event simulator for scl-Aloha (deterministic backoff after an
acknowledged success, exponential backoff otherwise), its sticky and hybrid
CSMA variants and a pure-Aloha baseline, plus the metrics used to study them.
"""
from .engine import RunLog, SimConfig, run
from .schedule import compute_schedule
from .topology import Flow, Topology, build_chain, build_ring

__all__ = ["Flow", "RunLog", "SimConfig", "Topology", "build_chain", "build_ring",
           "compute_schedule", "run"]
__version__ = "0.1.0"
