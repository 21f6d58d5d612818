"""Desk-scale model of a Kubernetes node's TSN egress path with a metadata proxy."""

from .engine import (
    GCConfig,
    HostPath,
    RunResult,
    Scenario,
    ScenarioError,
    Talker,
    TraceRecord,
    replay_check,
    run_scenario,
)
from .proxy import KeyStrategy, MetadataRecord, MetadataStore
from .scenario import load_scenario, paper_scenario
from .taprio import GateControlList, GateWindow, paper_gcl

__all__ = [
    "GCConfig", "GateControlList", "GateWindow", "HostPath", "KeyStrategy",
    "MetadataRecord", "MetadataStore", "RunResult", "Scenario", "ScenarioError",
    "Talker", "TraceRecord", "load_scenario", "paper_gcl", "paper_scenario",
    "replay_check", "run_scenario",
]
