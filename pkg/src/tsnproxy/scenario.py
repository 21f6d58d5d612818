"""Scenario documents: JSON mirroring :class:`~tsnproxy.engine.Scenario`.

Durations may be integer nanoseconds or strings with a unit suffix
(``"40us"``, ``"2.5ms"``, ``"2s"``); they are normalized to integer ns.
"""

from __future__ import annotations

import json
import re
from dataclasses import replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .engine import GCConfig, HostPath, Scenario, ScenarioError, Talker
from .proxy import KeyStrategy
from .taprio import GateControlList, GateWindow

BUNDLED = ("paper-fig2",)

_UNITS = {"ns": 1, "us": 1_000, "µs": 1_000, "ms": 1_000_000, "s": 1_000_000_000}
_DURATION_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*(ns|us|µs|ms|s)\s*$")


def parse_duration(value: Any, where: str = "duration") -> int:
    if isinstance(value, bool):
        raise ScenarioError(where, f"expected a duration, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        m = _DURATION_RE.match(value)
        if m:
            ns = Fraction(m.group(1)) * _UNITS[m.group(2)]
            if ns.denominator != 1:
                raise ScenarioError(where, f"{value!r} is not a whole number of nanoseconds")
            return int(ns)
    raise ScenarioError(where, f"expected integer ns or a suffixed duration, got {value!r}")


def format_duration(ns: int) -> str:
    for unit in ("s", "ms", "us"):
        scale = _UNITS[unit]
        if ns and ns % scale == 0:
            return f"{ns // scale}{unit}"
    return f"{ns}ns"


def _obj(doc: Any, where: str) -> Mapping[str, Any]:
    if not isinstance(doc, dict):
        raise ScenarioError(where, "expected an object")
    return doc


def _int(doc: Mapping, key: str, where: str, default: Optional[int] = None) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{where}{key}", f"expected an integer, got {value!r}")
    return value


def _bool(doc: Mapping, key: str, where: str, default: bool) -> bool:
    value = doc.get(key, default)
    if isinstance(value, str) and value.lower() in ("on", "off"):
        return value.lower() == "on"
    if not isinstance(value, bool):
        raise ScenarioError(f"{where}{key}", f"expected a boolean, got {value!r}")
    return value


def _prob(doc: Mapping, key: str, where: str) -> float:
    value = doc.get(key, 0.0)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}{key}", f"expected a number, got {value!r}")
    return float(value)


def _dur(doc: Mapping, key: str, where: str, default: Any = None) -> int:
    if key not in doc and default is None:
        raise ScenarioError(f"{where}{key}", "is required")
    return parse_duration(doc.get(key, default), f"{where}{key}")


def _gcl(doc: Any) -> GateControlList:
    doc = _obj(doc, "gcl")
    windows_doc = doc.get("windows")
    if not isinstance(windows_doc, list) or not windows_doc:
        raise ScenarioError("gcl.windows", "expected a non-empty array")
    windows = []
    for i, w in enumerate(windows_doc):
        where = f"gcl.windows[{i}]."
        w = _obj(w, where[:-1])
        prios = w.get("open_priorities", w.get("priorities"))
        if not isinstance(prios, list) or not all(
                isinstance(p, int) and not isinstance(p, bool) for p in prios):
            raise ScenarioError(where + "open_priorities", "expected an array of integers")
        windows.append(GateWindow(_dur(w, "start_offset", where), _dur(w, "end_offset", where),
                                  frozenset(prios)))
    try:
        return GateControlList(_dur(doc, "cycle_time", "gcl."), tuple(windows),
                               _dur(doc, "base_time", "gcl.", 0))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("gcl", str(exc)) from None


def _talker(doc: Any, i: int) -> Talker:
    where = f"talkers[{i}]."
    doc = _obj(doc, where[:-1])
    for key in ("pod", "listener"):
        if not isinstance(doc.get(key), str) or not doc[key]:
            raise ScenarioError(where + key, "expected a non-empty string")
    count = doc.get("count")
    if count is not None:
        count = _int(doc, "count", where)
    txtime_offset = doc.get("txtime_offset")
    if txtime_offset is not None:
        txtime_offset = parse_duration(txtime_offset, where + "txtime_offset")
    return Talker(
        pod=doc["pod"],
        priority=_int(doc, "priority", where),
        period=_dur(doc, "period", where),
        listener=doc["listener"],
        start_offset=_dur(doc, "start_offset", where, 0),
        payload_size=_int(doc, "payload_size", where, 64),
        count=count,
        txtime_offset=txtime_offset,
        tsa=_bool(doc, "tsa", where, True),
    )


def scenario_from_dict(doc: Any) -> Scenario:
    doc = _obj(doc, "$")
    talkers_doc = doc.get("talkers")
    if not isinstance(talkers_doc, list):
        raise ScenarioError("talkers", "expected an array")
    host = _obj(doc.get("host_path", {}), "host_path")
    gc = _obj(doc.get("gc", {}), "gc")
    if "gcl" not in doc:
        raise ScenarioError("gcl", "is required")
    try:
        strategy = KeyStrategy.parse(doc.get("strategy", "buffer"))
    except ValueError as exc:
        raise ScenarioError("strategy", str(exc)) from None
    link_rate = doc.get("link_rate")
    if link_rate is not None:
        link_rate = _int(doc, "link_rate", "")
    name = doc.get("name", "scenario")
    nic = doc.get("nic", "eth0")
    if not isinstance(name, str) or not isinstance(nic, str):
        raise ScenarioError("name" if not isinstance(name, str) else "nic", "expected a string")
    scenario = Scenario(
        duration=_dur(doc, "duration", ""),
        talkers=tuple(_talker(t, i) for i, t in enumerate(talkers_doc)),
        gcl=_gcl(doc["gcl"]),
        seed=_int(doc, "seed", "", 0),
        proxy_enabled=_bool(doc, "proxy_enabled", "", True),
        host_path=HostPath(
            clone_probability=_prob(host, "clone_probability", "host_path."),
            drop_probability=_prob(host, "drop_probability", "host_path."),
            forward_delay=_dur(host, "forward_delay", "host_path.", 0),
        ),
        gc=GCConfig(
            interval=_dur(gc, "interval", "gc.", "2s"),
            max_age=_dur(gc, "max_age", "gc.", "5s"),
        ),
        strategy=strategy,
        clone_tracking=_bool(doc, "clone_tracking", "", True),
        serialization=_dur(doc, "serialization", "", 0),
        link_rate=link_rate,
        nic=nic,
        name=name,
    )
    scenario.validate()
    return scenario


def scenario_to_dict(sc: Scenario) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "name": sc.name,
        "duration": sc.duration,
        "seed": sc.seed,
        "proxy_enabled": sc.proxy_enabled,
        "strategy": sc.strategy.value,
        "clone_tracking": sc.clone_tracking,
        "serialization": sc.serialization,
        "nic": sc.nic,
        "talkers": [],
        "host_path": {
            "clone_probability": sc.host_path.clone_probability,
            "drop_probability": sc.host_path.drop_probability,
            "forward_delay": sc.host_path.forward_delay,
        },
        "gcl": {
            "cycle_time": sc.gcl.cycle_time,
            "base_time": sc.gcl.base_time,
            "windows": [
                {"start_offset": w.start_offset, "end_offset": w.end_offset,
                 "open_priorities": sorted(w.open_priorities)}
                for w in sc.gcl.windows
            ],
        },
        "gc": {"interval": sc.gc.interval, "max_age": sc.gc.max_age},
    }
    if sc.link_rate is not None:
        doc["link_rate"] = sc.link_rate
    for t in sc.talkers:
        entry = {"pod": t.pod, "priority": t.priority, "period": t.period,
                 "start_offset": t.start_offset, "payload_size": t.payload_size,
                 "listener": t.listener, "tsa": t.tsa}
        if t.count is not None:
            entry["count"] = t.count
        if t.txtime_offset is not None:
            entry["txtime_offset"] = t.txtime_offset
        doc["talkers"].append(entry)
    return doc


def load_scenario(source: "str | Path", seed_override: Optional[int] = None) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    if str(source) in BUNDLED and not Path(source).exists():
        text = resources.files("tsnproxy.scenarios").joinpath(f"{source}.json").read_text()
    else:
        text = Path(source).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    scenario = scenario_from_dict(doc)
    if seed_override is not None:
        scenario = replace(scenario, seed=seed_override)
        scenario.validate()
    return scenario


def paper_scenario(**overrides) -> Scenario:
    return replace(load_scenario("paper-fig2"), **overrides)
