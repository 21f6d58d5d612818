"""Trace CSV encoding and cycle-phase summaries of a run."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Dict, Iterable, List, Optional, TextIO

from .engine import RunResult, Scenario, TraceRecord
from .taprio import GateControlList

TRACE_FIELDS = [f.name for f in fields(TraceRecord)]
_INT_FIELDS = {"packet_seq", "tx_time", "rx_time", "rx_phase", "priority_at_rx"}
_BOOL_FIELDS = {"was_cloned", "was_dropped"}


def write_trace_csv(records: Iterable[TraceRecord], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_FIELDS)
    for r in records:
        row = []
        for name in TRACE_FIELDS:
            value = getattr(r, name)
            if value is None:
                row.append("")
            elif isinstance(value, bool):
                row.append("true" if value else "false")
            else:
                row.append(value)
        writer.writerow(row)


def trace_csv(records: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    write_trace_csv(records, buf)
    return buf.getvalue()


def read_trace_csv(src: TextIO) -> List[TraceRecord]:
    reader = csv.DictReader(src)
    if reader.fieldnames != TRACE_FIELDS:
        raise ValueError(f"unexpected trace header {reader.fieldnames}")
    records = []
    for row in reader:
        values = {}
        for name in TRACE_FIELDS:
            raw = row[name]
            if name in _BOOL_FIELDS:
                values[name] = raw == "true"
            elif name in _INT_FIELDS:
                values[name] = int(raw) if raw != "" else None
            else:
                values[name] = raw
        records.append(TraceRecord(**values))
    return records


@dataclass
class RunReport:
    bin_width: int
    cycle_time: int
    # listener -> counts per bin over one cycle
    histograms: Dict[str, List[int]]
    # configured priority -> fraction of delivered packets inside an open window
    slot_hit: Dict[int, float]
    # listener -> window label -> share of that listener's packets
    window_share: Dict[str, Dict[str, float]]
    stats: Dict[str, int]
    delivered: int
    dropped: int


def _window_label(w) -> str:
    prios = ",".join(str(p) for p in sorted(w.open_priorities))
    return f"[{w.start_offset / 1000:g}us, {w.end_offset / 1000:g}us) prio {prios}"


def build_report(scenario: Scenario, result: RunResult, bin_width: int = 1000) -> RunReport:
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    gcl: GateControlList = scenario.gcl
    nbins = -(-gcl.cycle_time // bin_width)
    configured = {t.pod: t.priority for t in scenario.talkers}

    histograms: Dict[str, List[int]] = {}
    window_counts: Dict[str, Dict[str, int]] = {}
    hits: Dict[int, List[int]] = {}
    delivered = result.delivered
    for r in delivered:
        histograms.setdefault(r.listener, [0] * nbins)[r.rx_phase // bin_width] += 1
        per_window = window_counts.setdefault(r.listener, {_window_label(w): 0 for w in gcl.windows})
        for w in gcl.windows:
            if w.contains(r.rx_phase):
                per_window[_window_label(w)] += 1
                break
        prio = configured[r.talker]
        tally = hits.setdefault(prio, [0, 0])
        tally[0] += gcl.is_open(prio, r.rx_phase)
        tally[1] += 1

    window_share = {
        listener: {label: n / sum(counts.values()) for label, n in counts.items()}
        for listener, counts in window_counts.items()
    }
    return RunReport(
        bin_width=bin_width,
        cycle_time=gcl.cycle_time,
        histograms=dict(sorted(histograms.items())),
        slot_hit={p: h / n for p, (h, n) in sorted(hits.items())},
        window_share=dict(sorted(window_share.items())),
        stats=result.stats.as_dict(),
        delivered=len(delivered),
        dropped=len(result.traces) - len(delivered),
    )


def format_summary(report: RunReport, title: Optional[str] = None) -> str:
    lines = []
    if title:
        lines.append(title)
    lines.append(f"delivered {report.delivered}, dropped {report.dropped}")
    lines.append("slot-hit ratio by configured priority:")
    for prio, ratio in report.slot_hit.items():
        lines.append(f"  prio {prio}: {ratio:.4f}")
    lines.append("rx phase by gate window:")
    for listener, shares in report.window_share.items():
        lines.append(f"  {listener}:")
        for label, share in shares.items():
            lines.append(f"    {label}: {share * 100:.1f}%")
    lines.append("proxy stats: " + " ".join(f"{k}={v}" for k, v in report.stats.items()))
    lines.append(f"rx phase histogram (bin {report.bin_width} ns):")
    for listener, counts in report.histograms.items():
        lines.append(f"  {listener}:")
        for i, n in enumerate(counts):
            if n:
                lo = i * report.bin_width
                lines.append(f"    {lo / 1000:8g}us {n:7d}")
    return "\n".join(lines) + "\n"


def write_histogram_csv(report: RunReport, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["listener", "bin_start_ns", "bin_end_ns", "count"])
    for listener, counts in report.histograms.items():
        for i, n in enumerate(counts):
            lo = i * report.bin_width
            writer.writerow([listener, lo, min(lo + report.bin_width, report.cycle_time), n])
