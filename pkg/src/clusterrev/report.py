"""Run reports, their JSON/CSV encodings, and an independent trace recount."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Union

C2C_OUTCOMES = ("accepted", "RevokedSender", "BadClusterSignature", "DecryptionFailure")


@dataclass
class RunReport:
    scenario: str
    seed: int
    t_end_s: float
    counters: dict[str, int] = field(default_factory=dict)
    lccl_series: dict[str, list[list[int]]] = field(default_factory=dict)
    max_lccl_entries: int = 0
    max_lccl_bytes: int = 0
    final_lccl: dict[str, list[str]] = field(default_factory=dict)
    final_epochs: dict[str, int] = field(default_factory=dict)
    detections: list[dict] = field(default_factory=list)
    c2c: dict[str, int] = field(default_factory=dict)
    lookups: dict[str, Any] = field(default_factory=dict)
    gap_windows: list[dict] = field(default_factory=list)
    baseline: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def lookup_summary(costs: list[int]) -> dict[str, Any]:
    if not costs:
        return {"count": 0, "total": 0, "max": 0, "mean": 0.0, "histogram": {}}
    hist = Counter(costs)
    return {
        "count": len(costs),
        "total": sum(costs),
        "max": max(costs),
        "mean": round(sum(costs) / len(costs), 6),
        "histogram": {str(k): hist[k] for k in sorted(hist)},
    }


# --- encodings ----------------------------------------------------------------


def to_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def flatten(value: Any, prefix: str = "") -> list[tuple[str, Any]]:
    """Leaf values of a nested report keyed by dotted path (list items by index)."""
    if isinstance(value, dict):
        items: Iterable[tuple[str, Any]] = ((str(k), value[k]) for k in sorted(value, key=str))
    elif isinstance(value, list):
        items = ((str(i), v) for i, v in enumerate(value))
    else:
        return [(prefix, value)]
    out: list[tuple[str, Any]] = []
    for k, v in items:
        path = f"{prefix}.{k}" if prefix else k
        if isinstance(v, (dict, list)) and not v:
            continue
        out.extend(flatten(v, path))
    return out


def _csv_text(header: list[str], rows: Iterable[Iterable[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if x is None else x for x in row])
    return buf.getvalue()


def to_csv_files(report: RunReport) -> dict[str, str]:
    """``report.csv`` carries every number as a path/value row; the rest are per-series views."""
    files = {"report.csv": _csv_text(["path", "value"], flatten(report.to_dict()))}
    files["lccl_series.csv"] = _csv_text(
        ["cluster", "time_us", "entries", "bytes", "version"],
        ([c, *row] for c in sorted(report.lccl_series, key=int) for row in report.lccl_series[c]),
    )
    files["counters.csv"] = _csv_text(["counter", "value"], sorted(report.counters.items()))
    files["detections.csv"] = _csv_text(
        ["vehicle", "cluster", "rsu", "crossing_us", "detected_us", "latency_us"],
        ([d["vehicle"], d["cluster"], d["rsu"], d["crossing_us"], d["detected_us"], d["latency_us"]] for d in report.detections),
    )
    return files


def parse_csv_report(text: str) -> dict[str, Any]:
    rows = list(csv.reader(io.StringIO(text)))
    return {path: _number(value) for path, value in rows[1:]}


def _number(text: str) -> Any:
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text in ("True", "False"):
        return text == "True"
    return text


def emit_report(report: RunReport, fmt: str, out_dir: Union[str, Path]) -> list[Path]:
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown report format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"report.json": to_json(report)} if fmt == "json" else to_csv_files(report)
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    return written


def emit_comparison(report: RunReport) -> str:
    """Fixed-width summary of the cluster scheme against the global list."""
    b = report.baseline
    crl_bytes = b.get("crl_bytes", 0)
    ratio = crl_bytes / report.max_lccl_bytes if report.max_lccl_bytes else 0.0
    latencies = [d["latency_us"] / 1e6 for d in report.detections]
    rows = [
        ("max LCCL entries", f"{report.max_lccl_entries}"),
        ("max LCCL bytes", f"{report.max_lccl_bytes}"),
        ("CRL entries", f"{b.get('crl_entries', 0)}"),
        ("CRL bytes", f"{crl_bytes}"),
        ("CRL / LCCL byte ratio", f"{ratio:.1f}x"),
        ("LCCL broadcast time (s)", f"{b.get('lccl_broadcast_time_s', 0.0):.3f}"),
        ("CRL distribution time (s)", f"{b.get('distribution_time_s', 0.0):.3f}"),
        ("detections", f"{len(latencies)}"),
        ("max detection latency (s)", f"{max(latencies):.3f}" if latencies else "-"),
        ("mean LCCL lookup cost", f"{report.lookups.get('mean', 0.0):.2f}"),
        ("mean CRL lookup cost", f"{b.get('lookups', {}).get('mean', 0.0):.2f}"),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"{report.scenario} (seed {report.seed})", "-" * (width + 16)]
    lines += [f"{k:<{width}}  {v:>14}" for k, v in rows]
    return "\n".join(lines) + "\n"


# --- recount oracle -------------------------------------------------------------


def replay(trace: Iterable[str]) -> Counter:
    """Recount every engine counter from trace records alone."""
    c: Counter = Counter()
    for line in trace:
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec["kind"]
        if rec["actor"] == "engine":
            continue
        d = rec["details"]
        c["events"] += 1
        if kind.startswith("timer:") and not d.get("stale"):
            c[f"timer.{kind[6:]}"] += 1
        if kind.startswith("recv:"):
            c["delivered"] += 1
            c[f"delivered.{kind[5:]}"] += 1
        for act in d.get("actions", []):
            msg_kind = act.get("send") or act.get("broadcast")
            if msg_kind:
                n_ok, n_lost = len(act["deliveries"]), len(act["lost"])
                n = n_ok + n_lost
                c[f"sent.{msg_kind}"] += n
                c[f"bytes.{msg_kind}"] += n * act["bytes"]
                c["transmissions"] += n
                c["deliveries_scheduled"] += n_ok
                if n_lost:
                    c["lost"] += n_lost
                    c[f"lost.{msg_kind}"] += n_lost
            elif "metric" in act:
                c[f"metric.{act['metric']}"] += act["value"]
            elif "accept" in act:
                c["c2c.accepted"] += 1
                c["lookups"] += 1
                c["lookup_cost_total"] += act["cost"]
            elif "reject" in act:
                if kind == "recv:C2C":
                    c[f"c2c.{act['reject']}"] += 1
                    if act["cost"] is not None:
                        c["lookups"] += 1
                        c["lookup_cost_total"] += act["cost"]
                else:
                    c[f"reject.{act['reject']}"] += 1
    return +c


def reconcile(report: RunReport, trace: Iterable[str]) -> dict[str, tuple[int, int]]:
    """Counters where report and recount disagree, as ``name -> (report, recount)``."""
    recount = replay(trace)
    names = set(report.counters) | set(recount)
    return {n: (report.counters.get(n, 0), recount.get(n, 0)) for n in sorted(names) if report.counters.get(n, 0) != recount.get(n, 0)}
