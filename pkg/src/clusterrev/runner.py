"""Run orchestration: one scenario end to end, or a directory of them."""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .baseline import GlobalCrl, crl_distribution_time, crl_lookup, crl_revoke_all, padding_ids
from .engine import World, to_us
from .report import C2C_OUTCOMES, RunReport, lookup_summary
from .revocation import CertificateId
from .scenario import ScenarioConfig, build_world, load_scenario


def baseline_crl(cfg: ScenarioConfig, stream: list[CertificateId]) -> GlobalCrl:
    """Global list fed by the same revocations, after the out-of-area padding."""
    crl = GlobalCrl(entry_size_bytes=cfg.entry_size_bytes)
    pad = max(0, cfg.baseline_pad_to_entries - len(set(stream)))
    return crl_revoke_all(crl_revoke_all(crl, padding_ids(pad)), stream)


def revocation_stream(cfg: ScenarioConfig, world: World) -> list[CertificateId]:
    """Initial placements, then any cert the LCAs learned about during the run."""
    stream = list(cfg.revoked)
    for lca in sorted(world.lcas.values(), key=lambda s: s.cluster):
        stream.extend(lca.lccl.entries)
    seen: dict[CertificateId, None] = {}
    for cert in stream:
        seen.setdefault(cert, None)
    return list(seen)


def build_report(cfg: ScenarioConfig, world: World) -> RunReport:
    m = world.metrics
    counters = dict(sorted((k, v) for k, v in m.counters.items() if v))
    series = {str(c): [list(row) for row in rows] for c, rows in sorted(m.lccl_series.items())}
    all_rows = [row for rows in m.lccl_series.values() for row in rows]
    lcas = sorted(world.lcas.values(), key=lambda s: s.cluster)
    stream = revocation_stream(cfg, world)
    crl = baseline_crl(cfg, stream)
    max_bytes = max((r[2] for r in all_rows), default=0)
    mirrored = [crl_lookup(crl, lk["sender"])[1] for lk in m.lookups]
    return RunReport(
        scenario=cfg.name,
        seed=cfg.seed,
        t_end_s=cfg.t_end_s,
        counters=counters,
        lccl_series=series,
        max_lccl_entries=max((r[1] for r in all_rows), default=0),
        max_lccl_bytes=max_bytes,
        final_lccl={str(s.cluster): list(s.lccl.entries) for s in lcas},
        final_epochs={str(s.cluster): s.group_sig.epoch for s in lcas},
        detections=[dict(sorted(d.items())) for d in m.detections],
        c2c={k: m.counters.get(f"c2c.{k}", 0) for k in C2C_OUTCOMES},
        lookups=lookup_summary([lk["cost"] for lk in m.lookups]),
        gap_windows=list(m.gap_windows),
        baseline={
            "scenario_entries": len(stream),
            "crl_entries": len(crl.entries),
            "crl_bytes": crl.size_bytes,
            "distribution_time_s": round(crl_distribution_time(crl, cfg.baseline), 6),
            "lccl_broadcast_time_s": round(cfg.baseline.time_for(max_bytes), 6),
            "bandwidth_bytes_per_s": cfg.baseline.bandwidth_bytes_per_s,
            "lookups": lookup_summary(mirrored),
        },
    )


def run_world(cfg: ScenarioConfig) -> tuple[World, list[str]]:
    world = build_world(cfg)
    trace = world.run_until(to_us(cfg.t_end_s))
    world.finish()
    return world, trace


def run_scenario(cfg: ScenarioConfig) -> tuple[RunReport, list[str]]:
    world, trace = run_world(cfg)
    return build_report(cfg, world), trace


def digest(lines: list[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8") + b"\n")
    return h.hexdigest()


def _sweep_one(path: str) -> tuple[str, Optional[str], Optional[str]]:
    try:
        report, trace = run_scenario(load_scenario(path))
    except Exception as exc:  # reported per file, the sweep carries on
        return path, None, f"{type(exc).__name__}: {exc}"
    return path, digest(trace), None


def sweep(directory: str, workers: Optional[int] = None) -> list[tuple[str, Optional[str], Optional[str]]]:
    """Run every ``*.yaml`` under ``directory`` in separate processes."""
    files = sorted(str(p) for p in Path(directory).glob("*.yaml"))
    if not files:
        return []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_one, files))

