"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

The random-workload criteria share one batch of 100 seeded scenarios
(seeds 0..99), run once per session. Run as a script for the verdict lines
alone: ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import time
from functools import lru_cache

from clusterrev import actors as A
from clusterrev.engine import Inbound, to_us
from clusterrev.messages import C2C, AddRequest, RemoveRequest
from clusterrev.report import replay
from clusterrev.revocation import lccl_lookup_promote
from clusterrev.runner import baseline_crl, build_report, digest, revocation_stream, run_scenario
from clusterrev.scenario import build_world, config_from_dict, load_scenario, random_scenario

EXAMPLE_B_LCCL1 = {"V8", "V25", "V5", "V11", "V16", "V19", "V15", "V12", "V2", "V3"}
SEEDS = range(100)
PERIOD_US = 60_000_000


class Run:
    def __init__(self, cfg, world, trace, promotions, elapsed):
        self.cfg = cfg
        self.world = world
        self.trace = trace
        self.records = [json.loads(line) for line in trace]
        self.promotions = promotions
        self.elapsed = elapsed
        self.report = build_report(cfg, world)


def execute(cfg) -> Run:
    """Run to ``t_end`` one event at a time, checking each revoked-sender rejection as it happens."""
    start = time.perf_counter()
    world = build_world(cfg)
    t_end = to_us(cfg.t_end_s)
    promotions = []
    while True:
        nxt = world.queue.peek()
        watch = nxt is not None and isinstance(nxt.payload, Inbound) and isinstance(nxt.payload.msg, C2C)
        if not world.step(t_end):
            break
        if watch:
            rec = json.loads(world.trace[-1])
            for act in rec["details"]["actions"]:
                if act.get("reject") == A.REVOKED_SENDER:
                    _, lccl = A.receiving_credentials(world.vehicles[rec["actor"]])
                    repeat = lccl_lookup_promote(lccl, act["detail"])
                    promotions.append((rec["actor"], act["detail"], lccl.entries[0], repeat.cost))
    world.finish()
    return Run(cfg, world, world.trace, promotions, time.perf_counter() - start)


@lru_cache(maxsize=None)
def random_runs() -> tuple[list[Run], float]:
    start = time.perf_counter()
    runs = [execute(random_scenario(seed)) for seed in SEEDS]
    return runs, time.perf_counter() - start


@lru_cache(maxsize=None)
def example_run() -> tuple[Run, float]:
    start = time.perf_counter()
    run = execute(load_scenario("example_b"))
    return run, time.perf_counter() - start


# --- checks over a single trace ---------------------------------------------------


def lca_broadcasts(run: Run) -> dict[str, list[tuple[int, str]]]:
    out: dict[str, list[tuple[int, str]]] = {}
    for r in run.records:
        if not r["actor"].startswith("LCA") or not r["kind"].startswith("timer:"):
            continue
        if any(a.get("broadcast") == "LcclBroadcast" for a in r["details"]["actions"]):
            out.setdefault(r["actor"], []).append((r["time_us"], r["kind"][6:]))
    return out


def timer_reset_violations(run: Run) -> tuple[int, int]:
    checked = bad = 0
    horizon = to_us(run.cfg.t_end_s)
    for seq in lca_broadcasts(run).values():
        for i, (t, kind) in enumerate(seq):
            if kind != A.FLUSH:
                continue
            nxt = seq[i + 1] if i + 1 < len(seq) else None
            if nxt is None:
                if t + PERIOD_US <= horizon:
                    bad += 1
                continue
            checked += 1
            t2, kind2 = nxt
            if kind2 == A.PERIODIC and t2 != t + PERIOD_US:
                bad += 1
            if kind2 == A.FLUSH and not t2 < t + PERIOD_US:
                bad += 1
    return checked, bad


def priority_violations(run: Run) -> tuple[int, int]:
    """Pairs (Add, Remove) for one cert deliverable at one instant, and how many applied Remove first."""
    seen: dict[tuple[int, str], dict[str, int]] = {}
    for i, r in enumerate(run.records):
        if r["kind"] in ("recv:AddRequest", "recv:RemoveRequest"):
            key = (r["time_us"], r["details"]["msg"]["cert_id"])
            seen.setdefault(key, {}).setdefault(r["kind"], i)
    pairs = [v for v in seen.values() if len(v) == 2]
    return len(pairs), sum(v["recv:AddRequest"] > v["recv:RemoveRequest"] for v in pairs)


def epoch_timeline(run: Run):
    """Epoch of every LCA as of each trace index."""
    current: dict[int, int] = {}
    snapshots = []
    for r in run.records:
        if r["actor"].startswith("LCA") and "version" in r["details"]:
            current[int(r["actor"][3:])] = r["details"]["version"]["epoch"]
        snapshots.append(dict(current))
    return snapshots


def fencing(run: Run) -> tuple[int, int]:
    """Stale-epoch C2C reaching an up-to-date receiver, and how many were not rejected for it."""
    epochs = epoch_timeline(run)
    checked = misses = 0
    for i, r in enumerate(run.records):
        if r["kind"] != "recv:C2C":
            continue
        now = epochs[i - 1]
        sealed = r["details"]["msg"]["envelope"]["group_sig"]
        held = r["details"]["receiver_sig"]
        if sealed["epoch"] >= now.get(sealed["cluster"], 0):
            continue
        if held["epoch"] != now.get(held["cluster"], 0):
            continue
        checked += 1
        reasons = [a.get("reject") for a in r["details"]["actions"]]
        if reasons != [A.BAD_CLUSTER_SIGNATURE]:
            misses += 1
    return checked, misses


def detection(run: Run) -> tuple[int, int, int]:
    """Adversary crossings, crossings without an AddRequest, and false positives."""
    revoked = set(run.cfg.revoked)
    hellos: dict[tuple[str, str], list[dict]] = {}
    for r in run.records:
        if r["kind"] == "recv:VehicleHello":
            hellos.setdefault((r["actor"], r["details"]["from"]), []).append(r)
    crossings = misses = false_pos = 0
    for r in run.records:
        if r["kind"] == "mobility:BorderCrossing" and r["actor"] in revoked:
            crossings += 1
            rsu = r["details"]["input"]["rsu"]
            answered = [
                h for h in hellos.get((rsu, r["actor"]), [])
                if h["time_us"] >= r["time_us"] and any(a.get("send") == "AddRequest" for a in h["details"]["actions"])
            ]
            if not answered:
                misses += 1
        for act in r["details"].get("actions", []):
            if act.get("reject") == A.REVOKED_SENDER and act["detail"] not in revoked:
                false_pos += 1
        if r["kind"] in ("recv:AddRequest", "recv:RemoveRequest") and r["details"]["msg"]["cert_id"] not in revoked:
            false_pos += 1
    return crossings, misses, false_pos


def exactly_one_cluster(run: Run) -> tuple[int, str]:
    """Violations of the one-list rule and of the baseline union, at quiescence."""
    problems = []
    in_flight = [
        e for e in run.world.queue.pending()
        if isinstance(e.payload, Inbound) and isinstance(e.payload.msg, (AddRequest, RemoveRequest))
    ]
    if in_flight:
        problems.append(f"{len(in_flight)} Add/Remove still in flight")
    lists = run.world.lccl_state()
    for cert in run.cfg.revoked:
        holders = [c for c, entries in lists.items() if cert in entries]
        if len(holders) != 1:
            problems.append(f"{cert} in {holders}")
    union = {c for entries in lists.values() for c in entries}
    crl = baseline_crl(run.cfg, revocation_stream(run.cfg, run.world))
    scenario_part = {c for c in crl.entries if not c.startswith("CRL-")}
    if union != scenario_part:
        problems.append(f"union {sorted(union ^ scenario_part)} differs from baseline")
    return len(problems), "; ".join(problems)


# --- the criteria -------------------------------------------------------------


def test_1_example_b_reproduction(verdict):
    run, elapsed = example_run()
    final = run.world.lccl_state()
    ok = (
        set(final[1]) == EXAMPLE_B_LCCL1
        and "V25" not in final[6]
        and run.world.lcas["LCA6"].group_sig.epoch == 1
        and elapsed < 1.0
    )
    verdict(1, "example_b batch reproduction", ok, f"LCCL1={list(final[1])}, epoch6={run.world.lcas['LCA6'].group_sig.epoch}, {elapsed:.3f}s")
    assert ok


def test_2_add_before_remove(verdict):
    # dedicated workload: for every cert the Remove is enqueued before the Add at
    # one instant, at the same LCA and across two LCAs
    cfg = config_from_dict({"seed": 5, "grid": {"rows": 1, "cols": 2}, "t_end_s": 30})
    world = build_world(cfg)
    r1, r2 = world.grid.cells[1].rsus[0], world.grid.cells[2].rsus[0]
    for k, at in enumerate((1, 2, 3, 7, 7, 7)):
        cert = f"X{k}"
        other = "LCA2" if k % 2 else "LCA1"
        world.queue.schedule(to_us(at), 1, other, Inbound(RemoveRequest(cert, r1), r1))
        world.queue.schedule(to_us(at), 0, "LCA1", Inbound(AddRequest(cert, r1), r1))
        world.queue.schedule(to_us(at), 0, "LCA2", Inbound(AddRequest(cert, r2), r2))
    world.run_until(to_us(30))
    world.finish()
    crafted = Run(cfg, world, world.trace, [], 0.0)
    pairs, bad = priority_violations(crafted)
    runs, _ = random_runs()
    for run in runs:
        p, b = priority_violations(run)
        pairs, bad = pairs + p, bad + b
    ok = pairs > 0 and bad == 0
    verdict(2, "Add applied before Remove at equal timestamps", ok, f"{pairs} same-instant pairs, {bad} out of order")
    assert ok


def test_3_size_contrast(verdict):
    run, _ = example_run()
    b = run.report.baseline
    series_max = max(row[2] for rows in run.report.lccl_series.values() for row in rows)
    ok = b["crl_bytes"] == 2_500_000 and b["crl_entries"] == 25_000 and series_max <= 5000 and run.report.max_lccl_bytes == series_max
    verdict(3, "CRL 2,500,000 B vs every LCCL <= 5000 B", ok, f"CRL {b['crl_bytes']} B, max LCCL {series_max} B")
    assert ok


def test_4_distribution_time_contrast(verdict):
    run, _ = example_run()
    b = run.report.baseline
    ok = 600.0 <= b["distribution_time_s"] <= 3600.0 and b["lccl_broadcast_time_s"] < 1.0
    verdict(4, "CRL distribution in [600, 3600] s, LCCL broadcast < 1 s", ok, f"{b['distribution_time_s']} s vs {b['lccl_broadcast_time_s']} s")
    assert ok


def test_5_exactly_one_cluster(verdict):
    runs, elapsed = random_runs()
    problems = []
    for run in runs:
        n, detail = exactly_one_cluster(run)
        if n:
            problems.append(f"seed {run.cfg.seed}: {detail}")
    revoked = sum(len(run.cfg.revoked) for run in runs)
    ok = not problems and elapsed < 60.0
    verdict(5, "each revoked cert in exactly one LCCL; union = CRL", ok, f"{len(runs)} scenarios, {revoked} certs, {len(problems)} violations, {elapsed:.1f}s")
    assert ok, problems[:5]


def test_6_detection_and_fencing(verdict):
    runs, _ = random_runs()
    totals = [0, 0, 0, 0, 0]
    for run in runs:
        crossings, missed, false_pos = detection(run)
        stale, unfenced = fencing(run)
        for i, v in enumerate((crossings, missed, false_pos, stale, unfenced)):
            totals[i] += v
    crossings, missed, false_pos, stale, unfenced = totals
    ok = crossings > 0 and stale > 0 and missed == 0 and false_pos == 0 and unfenced == 0
    verdict(
        6,
        "adversary crossings detected, stale epochs fenced",
        ok,
        f"{crossings} crossings/{missed} missed, {stale} stale C2C/{unfenced} accepted, {false_pos} false positives",
    )
    assert ok


def test_7_timer_reset_law(verdict):
    runs, _ = random_runs()
    run_b, _ = example_run()
    checked = bad = 0
    for run in [run_b, *runs]:
        c, b = timer_reset_violations(run)
        checked, bad = checked + c, bad + b
    ok = checked > 0 and bad == 0
    verdict(7, "next periodic broadcast exactly 60 s after an event broadcast", ok, f"{checked} event broadcasts, {bad} violations")
    assert ok


def test_8_move_to_front(verdict):
    runs, _ = random_runs()
    run_b, _ = example_run()
    checks = [p for run in [run_b, *runs] for p in run.promotions]
    bad = [p for p in checks if p[2] != p[1] or p[3] != 1]
    in_example = ("V7", "V12", "V12", 1) in run_b.promotions
    ok = bool(checks) and not bad and in_example
    verdict(8, "rejected revoked sender moves to index 0, repeat cost 1", ok, f"{len(checks)} rejections, {len(bad)} violations")
    assert ok, bad[:5]


def test_9_determinism(verdict):
    runs, _ = random_runs()
    run_b, _ = example_run()
    mismatched = []
    unreconciled = []
    for run in [run_b, *runs[:25]]:
        report, trace = run_scenario(run.cfg)
        report2, trace2 = run_scenario(run.cfg)
        same = trace == trace2 == run.trace and json.dumps(report.to_dict(), sort_keys=True) == json.dumps(report2.to_dict(), sort_keys=True)
        if not same:
            mismatched.append(run.cfg.name)
    for run in [run_b, *runs]:
        if dict(replay(run.trace)) != run.report.counters:
            unreconciled.append(run.cfg.name)
    ok = not mismatched and not unreconciled
    verdict(
        9,
        "same seed, same trace and report; replay equals report",
        ok,
        f"example_b {digest(run_b.trace)[:12]}, {len(mismatched)} nondeterministic, {len(unreconciled)} unreconciled",
    )
    assert ok


if __name__ == "__main__":
    import sys

    failed = 0

    def _print(number, title, ok, detail=""):
        global failed
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  [{number}] {title}" + (f"  ({detail})" if detail else ""))

    for fn in (
        test_1_example_b_reproduction,
        test_2_add_before_remove,
        test_3_size_contrast,
        test_4_distribution_time_contrast,
        test_5_exactly_one_cluster,
        test_6_detection_and_fencing,
        test_7_timer_reset_law,
        test_8_move_to_front,
        test_9_determinism,
    ):
        try:
            fn(_print)
        except AssertionError:
            pass
    sys.exit(1 if failed else 0)
