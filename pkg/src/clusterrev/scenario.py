"""Scenario configuration: loading, validation and world construction.

Scenario files are YAML. See README.md for the full grammar; the bundled
``example_b`` scenario is a worked example of every section.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from . import actors as A
from .baseline import DistributionModel
from .crypto import Certificate, ClusterSignature, KeyPair
from .engine import LINK_CLASSES, ChannelModel, World, to_us
from .messages import DEFAULT_BASE_SIZES, MessageSizes
from .revocation import Lccl, Nccl
from .topology import (
    BorderCrossing,
    DEFAULT_MAX_SPEED,
    SCRIPTED_ACTIONS,
    ClusterGrid,
    EnterGreyArea,
    GreyArea,
    GridError,
    LeaveGreyArea,
    ScriptedEvent,
    VehicleItinerary,
    WalkParams,
    Waypoint,
    advance,
    build_grid,
    locate,
    owner,
    random_walk,
    validate_itinerary,
)

BUNDLED = ("example_b",)


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class GridSpec:
    rows: int = 1
    cols: int = 1
    cluster_side_m: float = 2000.0
    rsus_per_border: int = 1
    interior_rsus: int = 0
    coverage_radius_m: float = 1000.0
    layout: Optional[tuple[tuple[int, ...], ...]] = None
    rsu_names: dict[str, str] = field(default_factory=dict)

    def build(self) -> ClusterGrid:
        return build_grid(
            self.rows,
            self.cols,
            self.cluster_side_m,
            self.rsus_per_border,
            self.interior_rsus,
            self.layout,
            self.rsu_names,
            self.coverage_radius_m,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    name: str = "scenario"
    t_end_s: float = 600.0
    grid: GridSpec = GridSpec()
    broadcast_period_s: float = 60.0
    entry_size_bytes: int = 100
    header_bytes: int = 16
    message_sizes: dict[str, int] = field(default_factory=dict)
    max_speed_mps: float = DEFAULT_MAX_SPEED
    channel: ChannelModel = ChannelModel()
    baseline: DistributionModel = DistributionModel()
    baseline_pad_to_entries: int = 0
    initial_lccl: dict[int, tuple[str, ...]] = field(default_factory=dict)
    vehicles: tuple[VehicleItinerary, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        """Plain-data form; :func:`config_from_dict` reads it back."""
        return {
            "name": self.name,
            "seed": self.seed,
            "t_end_s": self.t_end_s,
            "broadcast_period_s": self.broadcast_period_s,
            "entry_size_bytes": self.entry_size_bytes,
            "header_bytes": self.header_bytes,
            "message_sizes": dict(sorted(self.message_sizes.items())),
            "max_speed_mps": self.max_speed_mps,
            "grid": {
                "rows": self.grid.rows,
                "cols": self.grid.cols,
                "cluster_side_m": self.grid.cluster_side_m,
                "rsus_per_border": self.grid.rsus_per_border,
                "interior_rsus": self.grid.interior_rsus,
                "coverage_radius_m": self.grid.coverage_radius_m,
                "layout": [list(r) for r in self.grid.layout] if self.grid.layout else None,
                "rsu_names": dict(sorted(self.grid.rsu_names.items())),
            },
            "channel": {
                "latency_s": dict(sorted(self.channel.latency_s.items())),
                "jitter_s": dict(sorted(self.channel.jitter_s.items())),
                "loss": dict(sorted(self.channel.loss.items())),
            },
            "baseline": {
                "bandwidth_bytes_per_s": self.baseline.bandwidth_bytes_per_s,
                "overhead_s": self.baseline.overhead_s,
                "pad_to_entries": self.baseline_pad_to_entries,
            },
            "initial_lccl": {str(c): list(v) for c, v in sorted(self.initial_lccl.items())},
            "vehicles": [
                {
                    "id": it.vehicle,
                    "waypoints": [[w.t, w.x, w.y] for w in it.waypoints],
                    "events": [{"at": e.at, "do": e.action, **dict(e.args)} for e in it.events],
                }
                for it in self.vehicles
            ],
        }

    @property
    def revoked(self) -> list[str]:
        return [c for cluster in sorted(self.initial_lccl) for c in self.initial_lccl[cluster]]

    def with_overrides(self, seed: Optional[int] = None, t_end_s: Optional[float] = None) -> "ScenarioConfig":
        data = self.to_dict()
        if seed is not None:
            data["seed"] = seed
        if t_end_s is not None:
            data["t_end_s"] = t_end_s
        return config_from_dict(data)


# --- parsing --------------------------------------------------------------------

_TOP_KEYS = {
    "name",
    "seed",
    "t_end_s",
    "grid",
    "broadcast_period_s",
    "entry_size_bytes",
    "header_bytes",
    "message_sizes",
    "max_speed_mps",
    "channel",
    "baseline",
    "initial_lccl",
    "vehicles",
}


def _num(data: dict, key: str, path: str, default: Any, kind: type = float, minimum: Optional[float] = None) -> Any:
    raw = data.get(key, default)
    where = f"{path}.{key}" if path else key
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ScenarioError(where, f"expected a number, got {raw!r}")
    if kind is int and (not float(raw).is_integer()):
        raise ScenarioError(where, f"expected an integer, got {raw!r}")
    value = kind(raw)
    if minimum is not None and value < minimum:
        raise ScenarioError(where, f"must be >= {minimum}, got {raw!r}")
    return value


def _mapping(data: Any, path: str) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ScenarioError(path, f"expected a mapping, got {type(data).__name__}")
    return data


def _parse_grid(data: Any) -> GridSpec:
    g = _mapping(data, "grid")
    unknown = set(g) - {"rows", "cols", "cluster_side_m", "rsus_per_border", "interior_rsus", "coverage_radius_m", "layout", "rsu_names"}
    if unknown:
        raise ScenarioError("grid", f"unknown keys {sorted(unknown)}")
    layout = g.get("layout")
    if layout is not None:
        if not isinstance(layout, list) or not all(isinstance(r, list) for r in layout):
            raise ScenarioError("grid.layout", "expected a list of rows")
        try:
            layout = tuple(tuple(int(x) for x in row) for row in layout)
        except (TypeError, ValueError):
            raise ScenarioError("grid.layout", "cluster ids must be integers") from None
    names = _mapping(g.get("rsu_names"), "grid.rsu_names")
    return GridSpec(
        rows=_num(g, "rows", "grid", 1, int, 1),
        cols=_num(g, "cols", "grid", 1, int, 1),
        cluster_side_m=_num(g, "cluster_side_m", "grid", 2000.0, float, 1e-9),
        rsus_per_border=_num(g, "rsus_per_border", "grid", 1, int, 1),
        interior_rsus=_num(g, "interior_rsus", "grid", 0, int, 0),
        coverage_radius_m=_num(g, "coverage_radius_m", "grid", 1000.0, float, 0),
        layout=layout,
        rsu_names={str(k): str(v) for k, v in names.items()},
    )


def _parse_channel(data: Any) -> ChannelModel:
    c = _mapping(data, "channel")
    tables = {}
    for key in ("latency_s", "jitter_s", "loss"):
        table = _mapping(c.get(key), f"channel.{key}")
        for link in table:
            if link not in LINK_CLASSES:
                raise ScenarioError(f"channel.{key}.{link}", f"unknown link class; expected one of {list(LINK_CLASSES)}")
        tables[key] = {str(k): _num(table, k, f"channel.{key}", 0.0, float, 0) for k in table}
    latency = dict(ChannelModel().latency_s)
    latency.update(tables["latency_s"])
    for link, p in tables["loss"].items():
        if p > 1:
            raise ScenarioError(f"channel.loss.{link}", "probability must be <= 1")
    return ChannelModel(latency, tables["jitter_s"], tables["loss"])


def _parse_vehicle(data: Any, i: int) -> VehicleItinerary:
    path = f"vehicles[{i}]"
    v = _mapping(data, path)
    vid = v.get("id")
    if not isinstance(vid, str) or not vid:
        raise ScenarioError(f"{path}.id", "vehicle id must be a non-empty string")
    path = f"vehicles[{i}]({vid})"
    raw_wps = v.get("waypoints")
    if not isinstance(raw_wps, list) or not raw_wps:
        raise ScenarioError(f"{path}.waypoints", "expected a non-empty list of [time_s, x_m, y_m]")
    wps = []
    for j, wp in enumerate(raw_wps):
        if isinstance(wp, dict):
            wp = [wp.get("time_s"), wp.get("x_m"), wp.get("y_m")]
        if not isinstance(wp, list) or len(wp) != 3 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in wp):
            raise ScenarioError(f"{path}.waypoints[{j}]", f"expected [time_s, x_m, y_m], got {wp!r}")
        wps.append(Waypoint(float(wp[0]), float(wp[1]), float(wp[2])))
    events = []
    for j, ev in enumerate(v.get("events") or []):
        epath = f"{path}.events[{j}]"
        ev = _mapping(ev, epath)
        action = ev.get("do")
        if action not in SCRIPTED_ACTIONS:
            raise ScenarioError(f"{epath}.do", f"expected one of {list(SCRIPTED_ACTIONS)}, got {action!r}")
        at = _num(ev, "at", epath, None, float, 0)
        args = {k: ev[k] for k in sorted(ev) if k not in ("at", "do")}
        if action == "send_c2c":
            if not isinstance(args.get("to"), str):
                raise ScenarioError(f"{epath}.to", "send_c2c needs a target vehicle id")
            if args.get("sig", "current") not in ("current", "previous"):
                raise ScenarioError(f"{epath}.sig", "expected 'current' or 'previous'")
        if action == "grey_request" and "cluster" in args:
            args["cluster"] = _num(args, "cluster", epath, None, int)
        events.append(ScriptedEvent(at, action, tuple(args.items())))
    extra = set(v) - {"id", "waypoints", "events"}
    if extra:
        raise ScenarioError(path, f"unknown keys {sorted(extra)}")
    return VehicleItinerary(vid, tuple(wps), tuple(events))


def config_from_dict(data: Any) -> ScenarioConfig:
    data = _mapping(data, "")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ScenarioError("", f"unknown top-level keys {sorted(unknown)}")
    if "seed" not in data:
        raise ScenarioError("seed", "a seed is mandatory")
    seed = _num(data, "seed", "", None, int)
    grid = _parse_grid(data.get("grid"))
    sizes = _mapping(data.get("message_sizes"), "message_sizes")
    for k in sizes:
        if k not in DEFAULT_BASE_SIZES:
            raise ScenarioError(f"message_sizes.{k}", "unknown message type")
    base = _mapping(data.get("baseline"), "baseline")
    extra = set(base) - {"bandwidth_bytes_per_s", "overhead_s", "pad_to_entries"}
    if extra:
        raise ScenarioError("baseline", f"unknown keys {sorted(extra)}")
    bandwidth = _num(base, "bandwidth_bytes_per_s", "baseline", 4000.0, float)
    if bandwidth <= 0:
        raise ScenarioError("baseline.bandwidth_bytes_per_s", "must be positive")
    raw_lccl = _mapping(data.get("initial_lccl"), "initial_lccl")
    initial: dict[int, tuple[str, ...]] = {}
    for k, certs in raw_lccl.items():
        try:
            cluster = int(k)
        except (TypeError, ValueError):
            raise ScenarioError(f"initial_lccl.{k}", "cluster ids must be integers") from None
        if not isinstance(certs, list) or not all(isinstance(c, str) and c for c in certs):
            raise ScenarioError(f"initial_lccl.{k}", "expected a list of certificate ids")
        initial[cluster] = tuple(certs)
    raw_vehicles = data.get("vehicles") or []
    if not isinstance(raw_vehicles, list):
        raise ScenarioError("vehicles", "expected a list")
    cfg = ScenarioConfig(
        seed=seed,
        name=str(data.get("name", "scenario")),
        t_end_s=_num(data, "t_end_s", "", 600.0, float, 0),
        grid=grid,
        broadcast_period_s=_num(data, "broadcast_period_s", "", 60.0, float, 1e-6),
        entry_size_bytes=_num(data, "entry_size_bytes", "", 100, int, 1),
        header_bytes=_num(data, "header_bytes", "", 16, int, 0),
        message_sizes={str(k): _num(sizes, k, "message_sizes", 0, int, 0) for k in sizes},
        max_speed_mps=_num(data, "max_speed_mps", "", DEFAULT_MAX_SPEED, float, 1e-9),
        channel=_parse_channel(data.get("channel")),
        baseline=DistributionModel(bandwidth, _num(base, "overhead_s", "baseline", 0.0, float, 0)),
        baseline_pad_to_entries=_num(base, "pad_to_entries", "baseline", 0, int, 0),
        initial_lccl=initial,
        vehicles=tuple(_parse_vehicle(v, i) for i, v in enumerate(raw_vehicles)),
    )
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> ClusterGrid:
    """Resolve cross-references; raise :class:`ScenarioError` on the first problem."""
    try:
        grid = cfg.grid.build()
    except GridError as exc:
        raise ScenarioError("grid", str(exc)) from None
    ids = [v.vehicle for v in cfg.vehicles]
    seen: set[str] = set()
    for i, vid in enumerate(ids):
        if vid in seen:
            raise ScenarioError(f"vehicles[{i}].id", f"duplicate vehicle {vid}")
        seen.add(vid)
        if vid.startswith(("LCA", "RSU")) or vid in grid.rsus:
            raise ScenarioError(f"vehicles[{i}].id", f"{vid} collides with an infrastructure id")
    for i, it in enumerate(cfg.vehicles):
        try:
            validate_itinerary(grid, it, cfg.max_speed_mps)
        except GridError as exc:
            raise ScenarioError(f"vehicles[{i}]({it.vehicle})", str(exc)) from None
        for j, ev in enumerate(it.events):
            target = ev.arg("to")
            if ev.action == "send_c2c" and target not in seen:
                raise ScenarioError(f"vehicles[{i}]({it.vehicle}).events[{j}].to", f"unknown vehicle {target}")
            cl = ev.arg("cluster")
            if ev.action == "grey_request" and cl is not None and cl not in grid.cells:
                raise ScenarioError(f"vehicles[{i}]({it.vehicle}).events[{j}].cluster", f"unknown cluster {cl}")
    listed: dict[str, int] = {}
    for cluster, certs in cfg.initial_lccl.items():
        if cluster not in grid.cells:
            raise ScenarioError(f"initial_lccl.{cluster}", "no such cluster in the grid")
        for cert in certs:
            if cert not in seen:
                raise ScenarioError(f"initial_lccl.{cluster}", f"{cert} is not a rostered vehicle")
            if cert in listed:
                raise ScenarioError(f"initial_lccl.{cluster}", f"{cert} already listed by cluster {listed[cert]}")
            listed[cert] = cluster
    return grid


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Read a scenario file, or a bundled scenario by name (e.g. ``example_b``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("clusterrev.scenarios").joinpath(f"{path}.yaml").read_text(encoding="utf-8")
    else:
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"{path} does not parse: {exc}") from None
    return config_from_dict(data)


# --- world construction -------------------------------------------------------


def build_world(cfg: ScenarioConfig) -> World:
    grid = validate(cfg)
    lists = {c: Lccl(c, cfg.initial_lccl.get(c, ())) for c in grid.cells}
    sigs = {c: ClusterSignature(c, 0) for c in grid.cells}
    period = to_us(cfg.broadcast_period_s)
    revoked = set(cfg.revoked)

    start: dict[str, tuple[int, bool]] = {}
    for it in cfg.vehicles:
        pos = (it.waypoints[0].x, it.waypoints[0].y)
        where = locate(grid, pos)
        start[it.vehicle] = (owner(grid, pos), isinstance(where, GreyArea))

    keys = {it.vehicle: KeyPair.for_owner(it.vehicle) for it in cfg.vehicles}
    vehicles = {}
    for it in cfg.vehicles:
        cluster, grey = start[it.vehicle]
        kp = keys[it.vehicle]
        vehicles[it.vehicle] = A.VehicleState(
            cert=Certificate(it.vehicle, kp.public),
            keys=kp,
            lccl=lists[cluster],
            group_sig=sigs[cluster],
            current_cluster=cluster,
            lccl_synced=lists[cluster].version,
            in_grey=grey,
            is_adversary=it.vehicle in revoked,
        )

    lcas = {
        c: A.LcaState(
            cluster=c,
            lccl=lists[c],
            group_sig=sigs[c],
            broadcast_period=period,
            next_broadcast_at=period,
            local_rsus=frozenset(grid.cells[c].rsus),
            neighbor_rsus=frozenset(grid.facing(c)),
        )
        for c in grid.cells
    }
    rsus = {}
    for rid, place in grid.rsus.items():
        faced = frozenset() if place.faces is None else frozenset({place.faces})
        rsus[rid] = A.RsuState(
            id=rid,
            cluster=place.cluster,
            own_keys=KeyPair.for_owner(rid),
            local_lccl=lists[place.cluster],
            nccl=Nccl(rid, faced, {f: lists[f] for f in faced}),
            group_sig=sigs[place.cluster],
            known_vehicle_pks={
                vid: keys[vid].public for vid in sorted(start, key=A.natural_key) if start[vid][0] == place.cluster
            },
        )
    sizes = MessageSizes(cfg.entry_size_bytes, cfg.header_bytes, {**DEFAULT_BASE_SIZES, **cfg.message_sizes})
    return World(
        grid,
        lcas,
        rsus,
        vehicles,
        {it.vehicle: it for it in cfg.vehicles},
        cfg.channel,
        sizes,
        cfg.seed,
        header=cfg.to_dict(),
    )


# --- seeded random scenarios ------------------------------------------------------


def random_scenario(
    seed: int,
    max_clusters: int = 9,
    max_vehicles: int = 50,
    max_adversaries: int = 10,
    t_end_s: float = 600.0,
) -> ScenarioConfig:
    """A reproducible load scenario on a grid of at most ``max_clusters`` cells.

    Vehicles walk between neighbouring cluster centres, some park in corner
    grey zones and ask for a grant. Adversaries start listed in their own
    cluster's LCCL, message a neighbour, then replay their old signature
    after their first crossing. Itineraries stop 5 s before ``t_end_s`` so
    the run ends quiescent.
    """
    rng = random.Random(seed)
    while True:
        rows, cols = rng.randint(1, 3), rng.randint(1, 3)
        if 2 <= rows * cols <= max_clusters:
            break
    spec = GridSpec(rows=rows, cols=cols, rsus_per_border=rng.randint(1, 2), interior_rsus=rng.randint(0, 1))
    grid = spec.build()
    n_vehicles = rng.randint(5, max_vehicles)
    names = [f"V{i}" for i in range(1, n_vehicles + 1)]
    adversaries = set(rng.sample(names, rng.randint(1, min(max_adversaries, n_vehicles - 1))))
    clean = [v for v in names if v not in adversaries]
    cut = t_end_s - 5.0

    starts = {v: rng.choice(sorted(grid.cells)) for v in names}
    itins: dict[str, VehicleItinerary] = {}
    for v in names:
        params = WalkParams(park_probability=0.2)
        walk = random_walk(grid, v, starts[v], t_end_s, rng, params)
        itins[v] = _truncate(walk, cut)

    events: dict[str, list[ScriptedEvent]] = {v: [] for v in names}
    for v in names:
        moves = advance(grid, itins[v], 0.0, math.inf)
        for k, mev in enumerate(moves):
            if isinstance(mev, EnterGreyArea):
                leave = next((m.at for m in moves[k + 1 :] if isinstance(m, LeaveGreyArea)), cut)
                if mev.at + 10 < leave:
                    events[v].append(ScriptedEvent(round(mev.at + 4, 3), "grey_request"))
                    peer = rng.choice(names)
                    events[v].append(ScriptedEvent(round(mev.at + 9, 3), "send_c2c", (("body", f"parked {v}"), ("to", peer))))
    for v in sorted(adversaries, key=A.natural_key):
        mates = [c for c in clean if starts[c] == starts[v]] or clean
        target = rng.choice(mates)
        events[v].append(ScriptedEvent(round(rng.uniform(1, 4), 3), "send_c2c", (("body", "probe"), ("to", target))))
        crossing = next((m.at for m in advance(grid, itins[v], 0.0, math.inf) if isinstance(m, BorderCrossing)), None)
        if crossing is not None and crossing + 30 < cut:
            events[v].append(
                ScriptedEvent(round(crossing + 30, 3), "send_c2c", (("body", "replay"), ("sig", "previous"), ("to", target)))
            )
    for v in clean:
        for _ in range(rng.randint(0, 2)):
            at = round(rng.uniform(1, cut - 1), 3)
            events[v].append(ScriptedEvent(at, "send_c2c", (("body", f"hi from {v}"), ("to", rng.choice(names)))))
        if rng.random() < 0.1:
            events[v].append(ScriptedEvent(round(rng.uniform(1, cut - 1), 3), "report_safety", (("body", f"hazard seen by {v}"),)))

    vehicles = tuple(
        VehicleItinerary(v, itins[v].waypoints, tuple(sorted(events[v], key=lambda e: e.at))) for v in names
    )
    initial: dict[int, tuple[str, ...]] = {}
    for v in names:
        if v in adversaries:
            initial.setdefault(starts[v], ())
            initial[starts[v]] += (v,)
    return ScenarioConfig(
        seed=seed,
        name=f"random-{seed}",
        t_end_s=t_end_s,
        grid=spec,
        initial_lccl=initial,
        vehicles=vehicles,
    )


def _truncate(it: VehicleItinerary, cut: float) -> VehicleItinerary:
    kept = [w for w in it.waypoints if w.t < cut]
    if len(kept) < len(it.waypoints):
        x, y = it.position_at(cut)
        kept.append(Waypoint(cut, x, y))
    return VehicleItinerary(it.vehicle, tuple(kept), it.events)


def example_b() -> ScenarioConfig:
    return load_scenario("example_b")
