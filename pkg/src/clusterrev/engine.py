"""Deterministic discrete-event engine.

Events pop in ``(at, priority_class, seq)`` order. Classes put AddRequest
deliveries (0) ahead of RemoveRequest deliveries (1), ahead of every other
delivery and mobility input (2), ahead of timers (3). ``seq`` is assigned when
an event is scheduled, so same-class events at one instant keep emission order.

All randomness (latency jitter, loss) comes from one seeded generator whose
draw count is written into every trace record.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Union

from . import actors as A
from .messages import (
    AddRequest,
    LcclBroadcast,
    MessageSizes,
    RemoveRequest,
    kind,
    to_wire,
)
from .revocation import CertificateId, ClusterId, lccl_size_bytes
from .topology import (
    BorderCrossing,
    ClusterGrid,
    EnterGreyArea,
    LeaveGreyArea,
    MobilityEvent,
    Scripted,
    VehicleItinerary,
    advance,
)

ADD_CLASS, REMOVE_CLASS, DELIVERY_CLASS, TIMER_CLASS = 0, 1, 2, 3

LINK_CLASSES = ("v2r", "r2l", "broadcast", "v2v")
DEFAULT_LATENCY_S = {"v2r": 0.002, "r2l": 0.005, "broadcast": 0.010, "v2v": 0.002}

US = 1_000_000


def to_us(seconds: float) -> int:
    return int(round(seconds * US))


class SimulationError(RuntimeError):
    """Wiring or configuration fault; aborts the run."""


@dataclass(frozen=True)
class ChannelModel:
    latency_s: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LATENCY_S))
    jitter_s: dict[str, float] = field(default_factory=dict)
    loss: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for table in (self.latency_s, self.jitter_s, self.loss):
            unknown = set(table) - set(LINK_CLASSES)
            if unknown:
                raise ValueError(f"unknown link classes {sorted(unknown)}")
        for link, p in self.loss.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"loss probability for {link} must lie in [0, 1]")
        if any(v < 0 for v in (*self.latency_s.values(), *self.jitter_s.values())):
            raise ValueError("latencies must be non-negative")


class CountingRng:
    def __init__(self, seed: int) -> None:
        self._rng = random.Random(seed)
        self.cursor = 0

    def random(self) -> float:
        self.cursor += 1
        return self._rng.random()


@dataclass(frozen=True)
class Delivery:
    target: str
    at: int


@dataclass(frozen=True)
class Lost:
    target: str


def deliver(
    channel: ChannelModel,
    link: str,
    recipients: Iterable[str],
    now: int,
    rng: Optional[CountingRng] = None,
) -> list[Union[Delivery, Lost]]:
    """Plan one transmission per recipient: a delivery time or a loss.

    The generator is consulted only when the link has jitter or a loss
    probability strictly between 0 and 1.
    """
    base = to_us(channel.latency_s.get(link, DEFAULT_LATENCY_S[link]))
    jitter = channel.jitter_s.get(link, 0.0)
    p_loss = channel.loss.get(link, 0.0)
    out: list[Union[Delivery, Lost]] = []
    for target in recipients:
        if p_loss >= 1.0 or (0.0 < p_loss and _draw(rng) < p_loss):
            out.append(Lost(target))
            continue
        extra = to_us(jitter * _draw(rng)) if jitter > 0 else 0
        out.append(Delivery(target, now + base + extra))
    return out


def _draw(rng: Optional[CountingRng]) -> float:
    if rng is None:
        raise SimulationError("channel needs a random generator for jitter or partial loss")
    return rng.random()


# --- event queue --------------------------------------------------------------


@dataclass(frozen=True)
class TimerFire:
    purpose: str


@dataclass(frozen=True)
class Inbound:
    msg: Any
    source: str
    size: int = 0


@dataclass(frozen=True)
class Event:
    at: int
    priority_class: int
    seq: int
    target: str
    payload: Any

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.at, self.priority_class, self.seq)


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, Event]] = []
        self._seq = 0
        self.clock = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, at: int, priority_class: int, target: str, payload: Any) -> Event:
        if at < self.clock:
            raise SimulationError(f"event for {target} at {at} us is before the clock ({self.clock} us)")
        ev = Event(at, priority_class, self._seq, target, payload)
        self._seq += 1
        heapq.heappush(self._heap, (at, priority_class, ev.seq, ev))
        return ev

    def pending(self) -> list[Event]:
        return [item[3] for item in sorted(self._heap)]

    def peek(self) -> Optional[Event]:
        return self._heap[0][3] if self._heap else None

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)[3]
        self.clock = ev.at
        return ev


def schedule(queue: EventQueue, event: Event) -> EventQueue:
    """Insert an already-built event, keeping its class; seq is reassigned."""
    queue.schedule(event.at, event.priority_class, event.target, event.payload)
    return queue


def delivery_class(msg: Any) -> int:
    if isinstance(msg, AddRequest):
        return ADD_CLASS
    if isinstance(msg, RemoveRequest):
        return REMOVE_CLASS
    return DELIVERY_CLASS


# --- world --------------------------------------------------------------------


@dataclass
class Metrics:
    counters: Counter = field(default_factory=Counter)
    lookups: list[dict] = field(default_factory=list)
    lccl_series: dict[ClusterId, list[tuple[int, int, int, int]]] = field(default_factory=dict)
    detections: list[dict] = field(default_factory=list)
    gap_windows: list[dict] = field(default_factory=list)

    def bump(self, name: str, value: int = 1) -> None:
        self.counters[name] += value


class World:
    """All actor states plus the queue, channel and metric sinks for one run."""

    def __init__(
        self,
        grid: ClusterGrid,
        lcas: dict[ClusterId, A.LcaState],
        rsus: dict[str, A.RsuState],
        vehicles: dict[CertificateId, A.VehicleState],
        itineraries: dict[CertificateId, VehicleItinerary],
        channel: ChannelModel,
        sizes: MessageSizes,
        seed: int,
        header: Optional[dict] = None,
    ) -> None:
        self.grid = grid
        self.lcas = {A.lca_id(c): s for c, s in lcas.items()}
        self.rsus = dict(rsus)
        self.vehicles = dict(vehicles)
        self.itineraries = dict(itineraries)
        self.channel = channel
        self.sizes = sizes
        self.seed = seed
        self.rng = CountingRng(seed)
        self.queue = EventQueue()
        self.metrics = Metrics()
        self.trace: list[str] = []
        self._crossing_at: dict[CertificateId, tuple[int, str, ClusterId]] = {}
        self._pending_detection: dict[tuple[CertificateId, ClusterId], dict] = {}
        self._holders: dict[CertificateId, set[ClusterId]] = {}
        self._gap_open: dict[CertificateId, int] = {}
        self._finished = False

        self._emit("engine", "header", {"seed": seed, "config": header or {}}, at=0)
        for lid in sorted(self.lcas, key=A.natural_key):
            lca = self.lcas[lid]
            self.queue.schedule(lca.next_broadcast_at, TIMER_CLASS, lid, TimerFire(A.PERIODIC))
            for cert in lca.lccl.entries:
                self._holders.setdefault(cert, set()).add(lca.cluster)
            self._record_lccl(lca, 0)
        for vid in sorted(self.itineraries, key=A.natural_key):
            if vid not in self.vehicles:
                raise SimulationError(f"itinerary for unknown vehicle {vid}")
            for mev in advance(grid, self.itineraries[vid], 0.0, math.inf):
                self.queue.schedule(to_us(mev.at), DELIVERY_CLASS, vid, mev)

    # -- plumbing

    def _emit(self, actor: str, kind_: str, details: dict, at: Optional[int] = None) -> None:
        rec = {
            "time_us": self.queue.clock if at is None else at,
            "actor": actor,
            "kind": kind_,
            "details": details,
            "rng_cursor": self.rng.cursor,
        }
        self.trace.append(json.dumps(rec, separators=(",", ":"), ensure_ascii=True))

    def actor_kind(self, actor: str) -> str:
        if actor in self.lcas:
            return "lca"
        if actor in self.rsus:
            return "rsu"
        if actor in self.vehicles:
            return "vehicle"
        raise SimulationError(f"no actor named {actor!r}")

    def members(self, cluster: ClusterId) -> list[str]:
        lca = self.lcas[A.lca_id(cluster)]
        vehicles = [
            vid
            for vid, v in self.vehicles.items()
            if v.current_cluster == cluster and not v.in_grey
        ]
        return sorted(lca.local_rsus, key=A.natural_key) + sorted(vehicles, key=A.natural_key)

    def _recipients(self, source: str, scope: str) -> list[str]:
        lca = self.lcas[source]
        if scope == A.MEMBERS:
            return self.members(lca.cluster)
        if scope == A.LOCAL_RSUS:
            return sorted(lca.local_rsus, key=A.natural_key)
        if scope == A.NEIGHBOR_RSUS:
            return sorted(lca.neighbor_rsus, key=A.natural_key)
        raise SimulationError(f"unknown broadcast scope {scope!r}")

    def _link(self, source: str, target: str) -> str:
        kinds = {self.actor_kind(source), self.actor_kind(target)}
        if kinds == {"vehicle"}:
            return "v2v"
        if kinds == {"vehicle", "rsu"}:
            return "v2r"
        if kinds == {"rsu", "lca"} or kinds == {"rsu"}:
            return "r2l"
        return "broadcast"

    # -- actions

    def _transmit(self, source: str, msg: Any, targets: list[str], link: Optional[str]) -> dict:
        size = self.sizes.of(msg)
        k = kind(msg)
        for t in targets:
            self.actor_kind(t)
        plan: list[Union[Delivery, Lost]] = []
        if link is not None:
            plan = deliver(self.channel, link, targets, self.queue.clock, self.rng)
        else:
            for t in targets:
                plan.extend(deliver(self.channel, self._link(source, t), [t], self.queue.clock, self.rng))
        deliveries, lost = [], []
        for item in plan:
            self.metrics.bump(f"sent.{k}")
            self.metrics.bump(f"bytes.{k}", size)
            self.metrics.bump("transmissions")
            if isinstance(item, Lost):
                self.metrics.bump("lost")
                self.metrics.bump(f"lost.{k}")
                lost.append(item.target)
                continue
            self.queue.schedule(item.at, delivery_class(msg), item.target, Inbound(msg, source, size))
            self.metrics.bump("deliveries_scheduled")
            deliveries.append([item.target, item.at])
        return {"kind": k, "bytes": size, "deliveries": deliveries, "lost": lost}

    def _apply(self, actor: str, actions: list[A.Action], context: dict) -> list[dict]:
        out: list[dict] = []
        for act in actions:
            if isinstance(act, A.Send):
                s = self._transmit(actor, act.msg, [act.to], None)
                out.append({"send": s["kind"], "to": act.to, **_strip(s)})
                if isinstance(act.msg, AddRequest) and context.get("hello_from") == act.msg.cert_id:
                    self._open_detection(act.msg.cert_id, self.rsus[actor].cluster, actor)
            elif isinstance(act, A.Broadcast):
                targets = self._recipients(actor, act.scope)
                s = self._transmit(actor, act.msg, targets, "broadcast")
                out.append({"broadcast": s["kind"], "scope": act.scope, **_strip(s)})
            elif isinstance(act, A.SetTimer):
                self.queue.schedule(act.at, TIMER_CLASS, actor, TimerFire(act.purpose))
                out.append({"timer": act.purpose, "at_us": act.at})
            elif isinstance(act, A.MetricEvent):
                self.metrics.bump(f"metric.{act.kind}", act.value)
                out.append({"metric": act.kind, "value": act.value})
            elif isinstance(act, A.AcceptMessage):
                self.metrics.bump("c2c.accepted")
                self._lookup(actor, act.sender, act.lookup_cost, False)
                out.append({"accept": act.sender, "cost": act.lookup_cost})
            elif isinstance(act, A.RejectMessage):
                if context.get("input") == "C2C":
                    self.metrics.bump(f"c2c.{act.reason}")
                    if act.lookup_cost is not None:
                        self._lookup(actor, act.detail, act.lookup_cost, True)
                else:
                    self.metrics.bump(f"reject.{act.reason}")
                out.append({"reject": act.reason, "detail": act.detail, "cost": act.lookup_cost})
            else:
                raise SimulationError(f"unknown action {act!r}")
        return out

    def _lookup(self, actor: str, sender: str, cost: int, found: bool) -> None:
        self.metrics.bump("lookups")
        self.metrics.bump("lookup_cost_total", cost)
        self.metrics.lookups.append(
            {"time_us": self.queue.clock, "receiver": actor, "sender": sender, "cost": cost, "found": found}
        )

    # -- metrics hooks

    def _open_detection(self, cert: CertificateId, cluster: ClusterId, rsu: str) -> None:
        crossed = self._crossing_at.get(cert)
        if crossed is None:
            return
        at, via, _ = crossed
        if via != rsu:
            return
        self._pending_detection[(cert, cluster)] = {
            "vehicle": cert,
            "rsu": rsu,
            "cluster": cluster,
            "crossing_us": at,
        }

    def _close_detections(self, b: LcclBroadcast) -> None:
        for cert in b.lccl.entries:
            d = self._pending_detection.pop((cert, b.lccl.cluster), None)
            if d is not None:
                d["detected_us"] = self.queue.clock
                d["latency_us"] = self.queue.clock - d["crossing_us"]
                self.metrics.detections.append(d)

    def _record_lccl(self, lca: A.LcaState, now: int) -> None:
        series = self.metrics.lccl_series.setdefault(lca.cluster, [])
        n = len(lca.lccl.entries)
        nbytes = lccl_size_bytes(lca.lccl, self.sizes.entry_size_bytes, self.sizes.header_bytes)
        series.append((now, n, nbytes, lca.lccl.version))

    def _track_holders(self, before: A.LcaState, after: A.LcaState) -> None:
        now = self.queue.clock
        gone = set(before.lccl.entries) - set(after.lccl.entries)
        came = set(after.lccl.entries) - set(before.lccl.entries)
        for cert in sorted(came):
            self._holders.setdefault(cert, set()).add(after.cluster)
            opened = self._gap_open.pop(cert, None)
            if opened is not None:
                self.metrics.gap_windows.append({"cert": cert, "from_us": opened, "to_us": now})
        for cert in sorted(gone):
            holders = self._holders.setdefault(cert, set())
            holders.discard(after.cluster)
            if not holders:
                self._gap_open[cert] = now

    # -- event application

    def _step(self, ev: Event) -> None:
        now = ev.at
        actor = ev.target
        role = self.actor_kind(actor)
        payload = ev.payload
        details: dict[str, Any] = {}
        context: dict[str, Any] = {}

        if isinstance(payload, TimerFire):
            lca = self.lcas[actor]
            stale = payload.purpose == A.PERIODIC and now != lca.next_broadcast_at
            new, actions = A.lca_handle_timer(lca, payload.purpose, now)
            kind_ = f"timer:{payload.purpose}"
            if stale:
                details["stale"] = True
            else:
                self.metrics.bump(f"timer.{payload.purpose}")
                if payload.purpose == A.FLUSH and actions:
                    details["epoch"] = new.group_sig.epoch
                    details["entries"] = list(new.lccl.entries)
            self._commit_lca(actor, lca, new, now)
        elif isinstance(payload, Inbound):
            msg = payload.msg
            kind_ = f"recv:{kind(msg)}"
            details["from"] = payload.source
            details["msg"] = to_wire(msg)
            context["input"] = kind(msg)
            self.metrics.bump("delivered")
            self.metrics.bump(f"delivered.{kind(msg)}")
            if role == "lca":
                lca = self.lcas[actor]
                new, actions = A.lca_handle(lca, msg, payload.source, now)
                self._commit_lca(actor, lca, new, now)
            elif role == "rsu":
                if kind(msg) == "VehicleHello" and msg.cert is not None:
                    context["hello_from"] = msg.cert.id
                new_r, actions = A.rsu_handle(self.rsus[actor], msg, payload.source, now)
                self.rsus[actor] = new_r
                if isinstance(msg, LcclBroadcast) and msg.lccl.cluster == new_r.cluster:
                    self._close_detections(msg)
            else:
                v = self.vehicles[actor]
                if kind(msg) == "C2C":
                    details["receiver_sig"] = to_wire(A.receiving_credentials(v)[0])
                new_v, actions = A.vehicle_handle(v, msg, payload.source, now)
                self.vehicles[actor] = new_v
                if isinstance(msg, LcclBroadcast) and msg.lccl.cluster == v.current_cluster:
                    self._close_detections(msg)
        else:
            kind_ = f"mobility:{type(payload).__name__}"
            cmd = self._vehicle_input(actor, payload, now)
            details["input"] = to_wire(cmd)
            v = self.vehicles[actor]
            new_v, actions = A.vehicle_handle(v, cmd, "mobility", now)
            self.vehicles[actor] = new_v
        self.metrics.bump("events")
        details["actions"] = self._apply(actor, actions, context)
        details["version"] = self._version(actor)
        self._emit(actor, kind_, details)

    def _commit_lca(self, actor: str, before: A.LcaState, after: A.LcaState, now: int) -> None:
        self.lcas[actor] = after
        if after.lccl.version != before.lccl.version:
            self._track_holders(before, after)
            self._record_lccl(after, now)

    def _vehicle_input(self, vid: str, mev: MobilityEvent, now: int) -> Any:
        v = self.vehicles[vid]
        pos = self.itineraries[vid].position_at(now / US)
        if isinstance(mev, BorderCrossing):
            self._crossing_at[vid] = (now, mev.rsu, mev.to_cluster)
            return A.CrossBorder(mev.rsu, mev.from_cluster, mev.to_cluster)
        if isinstance(mev, EnterGreyArea):
            return A.GreyAreaChange(True)
        if isinstance(mev, LeaveGreyArea):
            return A.GreyAreaChange(False)
        assert isinstance(mev, Scripted)
        ev = mev.event
        if ev.action == "send_c2c":
            cluster = v.grant.group_sig.cluster if (v.in_grey and v.grant is not None) else v.current_cluster
            return A.SendC2CCommand(
                ev.arg("to"),
                ev.arg("body", ""),
                self.grid.nearest_rsu(pos, cluster),
                ev.arg("sig", "current") == "previous",
            )
        if ev.action == "report_safety":
            return A.SafetyCommand(ev.arg("body", ""), self.grid.nearest_rsu(pos, v.current_cluster))
        if ev.action == "grey_request":
            return A.GreyRequestCommand(self.grid.nearest_rsu(pos, ev.arg("cluster", v.current_cluster)))
        raise SimulationError(f"{vid}: unknown scripted action {ev.action!r}")

    def _version(self, actor: str) -> dict:
        role = self.actor_kind(actor)
        if role == "lca":
            lca = self.lcas[actor]
            return {"lccl": lca.lccl.version, "epoch": lca.group_sig.epoch}
        if role == "rsu":
            r = self.rsus[actor]
            return {"lccl": r.local_lccl.version, "epoch": r.group_sig.epoch}
        v = self.vehicles[actor]
        return {"lccl": v.lccl.version, "epoch": v.group_sig.epoch, "cluster": v.current_cluster}

    def step(self, t_end: int) -> bool:
        """Apply the next event due at or before ``t_end``; False when there is none."""
        nxt = self.queue.peek()
        if nxt is None or nxt.at > t_end:
            return False
        self._step(self.queue.pop())
        return True

    def run_until(self, t_end: int) -> list[str]:
        while self.step(t_end):
            pass
        return self.trace

    def finish(self) -> None:
        """Close the trace with the final list and epoch of every LCA."""
        if self._finished:
            return
        self._finished = True
        final = {
            str(lca.cluster): {"entries": list(lca.lccl.entries), "epoch": lca.group_sig.epoch}
            for lca in sorted(self.lcas.values(), key=lambda s: s.cluster)
        }
        self._emit("engine", "end", {"lcas": final, "pending": len(self.queue)})

    def conservation_ok(self) -> bool:
        c = self.metrics.counters
        return c["transmissions"] == c["deliveries_scheduled"] + c["lost"]

    def lccl_state(self) -> dict[ClusterId, tuple[CertificateId, ...]]:
        return {lca.cluster: lca.lccl.entries for lca in self.lcas.values()}


def _strip(summary: dict) -> dict:
    return {k: v for k, v in summary.items() if k != "kind"}


def run_until(world: World, t_end: int) -> tuple[World, list[str]]:
    trace = world.run_until(t_end)
    return world, trace


def dump_trace(trace: list[str]) -> str:
    return "".join(line + "\n" for line in trace)

