"""Urban cluster grid, RSU placement and scripted mobility.

Clusters are square cells on a ``rows x cols`` grid. Each cluster has an LCA
at its centre whose radio reaches ``coverage_radius_m``; cell area outside
that disk is grey area. Every pair of edge-sharing clusters is guarded from
both sides: each cluster owns ``rsus_per_border`` RSUs along each shared edge,
set back ``guard_inset_m`` from the line.

Vehicles follow piecewise-linear waypoint itineraries. :func:`advance` turns
an itinerary into the border crossings, grey-area transitions and scripted
actions the protocol reacts to.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

from .actors import natural_key
from .revocation import CertificateId, ClusterId, RsuId

Point = tuple[float, float]

DEFAULT_SIDE_M = 2000.0
DEFAULT_COVERAGE_M = 1000.0
DEFAULT_MAX_SPEED = 14.0

SCRIPTED_ACTIONS = ("send_c2c", "report_safety", "grey_request")


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class RsuPlacement:
    id: RsuId
    cluster: ClusterId
    position: Point
    role: str  # "border" or "interior"
    faces: Optional[ClusterId] = None


@dataclass(frozen=True)
class ClusterCell:
    id: ClusterId
    row: int
    col: int
    bbox: tuple[float, float, float, float]
    rsus: tuple[RsuId, ...]

    @property
    def center(self) -> Point:
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2, (y0 + y1) / 2)

    @property
    def lca(self) -> str:
        return f"LCA{self.id}"


@dataclass(frozen=True)
class GreyArea:
    """Part of cell ``cell`` outside its LCA's reach, lying towards ``between``."""

    cell: ClusterId
    between: tuple[ClusterId, ...]


@dataclass(frozen=True)
class ClusterGrid:
    rows: int
    cols: int
    cluster_side_m: float
    coverage_radius_m: float
    layout: tuple[tuple[ClusterId, ...], ...]
    cells: dict[ClusterId, ClusterCell]
    rsus: dict[RsuId, RsuPlacement]

    @property
    def width(self) -> float:
        return self.cols * self.cluster_side_m

    @property
    def height(self) -> float:
        return self.rows * self.cluster_side_m

    @property
    def cluster_area_m2(self) -> float:
        return self.cluster_side_m**2

    def neighbors(self, cluster: ClusterId) -> list[ClusterId]:
        cell = self.cells[cluster]
        out = []
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            r, c = cell.row + dr, cell.col + dc
            if 0 <= r < self.rows and 0 <= c < self.cols:
                out.append(self.layout[r][c])
        return sorted(out)

    def adjacent(self, a: ClusterId, b: ClusterId) -> bool:
        return b in self.neighbors(a)

    def guards(self, cluster: ClusterId, faces: ClusterId) -> list[RsuPlacement]:
        return [
            self.rsus[r]
            for r in self.cells[cluster].rsus
            if self.rsus[r].role == "border" and self.rsus[r].faces == faces
        ]

    def facing(self, cluster: ClusterId) -> list[RsuId]:
        """RSUs of other clusters that guard an edge shared with ``cluster``."""
        return sorted(
            (r.id for r in self.rsus.values() if r.faces == cluster), key=_natural
        )

    def nearest_rsu(self, pos: Point, cluster: Optional[ClusterId] = None) -> Optional[RsuId]:
        pool = [r for r in self.rsus.values() if cluster is None or r.cluster == cluster]
        if not pool:
            return None
        return min(pool, key=lambda r: (math.dist(pos, r.position), _natural(r.id))).id

    def in_bounds(self, pos: Point) -> bool:
        x, y = pos
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height


def _natural(name: str) -> tuple:
    return natural_key(name)


def build_grid(
    rows: int,
    cols: int,
    cluster_side_m: float = DEFAULT_SIDE_M,
    rsus_per_border: int = 1,
    interior_rsus: int = 0,
    layout: Optional[Sequence[Sequence[int]]] = None,
    rsu_names: Optional[dict[str, str]] = None,
    coverage_radius_m: float = DEFAULT_COVERAGE_M,
    guard_inset_m: float = 10.0,
) -> ClusterGrid:
    """Build the grid with one LCA per cell and guard RSUs on every shared edge.

    Default RSU names are ``RSU<c>-<n>`` for the guard of cluster ``c`` facing
    ``n`` (``RSU<c>-<n>.<k>`` when there are several per edge) and ``RSU<c>-i<k>``
    for interior units; ``rsu_names`` maps default names to custom ones.
    """
    if rows < 1 or cols < 1:
        raise GridError(f"grid dimensions must be positive, got {rows}x{cols}")
    if cluster_side_m <= 0:
        raise GridError("cluster_side_m must be positive")
    if rsus_per_border < 1:
        raise GridError("every shared edge needs at least one guard RSU per side")
    if interior_rsus < 0:
        raise GridError("interior_rsus must be non-negative")

    if layout is None:
        layout = [[r * cols + c + 1 for c in range(cols)] for r in range(rows)]
    layout_t = tuple(tuple(int(x) for x in row) for row in layout)
    if len(layout_t) != rows or any(len(row) != cols for row in layout_t):
        raise GridError(f"layout must be {rows}x{cols}")
    ids = [x for row in layout_t for x in row]
    if len(set(ids)) != len(ids):
        raise GridError("layout repeats a cluster id")

    rename = dict(rsu_names or {})
    side = float(cluster_side_m)
    placements: dict[RsuId, RsuPlacement] = {}
    cells: dict[ClusterId, ClusterCell] = {}
    used_renames: set[str] = set()

    def add(default: str, cluster: int, pos: Point, role: str, faces: Optional[int]) -> str:
        name = rename.get(default, default)
        if default in rename:
            used_renames.add(default)
        if name in placements:
            raise GridError(f"duplicate RSU id {name}")
        placements[name] = RsuPlacement(name, cluster, (round(pos[0], 6), round(pos[1], 6)), role, faces)
        return name

    for r in range(rows):
        for c in range(cols):
            cid = layout_t[r][c]
            x0, y0 = c * side, r * side
            cx, cy = x0 + side / 2, y0 + side / 2
            names = []
            for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
                nr, nc = r + dr, c + dc
                if not (0 <= nr < rows and 0 <= nc < cols):
                    continue
                nid = layout_t[nr][nc]
                for k in range(rsus_per_border):
                    frac = (k + 1) / (rsus_per_border + 1)
                    if dr:
                        edge_y = y0 if dr < 0 else y0 + side
                        pos = (x0 + frac * side, edge_y - dr * guard_inset_m)
                    else:
                        edge_x = x0 if dc < 0 else x0 + side
                        pos = (edge_x - dc * guard_inset_m, y0 + frac * side)
                    default = f"RSU{cid}-{nid}" if rsus_per_border == 1 else f"RSU{cid}-{nid}.{k + 1}"
                    names.append(add(default, cid, pos, "border", nid))
            for k in range(interior_rsus):
                angle = math.pi + 2 * math.pi * k / interior_rsus
                pos = (cx + 0.25 * side * math.cos(angle), cy + 0.25 * side * math.sin(angle))
                names.append(add(f"RSU{cid}-i{k + 1}", cid, pos, "interior", None))
            cells[cid] = ClusterCell(cid, r, c, (x0, y0, x0 + side, y0 + side), tuple(sorted(names, key=_natural)))

    unknown = set(rename) - used_renames
    if unknown:
        raise GridError(f"rsu_names refers to unknown RSUs: {sorted(unknown)}")
    return ClusterGrid(rows, cols, side, float(coverage_radius_m), layout_t, cells, placements)


def owner(grid: ClusterGrid, pos: Point) -> ClusterId:
    """Cell whose bounding box holds ``pos``; shared boundaries go to the lower id."""
    if not grid.in_bounds(pos):
        raise GridError(f"position {pos} outside the {grid.width}x{grid.height} m grid")
    x, y = pos
    side = grid.cluster_side_m
    cands = set()
    for c in {min(int(x // side), grid.cols - 1), int(math.ceil(x / side)) - 1}:
        for r in {min(int(y // side), grid.rows - 1), int(math.ceil(y / side)) - 1}:
            if 0 <= r < grid.rows and 0 <= c < grid.cols:
                cands.add(grid.layout[r][c])
    return min(cands)


def locate(grid: ClusterGrid, pos: Point) -> Union[ClusterId, GreyArea]:
    cid = owner(grid, pos)
    cell = grid.cells[cid]
    cx, cy = cell.center
    if math.dist(pos, (cx, cy)) <= grid.coverage_radius_m:
        return cid
    between = {cid}
    dc = 1 if pos[0] > cx else -1 if pos[0] < cx else 0
    dr = 1 if pos[1] > cy else -1 if pos[1] < cy else 0
    for r, c in ((cell.row, cell.col + dc), (cell.row + dr, cell.col)):
        if (r, c) != (cell.row, cell.col) and 0 <= r < grid.rows and 0 <= c < grid.cols:
            between.add(grid.layout[r][c])
    return GreyArea(cid, tuple(sorted(between)))


# --- itineraries --------------------------------------------------------------


@dataclass(frozen=True)
class Waypoint:
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class ScriptedEvent:
    at: float
    action: str
    args: tuple[tuple[str, Any], ...] = ()

    def arg(self, name: str, default: Any = None) -> Any:
        return dict(self.args).get(name, default)


@dataclass(frozen=True)
class VehicleItinerary:
    vehicle: CertificateId
    waypoints: tuple[Waypoint, ...]
    events: tuple[ScriptedEvent, ...] = ()

    def position_at(self, t: float) -> Point:
        wps = self.waypoints
        if t <= wps[0].t:
            return (wps[0].x, wps[0].y)
        for a, b in zip(wps, wps[1:]):
            if t <= b.t:
                s = (t - a.t) / (b.t - a.t)
                return (a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))
        return (wps[-1].x, wps[-1].y)


def validate_itinerary(grid: ClusterGrid, itin: VehicleItinerary, max_speed: float = DEFAULT_MAX_SPEED) -> None:
    """Raise :class:`GridError` naming the vehicle if the itinerary is unusable."""
    who = itin.vehicle
    if not itin.waypoints:
        raise GridError(f"{who}: itinerary has no waypoints")
    for i, wp in enumerate(itin.waypoints):
        if not grid.in_bounds((wp.x, wp.y)):
            raise GridError(f"{who}: waypoint {i} ({wp.x}, {wp.y}) lies outside the grid")
    for i, (a, b) in enumerate(zip(itin.waypoints, itin.waypoints[1:]), start=1):
        if b.t <= a.t:
            raise GridError(f"{who}: waypoint {i} time {b.t} does not follow {a.t}")
        speed = math.dist((a.x, a.y), (b.x, b.y)) / (b.t - a.t)
        if speed > max_speed + 1e-9:
            raise GridError(f"{who}: leg {i} needs {speed:.2f} m/s, limit is {max_speed} m/s")
    for ev in itin.events:
        if ev.action not in SCRIPTED_ACTIONS:
            raise GridError(f"{who}: unknown scripted action {ev.action!r}")


@dataclass(frozen=True)
class BorderCrossing:
    at: float
    vehicle: CertificateId
    from_cluster: ClusterId
    to_cluster: ClusterId
    rsu: RsuId


@dataclass(frozen=True)
class EnterGreyArea:
    at: float
    vehicle: CertificateId
    region: GreyArea


@dataclass(frozen=True)
class LeaveGreyArea:
    at: float
    vehicle: CertificateId
    cluster: ClusterId


@dataclass(frozen=True)
class Scripted:
    at: float
    vehicle: CertificateId
    event: ScriptedEvent


MobilityEvent = Union[BorderCrossing, EnterGreyArea, LeaveGreyArea, Scripted]


def _state(grid: ClusterGrid, pos: Point) -> tuple[ClusterId, bool]:
    where = locate(grid, pos)
    if isinstance(where, GreyArea):
        return where.cell, False
    return where, True


def _breakpoints(grid: ClusterGrid, p0: Point, p1: Point) -> list[float]:
    (x0, y0), (x1, y1) = p0, p1
    side = grid.cluster_side_m
    ss = {0.0, 1.0}
    if x1 != x0:
        for k in range(1, grid.cols):
            s = (k * side - x0) / (x1 - x0)
            if 0.0 < s < 1.0:
                ss.add(s)
    if y1 != y0:
        for k in range(1, grid.rows):
            s = (k * side - y0) / (y1 - y0)
            if 0.0 < s < 1.0:
                ss.add(s)
    dx, dy = x1 - x0, y1 - y0
    a = dx * dx + dy * dy
    lo_x, hi_x = min(x0, x1), max(x0, x1)
    lo_y, hi_y = min(y0, y1), max(y0, y1)
    for cell in grid.cells.values():
        bx0, by0, bx1, by1 = cell.bbox
        if bx1 < lo_x or bx0 > hi_x or by1 < lo_y or by0 > hi_y:
            continue
        cx, cy = cell.center
        fx, fy = x0 - cx, y0 - cy
        b = 2 * (fx * dx + fy * dy)
        c = fx * fx + fy * fy - grid.coverage_radius_m**2
        disc = b * b - 4 * a * c
        if disc <= 0:
            continue
        root = math.sqrt(disc)
        for s in ((-b - root) / (2 * a), (-b + root) / (2 * a)):
            if 0.0 < s < 1.0:
                ss.add(s)
    return sorted(ss)


def _path_transitions(grid: ClusterGrid, itin: VehicleItinerary) -> list[MobilityEvent]:
    events: list[MobilityEvent] = []
    wps = itin.waypoints
    cur = _state(grid, (wps[0].x, wps[0].y))
    for a, b in zip(wps, wps[1:]):
        p0, p1 = (a.x, a.y), (b.x, b.y)
        if p0 == p1:
            continue
        ss = _breakpoints(grid, p0, p1)
        for s_lo, s_hi in zip(ss, ss[1:]):
            mid = (s_lo + s_hi) / 2
            inside = (p0[0] + mid * (p1[0] - p0[0]), p0[1] + mid * (p1[1] - p0[1]))
            nxt = _state(grid, inside)
            if nxt == cur:
                continue
            at = a.t + s_lo * (b.t - a.t)
            where = (p0[0] + s_lo * (p1[0] - p0[0]), p0[1] + s_lo * (p1[1] - p0[1]))
            events.extend(_transition(grid, itin.vehicle, at, where, inside, cur, nxt))
            cur = nxt
    return events


def _transition(
    grid: ClusterGrid,
    vehicle: CertificateId,
    at: float,
    where: Point,
    inside: Point,
    cur: tuple[ClusterId, bool],
    nxt: tuple[ClusterId, bool],
) -> list[MobilityEvent]:
    out: list[MobilityEvent] = []
    (c0, covered0), (c1, covered1) = cur, nxt
    if c0 != c1:
        hops = [c0, c1]
        if not grid.adjacent(c0, c1):
            # passing exactly through a corner; go round via the lower-id side cell
            via = min(set(grid.neighbors(c0)) & set(grid.neighbors(c1)))
            hops = [c0, via, c1]
        for f, t in zip(hops, hops[1:]):
            guard = min(grid.guards(t, f), key=lambda r: (math.dist(where, r.position), _natural(r.id)))
            out.append(BorderCrossing(at, vehicle, f, t, guard.id))
    if covered0 and not covered1:
        region = locate(grid, inside)
        assert isinstance(region, GreyArea)
        out.append(EnterGreyArea(at, vehicle, region))
    elif covered1 and not covered0:
        out.append(LeaveGreyArea(at, vehicle, c1))
    return out


def advance(grid: ClusterGrid, itin: VehicleItinerary, from_t: float, to_t: float) -> list[MobilityEvent]:
    """Mobility events for ``itin`` with ``from_t <= at < to_t``, in time order."""
    if not from_t < to_t:
        raise ValueError("advance needs from_t < to_t")
    path = _path_transitions(grid, itin)
    scripted = [Scripted(ev.at, itin.vehicle, ev) for ev in sorted(itin.events, key=lambda e: e.at)]
    merged = [(e.at, 0, i, e) for i, e in enumerate(path)] + [(e.at, 1, i, e) for i, e in enumerate(scripted)]
    merged.sort(key=lambda m: m[:3])
    return [e for at, _, _, e in merged if from_t <= at < to_t]


# --- seeded itineraries for load tests -----------------------------------------


@dataclass
class WalkParams:
    speed_range: tuple[float, float] = (8.0, DEFAULT_MAX_SPEED)
    dwell_range: tuple[float, float] = (5.0, 60.0)
    park_probability: float = 0.0
    park_duration: tuple[float, float] = (30.0, 90.0)


def random_walk(
    grid: ClusterGrid,
    vehicle: CertificateId,
    start: ClusterId,
    t_end: float,
    rng: random.Random,
    params: Optional[WalkParams] = None,
) -> VehicleItinerary:
    """Centre-to-centre walk over adjacent clusters, optionally parking in a corner grey zone.

    Legs run between cell centres, so every crossing passes an edge midpoint
    and consecutive crossings are at least one cell side apart in distance.
    """
    p = params or WalkParams()
    side = grid.cluster_side_m
    cell = grid.cells[start]
    pos = cell.center
    t = 0.0
    wps = [Waypoint(t, *pos)]
    here = start
    while t < t_end:
        t += rng.uniform(*p.dwell_range)
        wps.append(Waypoint(t, *pos))
        if rng.random() < p.park_probability:
            cx, cy = grid.cells[here].center
            corner = (cx + rng.choice((-1, 1)) * 0.45 * side, cy + rng.choice((-1, 1)) * 0.45 * side)
            speed = rng.uniform(*p.speed_range)
            t += math.dist(pos, corner) / speed
            wps.append(Waypoint(t, *corner))
            t += rng.uniform(*p.park_duration)
            wps.append(Waypoint(t, *corner))
            t += math.dist(pos, corner) / speed
            wps.append(Waypoint(t, *pos))
            continue
        nxt = rng.choice(grid.neighbors(here)) if grid.neighbors(here) else here
        if nxt == here:
            continue
        dest = grid.cells[nxt].center
        t += math.dist(pos, dest) / rng.uniform(*p.speed_range)
        wps.append(Waypoint(t, *dest))
        pos, here = dest, nxt
    return VehicleItinerary(vehicle, tuple(wps))
