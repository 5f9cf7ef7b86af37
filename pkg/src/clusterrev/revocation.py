"""Cluster-scoped revocation lists.

An :class:`Lccl` is the ordered list of revoked certificate ids kept by one
cluster authority. Index 0 is the front. Every operation here is pure: it
returns a new list and leaves its argument untouched.

An :class:`Nccl` is what a road-side unit keeps about the clusters it faces:
one snapshot per neighbour, replaced only by equal-or-newer versions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional

CertificateId = str
ClusterId = int
RsuId = str


class TopologyError(ValueError):
    """A list was routed to an RSU that does not face the sending cluster."""


@dataclass(frozen=True)
class Lccl:
    cluster: ClusterId
    entries: tuple[CertificateId, ...] = ()
    version: int = 0

    def __post_init__(self) -> None:
        if len(set(self.entries)) != len(self.entries):
            raise ValueError(f"duplicate certificate in LCCL{self.cluster}: {self.entries}")
        if self.version < 0:
            raise ValueError("version must be non-negative")

    def __contains__(self, cert: object) -> bool:
        return cert in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class Lookup(NamedTuple):
    found: bool
    lccl: Lccl
    cost: int


def lccl_insert_front(lccl: Lccl, certs: Iterable[CertificateId]) -> Lccl:
    """Prepend the certs not already listed, keeping batch order.

    The first cert of the batch ends up at index 0. One version bump per call,
    and only if something changed.
    """
    block: list[CertificateId] = []
    for cert in certs:
        if cert not in lccl.entries and cert not in block:
            block.append(cert)
    if not block:
        return lccl
    return replace(lccl, entries=tuple(block) + lccl.entries, version=lccl.version + 1)


def lccl_remove(lccl: Lccl, cert: CertificateId) -> Lccl:
    if cert not in lccl.entries:
        return lccl
    kept = tuple(c for c in lccl.entries if c != cert)
    return replace(lccl, entries=kept, version=lccl.version + 1)


def scan_cost(entries: tuple[CertificateId, ...], cert: CertificateId) -> tuple[bool, int]:
    """Linear scan model: a hit at index i costs i + 1, a miss costs len(entries)."""
    for i, c in enumerate(entries):
        if c == cert:
            return True, i + 1
    return False, len(entries)


def lccl_lookup_promote(lccl: Lccl, cert: CertificateId) -> Lookup:
    """Search for ``cert`` and move it to the front on a hit."""
    found, cost = scan_cost(lccl.entries, cert)
    if not found or lccl.entries[0] == cert:
        return Lookup(found, lccl, cost)
    rest = tuple(c for c in lccl.entries if c != cert)
    return Lookup(True, replace(lccl, entries=(cert,) + rest, version=lccl.version + 1), cost)


def lccl_size_bytes(lccl: Lccl, entry_size_bytes: int, header_bytes: int = 0) -> int:
    if entry_size_bytes <= 0:
        raise ValueError("entry_size_bytes must be positive")
    if header_bytes < 0:
        raise ValueError("header_bytes must be non-negative")
    return len(lccl.entries) * entry_size_bytes + header_bytes


@dataclass(frozen=True)
class Nccl:
    rsu: RsuId
    adjacent: frozenset[ClusterId]
    per_neighbor: dict[ClusterId, Lccl] = field(default_factory=dict)

    def __post_init__(self) -> None:
        stray = set(self.per_neighbor) - set(self.adjacent)
        if stray:
            raise TopologyError(f"{self.rsu} holds snapshots of non-adjacent clusters {sorted(stray)}")


def nccl_absorb(nccl: Nccl, neighbor: ClusterId, lccl: Lccl) -> Nccl:
    """Store ``lccl`` as the snapshot for ``neighbor`` unless it is older than what we hold."""
    if neighbor not in nccl.adjacent:
        raise TopologyError(f"{nccl.rsu} does not face cluster {neighbor}")
    if lccl.cluster != neighbor:
        raise TopologyError(f"LCCL{lccl.cluster} offered as snapshot of cluster {neighbor}")
    held = nccl.per_neighbor.get(neighbor)
    if held is not None and lccl.version < held.version:
        return nccl
    snapshots = dict(nccl.per_neighbor)
    snapshots[neighbor] = lccl
    return replace(nccl, per_neighbor=snapshots)


def nccl_contains(nccl: Nccl, cert: CertificateId) -> tuple[bool, Optional[ClusterId]]:
    """Look ``cert`` up across all neighbour snapshots; lowest cluster id wins ties."""
    for cluster in sorted(nccl.per_neighbor):
        if cert in nccl.per_neighbor[cluster].entries:
            return True, cluster
    return False, None
