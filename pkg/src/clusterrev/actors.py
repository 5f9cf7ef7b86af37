"""State machines for the three protocol roles.

Each transition takes an immutable actor state plus one input and returns
``(new_state, actions)``. Actions are requests to the engine (send, broadcast,
arm a timer, record a metric); nothing here touches a clock or a queue.
Timestamps are integer microseconds.

LCA updates are batched per instant: an Add or Remove changes the list right
away and arms a same-instant ``flush`` timer. The engine runs timers after
every message due at that instant, so one flush carries all of them in a
single broadcast and restarts the periodic countdown.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Union

from .crypto import (
    Certificate,
    ClusterSignature,
    DecryptionFailure,
    KeyPair,
    PublicKeyId,
    open_c2c,
    rotate_signature,
    seal_c2c,
    verify_cluster_signature,
)
from .messages import (
    C2C,
    AddRequest,
    GreyAreaGrant,
    GreyAreaRequest,
    LcclBroadcast,
    LocalClusterNews,
    PkRequest,
    PkResponse,
    RemoveRequest,
    SafetyReport,
    SignatureRotation,
    VehicleHello,
)
from .revocation import (
    CertificateId,
    ClusterId,
    Lccl,
    Nccl,
    RsuId,
    lccl_insert_front,
    lccl_lookup_promote,
    lccl_remove,
    nccl_absorb,
    nccl_contains,
)

MEMBERS = "members"
LOCAL_RSUS = "local_rsus"
NEIGHBOR_RSUS = "neighbor_rsus"

PERIODIC = "periodic"
FLUSH = "flush"

DECRYPTION_FAILURE = "DecryptionFailure"
BAD_CLUSTER_SIGNATURE = "BadClusterSignature"
REVOKED_SENDER = "RevokedSender"


def lca_id(cluster: ClusterId) -> str:
    return f"LCA{cluster}"


def natural_key(name: str) -> tuple:
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", name))


class CannotSend(Exception):
    """The vehicle holds no usable group signature for the requested send."""


# --- actions ---------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    to: str
    msg: Any


@dataclass(frozen=True)
class Broadcast:
    scope: str
    msg: Any


@dataclass(frozen=True)
class SetTimer:
    at: int
    purpose: str = PERIODIC


@dataclass(frozen=True)
class MetricEvent:
    kind: str
    value: int = 1


@dataclass(frozen=True)
class AcceptMessage:
    payload: Any
    sender: CertificateId
    lookup_cost: int


@dataclass(frozen=True)
class RejectMessage:
    reason: str
    detail: str = ""
    lookup_cost: Optional[int] = None


Action = Union[Send, Broadcast, SetTimer, MetricEvent, AcceptMessage, RejectMessage]


# --- local certificate authority -------------------------------------------


@dataclass(frozen=True)
class LcaState:
    cluster: ClusterId
    lccl: Lccl
    group_sig: ClusterSignature
    broadcast_period: int
    next_broadcast_at: int
    local_rsus: frozenset[RsuId] = frozenset()
    neighbor_rsus: frozenset[RsuId] = frozenset()
    news: tuple[str, ...] = ()
    batch_at: Optional[int] = None
    batch: tuple[tuple[tuple, CertificateId], ...] = ()
    dirty: bool = False
    rotated: bool = False

    @property
    def id(self) -> str:
        return lca_id(self.cluster)


def _arm_flush(lca: LcaState, now: int) -> list[Action]:
    return [] if lca.dirty else [SetTimer(now, FLUSH)]


def lca_on_add(lca: LcaState, add: AddRequest, now: int) -> tuple[LcaState, list[Action]]:
    if add.reporter not in lca.local_rsus:
        return lca, [
            RejectMessage("ForeignReporter", f"{add.reporter} is not an RSU of cluster {lca.cluster}"),
            MetricEvent("ForeignReporter"),
        ]
    if add.cert_id in lca.lccl:
        return lca, []
    batch = lca.batch if lca.batch_at == now else ()
    batch += (((natural_key(add.reporter), len(batch)), add.cert_id),)
    block = [cert for _, cert in sorted(batch)]
    rest = tuple(c for c in lca.lccl.entries if c not in block)
    lccl = lccl_insert_front(replace(lca.lccl, entries=rest), block)
    actions = _arm_flush(lca, now)
    return replace(lca, lccl=lccl, batch_at=now, batch=batch, dirty=True), actions


def lca_on_remove(lca: LcaState, rm: RemoveRequest, now: int) -> tuple[LcaState, list[Action]]:
    if rm.cert_id not in lca.lccl:
        return lca, []
    batch = tuple(b for b in lca.batch if b[1] != rm.cert_id) if lca.batch_at == now else ()
    actions = _arm_flush(lca, now)
    return (
        replace(
            lca,
            lccl=lccl_remove(lca.lccl, rm.cert_id),
            group_sig=rotate_signature(lca.group_sig),
            batch_at=now,
            batch=batch,
            dirty=True,
            rotated=True,
        ),
        actions,
    )


def _broadcast_list(lca: LcaState, now: int) -> list[Action]:
    msg = LcclBroadcast(lca.lccl, lca.group_sig.epoch)
    return [
        Broadcast(MEMBERS, msg),
        Broadcast(NEIGHBOR_RSUS, msg),
        SetTimer(now + lca.broadcast_period, PERIODIC),
    ]


def lca_flush(lca: LcaState, now: int) -> tuple[LcaState, list[Action]]:
    """Send the event-triggered broadcast for this instant and restart the countdown."""
    if not lca.dirty:
        return lca, []
    actions: list[Action] = []
    if lca.rotated:
        actions.append(Broadcast(MEMBERS, SignatureRotation(lca.cluster, lca.group_sig.epoch)))
    actions.extend(_broadcast_list(lca, now))
    actions.append(MetricEvent("EventBroadcast"))
    state = replace(
        lca,
        next_broadcast_at=now + lca.broadcast_period,
        batch_at=None,
        batch=(),
        dirty=False,
        rotated=False,
    )
    return state, actions


def lca_on_timer(lca: LcaState, now: int) -> tuple[LcaState, list[Action]]:
    if now != lca.next_broadcast_at:
        # superseded by a reset; the replacement timer is already armed
        return lca, []
    actions = _broadcast_list(lca, now) + [MetricEvent("PeriodicBroadcast")]
    return replace(lca, next_broadcast_at=now + lca.broadcast_period), actions


def lca_on_safety(lca: LcaState, rep: SafetyReport) -> tuple[LcaState, list[Action]]:
    return replace(lca, news=lca.news + (rep.body,)), [Broadcast(LOCAL_RSUS, rep)]


def lca_handle(lca: LcaState, msg: Any, source: str, now: int) -> tuple[LcaState, list[Action]]:
    if isinstance(msg, AddRequest):
        return lca_on_add(lca, msg, now)
    if isinstance(msg, RemoveRequest):
        return lca_on_remove(lca, msg, now)
    if isinstance(msg, SafetyReport):
        return lca_on_safety(lca, msg)
    return lca, [RejectMessage("Unexpected", type(msg).__name__)]


def lca_handle_timer(lca: LcaState, purpose: str, now: int) -> tuple[LcaState, list[Action]]:
    if purpose == FLUSH:
        return lca_flush(lca, now)
    return lca_on_timer(lca, now)


# --- road-side unit ---------------------------------------------------------


@dataclass(frozen=True)
class RsuState:
    id: RsuId
    cluster: ClusterId
    own_keys: KeyPair
    local_lccl: Lccl
    nccl: Nccl
    group_sig: ClusterSignature
    known_vehicle_pks: dict[CertificateId, PublicKeyId] = field(default_factory=dict)
    news: tuple[str, ...] = ()

    @property
    def lca(self) -> str:
        return lca_id(self.cluster)


def _remember_pk(rsu: RsuState, cert: CertificateId, pk: PublicKeyId) -> RsuState:
    if rsu.known_vehicle_pks.get(cert) == pk:
        return rsu
    known = dict(rsu.known_vehicle_pks)
    known[cert] = pk
    return replace(rsu, known_vehicle_pks=known)


def _report_adversary(rsu: RsuState, cert: CertificateId) -> list[Action]:
    """Add/Remove pair for a cert found in the NCCL; empty on a miss."""
    found, origin = nccl_contains(rsu.nccl, cert)
    if not found:
        return []
    return [
        Send(rsu.lca, AddRequest(cert, rsu.id)),
        Send(lca_id(origin), RemoveRequest(cert, rsu.id)),
        MetricEvent("AdversaryDetected"),
    ]


def rsu_on_vehicle_hello(rsu: RsuState, hello: VehicleHello, now: int) -> tuple[RsuState, list[Action]]:
    if hello.cert is None or hello.pk is None:
        return rsu, [RejectMessage("MalformedHello", "hello without certificate or public key")]
    cert = hello.cert.id
    rsu = _remember_pk(rsu, cert, hello.pk)
    provision = LocalClusterNews(rsu.news, rsu.local_lccl, rsu.group_sig, rsu.own_keys.public)
    return rsu, [Send(cert, provision)] + _report_adversary(rsu, cert)


def rsu_on_pk_request(rsu: RsuState, req: PkRequest, requester: str) -> tuple[RsuState, list[Action]]:
    pk = rsu.known_vehicle_pks.get(req.target)
    actions: list[Action] = [Send(requester, PkResponse(req.target, pk))]
    if pk is None:
        actions.append(MetricEvent("PkUnknown"))
    return rsu, actions


def rsu_on_grey_area_request(rsu: RsuState, req: GreyAreaRequest) -> tuple[RsuState, list[Action]]:
    cert = req.cert.id
    rsu = _remember_pk(rsu, cert, req.pk)
    report = _report_adversary(rsu, cert)
    if report:
        return rsu, [RejectMessage("GreyAreaDenied", cert)] + report
    return rsu, [Send(cert, GreyAreaGrant(rsu.group_sig, rsu.local_lccl)), MetricEvent("GreyAreaGranted")]


def rsu_on_safety_report(rsu: RsuState, rep: SafetyReport, source: str) -> tuple[RsuState, list[Action]]:
    if source == rsu.lca:
        return replace(rsu, news=rsu.news + (rep.body,)), []
    return rsu, [Send(rsu.lca, rep)]


def rsu_on_lccl_broadcast(rsu: RsuState, b: LcclBroadcast) -> tuple[RsuState, list[Action]]:
    cluster = b.lccl.cluster
    if cluster == rsu.cluster:
        if b.lccl.version > rsu.local_lccl.version:
            rsu = replace(rsu, local_lccl=b.lccl)
        if b.epoch > rsu.group_sig.epoch:
            rsu = replace(rsu, group_sig=ClusterSignature(cluster, b.epoch))
        return rsu, []
    if cluster in rsu.nccl.adjacent:
        return replace(rsu, nccl=nccl_absorb(rsu.nccl, cluster, b.lccl)), []
    return rsu, [MetricEvent("ForeignBroadcastDropped")]


def rsu_on_rotation(rsu: RsuState, rot: SignatureRotation) -> tuple[RsuState, list[Action]]:
    if rot.cluster == rsu.cluster and rot.new_epoch > rsu.group_sig.epoch:
        return replace(rsu, group_sig=ClusterSignature(rot.cluster, rot.new_epoch)), []
    return rsu, []


def rsu_handle(rsu: RsuState, msg: Any, source: str, now: int) -> tuple[RsuState, list[Action]]:
    if isinstance(msg, VehicleHello):
        return rsu_on_vehicle_hello(rsu, msg, now)
    if isinstance(msg, PkRequest):
        return rsu_on_pk_request(rsu, msg, source)
    if isinstance(msg, GreyAreaRequest):
        return rsu_on_grey_area_request(rsu, msg)
    if isinstance(msg, SafetyReport):
        return rsu_on_safety_report(rsu, msg, source)
    if isinstance(msg, LcclBroadcast):
        return rsu_on_lccl_broadcast(rsu, msg)
    if isinstance(msg, SignatureRotation):
        return rsu_on_rotation(rsu, msg)
    return rsu, [RejectMessage("Unexpected", type(msg).__name__)]


# --- vehicle ----------------------------------------------------------------


@dataclass(frozen=True)
class PendingC2C:
    target: CertificateId
    body: Any
    stale_sig: bool = False


@dataclass(frozen=True)
class VehicleState:
    cert: Certificate
    keys: KeyPair
    lccl: Lccl
    group_sig: ClusterSignature
    current_cluster: ClusterId
    lccl_synced: int = 0
    previous_sig: Optional[ClusterSignature] = None
    in_grey: bool = False
    grant: Optional[GreyAreaGrant] = None
    # workload ground truth; transitions never read it
    is_adversary: bool = False
    pk_cache: dict[CertificateId, PublicKeyId] = field(default_factory=dict)
    pending: tuple[PendingC2C, ...] = ()
    news: tuple[str, ...] = ()

    @property
    def id(self) -> CertificateId:
        return self.cert.id


# vehicle inputs produced by the engine from mobility and scripts


@dataclass(frozen=True)
class CrossBorder:
    rsu: RsuId
    from_cluster: ClusterId
    to_cluster: ClusterId


@dataclass(frozen=True)
class GreyAreaChange:
    entered: bool


@dataclass(frozen=True)
class SendC2CCommand:
    target: CertificateId
    body: Any
    rsu: Optional[RsuId]
    stale_sig: bool = False


@dataclass(frozen=True)
class SafetyCommand:
    body: str
    rsu: Optional[RsuId]


@dataclass(frozen=True)
class GreyRequestCommand:
    rsu: Optional[RsuId]


def _adopt_sig(v: VehicleState, sig: ClusterSignature) -> VehicleState:
    if sig == v.group_sig:
        return v
    return replace(v, previous_sig=v.group_sig, group_sig=sig)


def vehicle_on_provisioning(v: VehicleState, news: LocalClusterNews) -> VehicleState:
    cluster = news.lccl.cluster
    moved = cluster != v.current_cluster
    if moved or news.lccl.version > v.lccl_synced:
        v = replace(v, lccl=news.lccl, lccl_synced=news.lccl.version)
    if moved or news.group_sig.epoch > v.group_sig.epoch:
        v = _adopt_sig(v, news.group_sig)
    return replace(v, current_cluster=cluster, news=news.body)


def vehicle_on_lccl_broadcast(v: VehicleState, b: LcclBroadcast) -> tuple[VehicleState, list[Action]]:
    if b.lccl.cluster != v.current_cluster:
        return v, [MetricEvent("CrossClusterBroadcastDropped")]
    if b.lccl.version > v.lccl_synced:
        v = replace(v, lccl=b.lccl, lccl_synced=b.lccl.version)
    if b.epoch > v.group_sig.epoch:
        v = _adopt_sig(v, ClusterSignature(v.current_cluster, b.epoch))
    return v, []


def vehicle_on_rotation(v: VehicleState, rot: SignatureRotation) -> tuple[VehicleState, list[Action]]:
    if rot.cluster != v.current_cluster:
        return v, [MetricEvent("CrossClusterBroadcastDropped")]
    if rot.new_epoch > v.group_sig.epoch:
        v = _adopt_sig(v, ClusterSignature(rot.cluster, rot.new_epoch))
    return v, []


def _sending_sig(v: VehicleState, stale: bool) -> ClusterSignature:
    if v.in_grey:
        if v.grant is None:
            raise CannotSend(f"{v.id} is in a grey area without a granted signature")
        return v.grant.group_sig
    if stale:
        if v.previous_sig is None:
            raise CannotSend(f"{v.id} has no earlier signature to reuse")
        return v.previous_sig
    return v.group_sig


def vehicle_send_c2c(v: VehicleState, target_pk: PublicKeyId, payload: Any, stale_sig: bool = False) -> C2C:
    """Seal ``payload`` for ``target_pk`` with the vehicle's usable group signature.

    ``stale_sig`` reuses the signature the vehicle held before its last
    change; workloads use it to script an adversary replaying an old epoch.
    """
    sig = _sending_sig(v, stale_sig)
    return C2C(seal_c2c(payload, v.keys, v.cert, sig, target_pk))


def _try_send(v: VehicleState, p: PendingC2C, pk: PublicKeyId) -> list[Action]:
    try:
        msg = vehicle_send_c2c(v, pk, p.body, p.stale_sig)
    except CannotSend:
        return [MetricEvent("CannotSend")]
    return [Send(p.target, msg), MetricEvent("C2CSent")]


def vehicle_on_send_command(v: VehicleState, cmd: SendC2CCommand) -> tuple[VehicleState, list[Action]]:
    p = PendingC2C(cmd.target, cmd.body, cmd.stale_sig)
    if v.in_grey and v.grant is None:
        return v, [MetricEvent("CannotSend")]
    pk = v.pk_cache.get(cmd.target)
    if pk is not None:
        return v, _try_send(v, p, pk)
    if cmd.rsu is None:
        return v, [MetricEvent("NoRsuInReach")]
    return replace(v, pending=v.pending + (p,)), [Send(cmd.rsu, PkRequest(cmd.target))]


def vehicle_on_pk_response(v: VehicleState, resp: PkResponse) -> tuple[VehicleState, list[Action]]:
    waiting = [p for p in v.pending if p.target == resp.target]
    v = replace(v, pending=tuple(p for p in v.pending if p.target != resp.target))
    if resp.target_pk is None:
        return v, [MetricEvent("C2CAbandoned") for _ in waiting]
    cache = dict(v.pk_cache)
    cache[resp.target] = resp.target_pk
    v = replace(v, pk_cache=cache)
    actions: list[Action] = []
    for p in waiting:
        actions.extend(_try_send(v, p, resp.target_pk))
    return v, actions


def receiving_credentials(v: VehicleState) -> tuple[ClusterSignature, Lccl]:
    if v.in_grey and v.grant is not None:
        return v.grant.group_sig, v.grant.lccl
    return v.group_sig, v.lccl


def vehicle_receive_c2c(v: VehicleState, msg: C2C) -> tuple[VehicleState, Union[AcceptMessage, RejectMessage]]:
    """Open, check the group signature, then check the sender against the LCCL.

    A listed sender is moved to the front of the receiver's list and the
    reordered list is kept.
    """
    try:
        env = open_c2c(msg.envelope, v.keys.private)
    except DecryptionFailure as exc:
        return v, RejectMessage(DECRYPTION_FAILURE, str(exc))
    sig, lccl = receiving_credentials(v)
    if not verify_cluster_signature(env.group_sig, sig):
        return v, RejectMessage(BAD_CLUSTER_SIGNATURE, f"sealed {env.group_sig}, holding {sig}")
    found, promoted, cost = lccl_lookup_promote(lccl, env.sender_cert.id)
    if v.in_grey and v.grant is not None:
        v = replace(v, grant=replace(v.grant, lccl=promoted))
    else:
        v = replace(v, lccl=promoted)
    if found:
        return v, RejectMessage(REVOKED_SENDER, env.sender_cert.id, cost)
    return v, AcceptMessage(env.payload, env.sender_cert.id, cost)


def vehicle_handle(v: VehicleState, msg: Any, source: str, now: int) -> tuple[VehicleState, list[Action]]:
    if isinstance(msg, C2C):
        v, verdict = vehicle_receive_c2c(v, msg)
        return v, [verdict]
    if isinstance(msg, LcclBroadcast):
        return vehicle_on_lccl_broadcast(v, msg)
    if isinstance(msg, SignatureRotation):
        return vehicle_on_rotation(v, msg)
    if isinstance(msg, LocalClusterNews):
        return vehicle_on_provisioning(v, msg), []
    if isinstance(msg, PkResponse):
        return vehicle_on_pk_response(v, msg)
    if isinstance(msg, GreyAreaGrant):
        return replace(v, grant=msg), []
    if isinstance(msg, CrossBorder):
        return v, [Send(msg.rsu, VehicleHello(v.cert, v.keys.public))]
    if isinstance(msg, GreyAreaChange):
        if msg.entered:
            return replace(v, in_grey=True), []
        return replace(v, in_grey=False, grant=None), []
    if isinstance(msg, SendC2CCommand):
        return vehicle_on_send_command(v, msg)
    if isinstance(msg, SafetyCommand):
        if msg.rsu is None:
            return v, [MetricEvent("NoRsuInReach")]
        return v, [Send(msg.rsu, SafetyReport(msg.body, v.id))]
    if isinstance(msg, GreyRequestCommand):
        if msg.rsu is None:
            return v, [MetricEvent("NoRsuInReach")]
        return v, [Send(msg.rsu, GreyAreaRequest(v.cert, v.keys.public))]
    return v, [RejectMessage("Unexpected", type(msg).__name__)]

