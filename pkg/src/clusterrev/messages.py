"""Wire messages and their canonical text encoding.

Every exchange between actors is one of the message classes below. The
canonical form is compact JSON with a leading ``"type"`` key, fields in
declaration order and list entries front to back; traces and golden files
are built from it. Byte sizes used for metering come from
:class:`MessageSizes`, never from the encoded text.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .crypto import (
    C2CEnvelope,
    Certificate,
    ClusterSignature,
    KeyPair,
    PrivateKeyId,
    PublicKeyId,
    Signature,
)
from .revocation import CertificateId, ClusterId, Lccl, Nccl, RsuId, lccl_size_bytes


@dataclass(frozen=True)
class VehicleHello:
    cert: Optional[Certificate]
    pk: Optional[PublicKeyId]


@dataclass(frozen=True)
class AddRequest:
    cert_id: CertificateId
    reporter: RsuId


@dataclass(frozen=True)
class RemoveRequest:
    cert_id: CertificateId
    reporter: RsuId


@dataclass(frozen=True)
class LcclBroadcast:
    lccl: Lccl
    epoch: int


@dataclass(frozen=True)
class SignatureRotation:
    cluster: ClusterId
    new_epoch: int


@dataclass(frozen=True)
class PkRequest:
    target: CertificateId


@dataclass(frozen=True)
class PkResponse:
    target: CertificateId
    target_pk: Optional[PublicKeyId]


@dataclass(frozen=True)
class C2C:
    envelope: C2CEnvelope


@dataclass(frozen=True)
class SafetyReport:
    body: str
    reporter: CertificateId


@dataclass(frozen=True)
class LocalClusterNews:
    """Provisioning bundle handed to a vehicle at the border handshake."""

    body: tuple[str, ...]
    lccl: Lccl
    group_sig: ClusterSignature
    rsu_pk: PublicKeyId


@dataclass(frozen=True)
class GreyAreaRequest:
    cert: Certificate
    pk: PublicKeyId


@dataclass(frozen=True)
class GreyAreaGrant:
    group_sig: ClusterSignature
    lccl: Lccl


ProtocolMessage = Union[
    VehicleHello,
    AddRequest,
    RemoveRequest,
    LcclBroadcast,
    SignatureRotation,
    PkRequest,
    PkResponse,
    C2C,
    SafetyReport,
    LocalClusterNews,
    GreyAreaRequest,
    GreyAreaGrant,
]

MESSAGE_TYPES: tuple[type, ...] = typing.get_args(ProtocolMessage)

DEFAULT_BASE_SIZES: dict[str, int] = {
    "VehicleHello": 200,
    "AddRequest": 160,
    "RemoveRequest": 160,
    "LcclBroadcast": 96,
    "SignatureRotation": 96,
    "PkRequest": 48,
    "PkResponse": 80,
    "C2C": 400,
    "SafetyReport": 256,
    "LocalClusterNews": 256,
    "GreyAreaRequest": 200,
    "GreyAreaGrant": 96,
}


@dataclass(frozen=True)
class MessageSizes:
    entry_size_bytes: int = 100
    header_bytes: int = 16
    base: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_BASE_SIZES))

    def of(self, msg: ProtocolMessage) -> int:
        """Configured base size, plus the list payload for messages that carry an LCCL."""
        size = self.base[type(msg).__name__]
        lccl = getattr(msg, "lccl", None)
        if lccl is not None:
            size += lccl_size_bytes(lccl, self.entry_size_bytes, self.header_bytes)
        return size


def kind(msg: Any) -> str:
    return type(msg).__name__


# --- canonical encoding -----------------------------------------------------

_WIRE_TYPES: dict[str, type] = {
    t.__name__: t
    for t in (
        *MESSAGE_TYPES,
        Lccl,
        Nccl,
        Certificate,
        ClusterSignature,
        PublicKeyId,
        PrivateKeyId,
        KeyPair,
        Signature,
        C2CEnvelope,
    )
}


def to_wire(obj: Any) -> Any:
    """Convert ``obj`` into plain JSON-compatible data with a fixed field order."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out: dict[str, Any] = {"type": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = to_wire(getattr(obj, f.name))
        return out
    if isinstance(obj, (tuple, list)):
        return [to_wire(x) for x in obj]
    if isinstance(obj, frozenset):
        return [to_wire(x) for x in sorted(obj)]
    if isinstance(obj, dict):
        return {str(k): to_wire(obj[k]) for k in sorted(obj)}
    if obj is None or isinstance(obj, (str, int, float, bool)):
        return obj
    raise TypeError(f"cannot encode {type(obj).__name__}")


def canonical_text(obj: Any) -> str:
    return json.dumps(to_wire(obj), separators=(",", ":"), ensure_ascii=True)


def _hints(cls: type) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _decode_as(tp: Any, data: Any) -> Any:
    if data is None:
        return None
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if isinstance(data, dict) and "type" in data:
            return from_wire(data)
        return _decode_as(inner[0], data) if len(inner) == 1 else data
    if origin is tuple:
        return tuple(_decode_as(args[0], x) for x in data)
    if origin is frozenset:
        return frozenset(_decode_as(args[0], x) for x in data)
    if origin is dict:
        kt, vt = args
        return {_decode_as(kt, k): _decode_as(vt, v) for k, v in data.items()}
    if isinstance(data, dict) and "type" in data:
        return from_wire(data)
    if tp is int:
        return int(data)
    return data


def from_wire(data: dict[str, Any]) -> Any:
    """Inverse of :func:`to_wire` for every type in the wire registry."""
    cls = _WIRE_TYPES[data["type"]]
    hints = _hints(cls)
    kwargs = {f.name: _decode_as(hints[f.name], data[f.name]) for f in dataclasses.fields(cls)}
    return cls(**kwargs)


def parse_canonical(text: str) -> Any:
    return from_wire(json.loads(text))
