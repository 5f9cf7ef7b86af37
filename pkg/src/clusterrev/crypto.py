"""Deterministic stand-ins for the asymmetric primitives the protocol needs.

Nothing here is secure. A key pair is two ids carrying the same ``owner``;
signing, verification, sealing and opening succeed exactly when the owners
match. That pairing rule is all the protocol logic relies on, and it keeps
every run reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Any

from .revocation import CertificateId, ClusterId


class DecryptionFailure(Exception):
    pass


@dataclass(frozen=True)
class PublicKeyId:
    owner: str


@dataclass(frozen=True)
class PrivateKeyId:
    owner: str


@dataclass(frozen=True)
class KeyPair:
    public: PublicKeyId
    private: PrivateKeyId

    @classmethod
    def for_owner(cls, owner: str) -> "KeyPair":
        return cls(PublicKeyId(owner), PrivateKeyId(owner))


@dataclass(frozen=True)
class Certificate:
    id: CertificateId
    holder_pk: PublicKeyId
    issuer: str = "CCA"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("certificate id must be non-empty")


@dataclass(frozen=True)
class Signature:
    signer: str
    digest: str


@dataclass(frozen=True)
class ClusterSignature:
    cluster: ClusterId
    epoch: int = 0

    def __post_init__(self) -> None:
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")


def digest(payload: Any) -> str:
    return hashlib.sha256(repr(payload).encode("utf-8")).hexdigest()[:16]


def sign(payload: Any, sk: PrivateKeyId) -> Signature:
    return Signature(sk.owner, digest(payload))


def verify(payload: Any, sig: Signature, pk: PublicKeyId) -> bool:
    return sig.signer == pk.owner and sig.digest == digest(payload)


def rotate_signature(current: ClusterSignature) -> ClusterSignature:
    return replace(current, epoch=current.epoch + 1)


def verify_cluster_signature(sig: ClusterSignature, current: ClusterSignature) -> bool:
    """A group signature is valid only for the holder's cluster at its current epoch."""
    return sig == current


@dataclass(frozen=True)
class C2CEnvelope:
    recipient_pk: PublicKeyId
    payload: Any
    sender_pk: PublicKeyId
    sender_sig: Signature
    sender_cert: Certificate
    group_sig: ClusterSignature


def seal_c2c(
    payload: Any,
    sender_keys: KeyPair,
    sender_cert: Certificate,
    group_sig: ClusterSignature,
    recipient_pk: PublicKeyId,
) -> C2CEnvelope:
    if sender_cert.holder_pk != sender_keys.public:
        raise ValueError(f"{sender_cert.id}: key pair does not match certificate")
    return C2CEnvelope(
        recipient_pk=recipient_pk,
        payload=payload,
        sender_pk=sender_keys.public,
        sender_sig=sign(payload, sender_keys.private),
        sender_cert=sender_cert,
        group_sig=group_sig,
    )


def open_c2c(envelope: C2CEnvelope, sk: PrivateKeyId) -> C2CEnvelope:
    """Return the envelope contents, or raise if ``sk`` is not the recipient's key."""
    if sk.owner != envelope.recipient_pk.owner:
        raise DecryptionFailure(f"envelope for {envelope.recipient_pk.owner} opened by {sk.owner}")
    return envelope
