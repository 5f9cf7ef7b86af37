"""Global-CRL comparison model.

One authority keeps every revoked certificate in a single append-only list
and pushes the whole list to each vehicle. Searching it is a plain linear
scan with no reordering.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .revocation import CertificateId, scan_cost


@dataclass(frozen=True)
class GlobalCrl:
    entries: tuple[CertificateId, ...] = ()
    entry_size_bytes: int = 100
    version: int = 0

    @property
    def size_bytes(self) -> int:
        return len(self.entries) * self.entry_size_bytes


@dataclass(frozen=True)
class DistributionModel:
    """Per-vehicle delivery speed of a list push.

    The 4000 B/s default puts a 2.5 MB list at 625 s, about ten minutes. It is
    a calibration choice, not a measurement.
    """

    bandwidth_bytes_per_s: float = 4000.0
    overhead_s: float = 0.0

    def __post_init__(self) -> None:
        if self.bandwidth_bytes_per_s <= 0:
            raise ValueError("bandwidth must be positive")
        if self.overhead_s < 0:
            raise ValueError("overhead must be non-negative")

    def time_for(self, size_bytes: int) -> float:
        return size_bytes / self.bandwidth_bytes_per_s + self.overhead_s


def crl_revoke(crl: GlobalCrl, cert: CertificateId) -> GlobalCrl:
    if cert in crl.entries:
        return crl
    return replace(crl, entries=crl.entries + (cert,), version=crl.version + 1)


def crl_revoke_all(crl: GlobalCrl, certs) -> GlobalCrl:
    """Fold :func:`crl_revoke` over ``certs`` in one pass."""
    seen = set(crl.entries)
    added = []
    for cert in certs:
        if cert not in seen:
            seen.add(cert)
            added.append(cert)
    if not added:
        return crl
    return replace(crl, entries=crl.entries + tuple(added), version=crl.version + len(added))


def crl_lookup(crl: GlobalCrl, cert: CertificateId) -> tuple[bool, int]:
    return scan_cost(crl.entries, cert)


def crl_distribution_time(crl: GlobalCrl, model: DistributionModel) -> float:
    return model.time_for(crl.size_bytes)


def padding_ids(count: int) -> list[CertificateId]:
    """Synthetic ids standing in for revocations from outside the simulated area."""
    return [f"CRL-{i:06d}" for i in range(count)]
