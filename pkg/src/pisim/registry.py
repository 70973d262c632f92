"""Server-side partner registry: onboarding, rotation, revocation, triple
validation and an append-only audit trail.
"""
from __future__ import annotations

import hmac
import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable

from .errors import BadProviderCredential, CorruptFile, DuplicateActive, NotFound, TransportError

SCHEMA_VERSION = 1


class Status(str, Enum):
    ACTIVE = "ACTIVE"
    REVOKED = "REVOKED"


class Verdict(str, Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"


class AuditReason(str, Enum):
    ACCEPTED = "ACCEPTED"
    NO_RECORD = "NO_RECORD"
    REVOKED = "REVOKED"
    CERT_MISMATCH = "CERT_MISMATCH"
    BAD_PROVIDER_CREDENTIAL = "BAD_PROVIDER_CREDENTIAL"


@dataclass(frozen=True)
class Triple:
    package_name: str
    cert_hash: str | None
    client_id: str

    def to_dict(self) -> dict[str, Any]:
        return {"packageName": self.package_name, "certHash": self.cert_hash, "clientId": self.client_id}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Triple":
        return cls(str(d["packageName"]), d.get("certHash"), str(d["clientId"]))


@dataclass
class PartnerRecord:
    package_name: str
    cert_hash: str
    client_id: str
    status: Status
    registered_at: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "packageName": self.package_name,
            "certHash": self.cert_hash,
            "clientId": self.client_id,
            "status": self.status.value,
            "registeredAt": self.registered_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PartnerRecord":
        return cls(
            str(d["packageName"]), str(d["certHash"]), str(d["clientId"]), Status(d["status"]), int(d["registeredAt"])
        )


@dataclass(frozen=True)
class AuditEntry:
    timestamp: int
    triple: Triple
    verdict: Verdict
    reason: AuditReason
    include_cert: bool = True

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT

    def to_dict(self) -> dict[str, Any]:
        return {
            "timestamp": self.timestamp,
            "triple": self.triple.to_dict(),
            "verdict": self.verdict.value,
            "reason": self.reason.value,
            "includeCert": self.include_cert,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AuditEntry":
        return cls(
            int(d["timestamp"]),
            Triple.from_dict(d["triple"]),
            Verdict(d["verdict"]),
            AuditReason(d["reason"]),
            bool(d["includeCert"]),
        )


class Registry:
    """Partner database.

    Timestamps are simulation ticks unless a ``clock`` is supplied (the HTTP
    server passes wall-clock milliseconds). All public methods serialize on one
    lock so the audit order is a total order under concurrent requests.
    """

    def __init__(self, provider_credential: str, clock: Callable[[], int] | None = None) -> None:
        self._credential = provider_credential
        self._clock = clock
        self._tick = 0
        self._lock = threading.RLock()
        self.records: list[PartnerRecord] = []
        self.audit: list[AuditEntry] = []

    def _now(self) -> int:
        if self._clock is not None:
            t = max(int(self._clock()), self._tick)
        else:
            t = self._tick + 1
        self._tick = t
        return t

    def _active(self, package_name: str, client_id: str) -> PartnerRecord | None:
        for r in self.records:
            if r.status is Status.ACTIVE and r.package_name == package_name and r.client_id == client_id:
                return r
        return None

    def check_credential(self, credential: str | None) -> bool:
        return credential is not None and hmac.compare_digest(str(credential), self._credential)

    # lifecycle

    def register_partner(self, package_name: str, cert_hash: str, client_id: str) -> PartnerRecord:
        with self._lock:
            if self._active(package_name, client_id) is not None:
                raise DuplicateActive(f"{package_name}/{client_id}")
            rec = PartnerRecord(package_name, cert_hash, client_id, Status.ACTIVE, self._now())
            self.records.append(rec)
            return rec

    def rotate_certificate(self, package_name: str, client_id: str, new_cert_hash: str) -> PartnerRecord:
        with self._lock:
            rec = self._active(package_name, client_id)
            if rec is None:
                raise NotFound(f"{package_name}/{client_id}")
            self._now()
            rec.cert_hash = new_cert_hash
            return rec

    def revoke_partner(self, package_name: str, client_id: str) -> None:
        with self._lock:
            rec = self._active(package_name, client_id)
            if rec is None:
                raise NotFound(f"{package_name}/{client_id}")
            self._now()
            rec.status = Status.REVOKED

    # validation

    def validate(self, triple: Triple, provider_credential: str | None, include_cert: bool = True) -> AuditEntry:
        """Check a triple and append exactly one audit entry for the call."""
        with self._lock:
            if not self.check_credential(provider_credential):
                self._append(triple, Verdict.REJECT, AuditReason.BAD_PROVIDER_CREDENTIAL, include_cert)
                raise BadProviderCredential("provider credential rejected")
            rec = self._active(triple.package_name, triple.client_id)
            if rec is not None:
                if not include_cert or rec.cert_hash == triple.cert_hash:
                    verdict, reason = Verdict.ACCEPT, AuditReason.ACCEPTED
                else:
                    verdict, reason = Verdict.REJECT, AuditReason.CERT_MISMATCH
            elif any(
                r.package_name == triple.package_name and r.client_id == triple.client_id for r in self.records
            ):
                verdict, reason = Verdict.REJECT, AuditReason.REVOKED
            else:
                verdict, reason = Verdict.REJECT, AuditReason.NO_RECORD
            return self._append(triple, verdict, reason, include_cert)

    def _append(self, triple: Triple, verdict: Verdict, reason: AuditReason, include_cert: bool) -> AuditEntry:
        entry = AuditEntry(self._now(), triple, verdict, reason, include_cert)
        self.audit.append(entry)
        return entry

    def active_cert_hashes(self, package_name: str, client_id: str, provider_credential: str | None) -> set[str]:
        """Registered signing hashes for an active partner (read-only, not audited)."""
        with self._lock:
            if not self.check_credential(provider_credential):
                raise BadProviderCredential("provider credential rejected")
            rec = self._active(package_name, client_id)
            return {rec.cert_hash} if rec is not None else set()

    def list_audit(
        self,
        package_name: str | None = None,
        client_id: str | None = None,
        verdict: Verdict | str | None = None,
    ) -> list[AuditEntry]:
        wanted = Verdict(verdict) if verdict is not None else None
        with self._lock:
            out = list(self.audit)
        if package_name is not None:
            out = [e for e in out if e.triple.package_name == package_name]
        if client_id is not None:
            out = [e for e in out if e.triple.client_id == client_id]
        if wanted is not None:
            out = [e for e in out if e.verdict is wanted]
        return out

    # persistence

    def to_dict(self) -> dict[str, Any]:
        with self._lock:
            return {
                "schemaVersion": SCHEMA_VERSION,
                "partners": [r.to_dict() for r in self.records],
                "audit": [e.to_dict() for e in self.audit],
            }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def from_dict(
        cls, doc: dict[str, Any], provider_credential: str, clock: Callable[[], int] | None = None
    ) -> "Registry":
        reg = cls(provider_credential, clock)
        try:
            if doc["schemaVersion"] != SCHEMA_VERSION:
                raise CorruptFile(f"unsupported schemaVersion {doc['schemaVersion']!r}")
            reg.records = [PartnerRecord.from_dict(d) for d in doc["partners"]]
            reg.audit = [AuditEntry.from_dict(d) for d in doc["audit"]]
        except CorruptFile:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise CorruptFile(f"malformed registry document: {exc!r}") from exc
        stamps = [r.registered_at for r in reg.records] + [e.timestamp for e in reg.audit]
        reg._tick = max(stamps, default=0)
        return reg

    @classmethod
    def load(cls, path: str | Path, provider_credential: str, clock: Callable[[], int] | None = None) -> "Registry":
        text = Path(path).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorruptFile(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise CorruptFile(f"{path}: top level is not an object")
        return cls.from_dict(doc, provider_credential, clock)


class LocalRegistryClient:
    """In-process transport from the provider's service to the registry.

    ``available = False`` simulates the backend being unreachable.
    """

    def __init__(self, registry: Registry) -> None:
        self.registry = registry
        self.available = True
        self.calls = 0

    def _check(self) -> None:
        self.calls += 1
        if not self.available:
            raise TransportError("registry unreachable")

    def validate(self, triple: Triple, provider_credential: str | None, include_cert: bool = True) -> AuditEntry:
        self._check()
        return self.registry.validate(triple, provider_credential, include_cert)

    def active_cert_hashes(self, package_name: str, client_id: str, provider_credential: str | None) -> set[str]:
        self._check()
        return self.registry.active_cert_hashes(package_name, client_id, provider_credential)
