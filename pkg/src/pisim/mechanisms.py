"""The eight IPC authentication mechanisms, their attack primitives, and the
five-property comparison matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .binder import Kernel, ProcessHandle, Transaction
from .device import Device, InstalledApp, Manifest, digest_hex
from .errors import (
    CallingIdentityOutOfScope,
    CodeMismatch,
    IncompleteOutcomes,
    NoActivityContext,
    UnknownFlow,
)
from .pending_intent import PendingIntentToken, get_creator_package


class Mechanism(str, Enum):
    START_ACTIVITY_FOR_RESULT = "startActivityForResult"
    GET_REFERRER = "getReferrer"
    PI_CREATOR = "PI.getCreatorPackage"
    BROADCAST_PERMISSION = "BroadcastReceiver"
    PROVIDER_PERMISSION = "ContentProvider"
    KNOWN_SIGNERS = "knownSigners"
    PKCE = "PKCE"
    BOUND_SERVICE = "BoundService"


class Property(str, Enum):
    KERNEL_BACKED = "kernelBacked"
    UNFORGEABLE = "unforgeable"
    REPLAY_RESISTANT = "replayResistant"
    SCALABLE = "scalableNoManifest"
    BIDIRECTIONAL = "bidirectional"


class Mark(str, Enum):
    YES = "YES"
    NO = "NO"
    PARTIAL = "PARTIAL"


class Provenance(str, Enum):
    SCENARIO = "SCENARIO"
    ANALYTIC = "ANALYTIC"


class Reason(str, Enum):
    OK = "OK"
    NOT_ALLOWLISTED = "NOT_ALLOWLISTED"
    UNKNOWN_CALLER = "UNKNOWN_CALLER"
    MISSING_PERMISSION = "MISSING_PERMISSION"
    UNKNOWN_SIGNER = "UNKNOWN_SIGNER"
    STALE_EVIDENCE = "STALE_EVIDENCE"
    CODE_MISMATCH = "CODE_MISMATCH"
    UNKNOWN_FLOW = "UNKNOWN_FLOW"


class PermissionKind(str, Enum):
    BROADCAST = "BROADCAST"
    PROVIDER = "PROVIDER"


@dataclass(frozen=True)
class AuthDecision:
    accepted: bool
    authenticated_as: str | None
    reason: Reason
    # identity the check actually looked at (creator, referrer, claimed client, resolved uid)
    subject: str | None = None

    def __post_init__(self) -> None:
        if self.accepted and not self.authenticated_as:
            raise ValueError("an accepted decision must name who was authenticated")

    @classmethod
    def accept(cls, identity: str, subject: str | None = None) -> "AuthDecision":
        return cls(True, identity, Reason.OK, subject if subject is not None else identity)

    @classmethod
    def reject(cls, reason: Reason, subject: str | None = None) -> "AuthDecision":
        return cls(False, None, reason, subject)


@dataclass(frozen=True)
class AuthRequest:
    """Evidence plus a payload that rides beside it, fully caller-controlled."""

    evidence: Any
    claimed_identity: str | None = None
    content: Any = None


# --- PendingIntent creator check ------------------------------------------------

def authenticate_pi_creator(token: PendingIntentToken, allowlist: Iterable[str]) -> AuthDecision:
    creator = get_creator_package(token)
    if creator in set(allowlist):
        return AuthDecision.accept(creator)
    return AuthDecision.reject(Reason.NOT_ALLOWLISTED, creator)


# --- Bound service + kernel uid -------------------------------------------------

def authenticate_bound_uid(txn: Transaction, device: Device, allowlist: Iterable[str]) -> AuthDecision:
    pkgs = device.get_packages_for_uid(txn.calling_uid)
    if not pkgs:
        return AuthDecision.reject(Reason.UNKNOWN_CALLER)
    caller = pkgs[0]
    if caller in set(allowlist):
        return AuthDecision.accept(caller)
    return AuthDecision.reject(Reason.NOT_ALLOWLISTED, caller)


# --- startActivityForResult / getReferrer ---------------------------------------

class ReferrerEvidence:
    """Referrer observed by an activity launched for a result.

    Delivered once per launch; a second presentation of the same object is
    treated as a replay.
    """

    __slots__ = ("referrer", "activity_context", "_consumed")

    def __init__(self, referrer: str, activity_context: bool = True) -> None:
        self.referrer = referrer
        self.activity_context = activity_context
        self._consumed = False

    def __repr__(self) -> str:
        return f"ReferrerEvidence({self.referrer!r}, activity_context={self.activity_context})"


def launch_for_result(kernel: Kernel, caller: ProcessHandle, activity_context: bool = True) -> ReferrerEvidence:
    """Honest launch: the system fills in the caller's own package."""
    return ReferrerEvidence(kernel.package_of(caller), activity_context)


def spoof_via_task_hijack(kernel: Kernel, attacker: ProcessHandle, victim: str) -> ReferrerEvidence:
    kernel.check_handle(attacker)
    return ReferrerEvidence(victim, activity_context=True)


def authenticate_referrer(evidence: ReferrerEvidence, allowlist: Iterable[str]) -> AuthDecision:
    if not evidence.activity_context:
        raise NoActivityContext("referrer is only available to an activity launch")
    if evidence._consumed:
        return AuthDecision.reject(Reason.STALE_EVIDENCE, evidence.referrer)
    evidence._consumed = True
    if evidence.referrer in set(allowlist):
        return AuthDecision.accept(evidence.referrer)
    return AuthDecision.reject(Reason.NOT_ALLOWLISTED, evidence.referrer)


# --- manifest-declared permissions ----------------------------------------------

def authenticate_custom_permission(
    caller: InstalledApp, permission_name: str, kind: PermissionKind = PermissionKind.BROADCAST
) -> AuthDecision:
    # the platform enforces the grant; the receiving service never learns who the caller was
    if permission_name in caller.manifest.used_permissions:
        return AuthDecision.accept(caller.package_name)
    return AuthDecision.reject(Reason.MISSING_PERMISSION, caller.package_name)


def authenticate_known_signers(caller: InstalledApp, host_manifest: Manifest) -> AuthDecision:
    if caller.cert_hash in host_manifest.known_signer_hashes:
        return AuthDecision.accept(caller.package_name)
    return AuthDecision.reject(Reason.UNKNOWN_SIGNER, caller.package_name)


# --- PKCE -----------------------------------------------------------------------

def pkce_challenge(verifier: str) -> str:
    return digest_hex(verifier.encode())


@dataclass
class PkceFlow:
    flow_id: int
    code_challenge: str
    claimed_client_id: str
    issued_code: str
    completed: bool = False


class PkceServer:
    """Authorization server side of a PKCE code exchange.

    Session continuity only: whoever holds the verifier for a flow completes it,
    and is then taken to be whichever client id the flow claimed.
    """

    def __init__(self, kernel: Kernel, registered_clients: Iterable[str] = ()) -> None:
        self.kernel = kernel
        self.registered_clients = set(registered_clients)
        self.flows: dict[int, PkceFlow] = {}
        self._next_flow = 1

    def initiate(self, initiator: ProcessHandle, code_challenge: str, claimed_client_id: str) -> tuple[int, str]:
        self.kernel.check_handle(initiator)
        flow_id = self._next_flow
        self._next_flow += 1
        code = digest_hex(f"pkce-code:{flow_id}:{code_challenge}".encode())[:32]
        self.flows[flow_id] = PkceFlow(flow_id, code_challenge, claimed_client_id, code)
        return flow_id, code

    def exchange(self, flow_id: int, code: str, verifier: str | None) -> AuthDecision:
        flow = self.flows.get(flow_id)
        if flow is None:
            raise UnknownFlow(str(flow_id))
        if flow.completed or code != flow.issued_code:
            raise CodeMismatch(f"flow {flow_id}: code not valid")
        if verifier is None or pkce_challenge(verifier) != flow.code_challenge:
            raise CodeMismatch(f"flow {flow_id}: verifier does not match challenge")
        flow.completed = True
        if flow.claimed_client_id not in self.registered_clients:
            return AuthDecision.reject(Reason.NOT_ALLOWLISTED, flow.claimed_client_id)
        return AuthDecision.accept(flow.claimed_client_id)


# --- replay ---------------------------------------------------------------------

@dataclass
class ReplayContext:
    """What a replaying attacker and the checking side have at hand."""

    kernel: Kernel
    replayer: ProcessHandle
    allowlist: frozenset[str] = frozenset()
    permission: str = ""
    host_manifest: Manifest = field(default_factory=Manifest)
    pkce: PkceServer | None = None
    # (provider package, service name) of a service whose handler returns an AuthDecision
    bound_service: tuple[str, str] | None = None
    tick: int = 0


def capture_and_replay(mechanism: Mechanism, evidence: Any, ctx: ReplayContext) -> AuthDecision:
    """Re-present previously observed evidence one tick later, as ``ctx.replayer``."""
    ctx.tick += 1
    m = Mechanism(mechanism)
    if m is Mechanism.PI_CREATOR:
        return authenticate_pi_creator(evidence, ctx.allowlist)
    if m in (Mechanism.START_ACTIVITY_FOR_RESULT, Mechanism.GET_REFERRER):
        return authenticate_referrer(evidence, ctx.allowlist)
    replayer_app = ctx.kernel.device.get_app(ctx.kernel.package_of(ctx.replayer))
    if m is Mechanism.BROADCAST_PERMISSION:
        # a re-sent broadcast is checked against whoever sends it now
        return authenticate_custom_permission(replayer_app, ctx.permission, PermissionKind.BROADCAST)
    if m is Mechanism.PROVIDER_PERMISSION:
        return authenticate_custom_permission(replayer_app, ctx.permission, PermissionKind.PROVIDER)
    if m is Mechanism.KNOWN_SIGNERS:
        return authenticate_known_signers(replayer_app, ctx.host_manifest)
    if m is Mechanism.PKCE:
        flow_id, code = evidence
        try:
            return ctx.pkce.exchange(flow_id, code, None)
        except UnknownFlow:
            return AuthDecision.reject(Reason.UNKNOWN_FLOW)
        except CodeMismatch:
            return AuthDecision.reject(Reason.CODE_MISMATCH)
    if m is Mechanism.BOUND_SERVICE:
        try:
            evidence.calling_uid
        except CallingIdentityOutOfScope:
            pass
        else:  # pragma: no cover - would mean a transaction escaped its handler
            raise AssertionError("captured transaction still exposes a calling uid")
        provider, name = ctx.bound_service
        conn = ctx.kernel.bind_service(ctx.replayer, provider, name)
        return ctx.kernel.transact(conn, evidence.payload)
    raise ValueError(m)


# --- property matrix ------------------------------------------------------------

TABLE_ORDER = list(Mechanism)
PROPERTY_ORDER = list(Property)

# Cells not decided by running a scenario: the permission rows' kernel column is
# "partially" (the platform enforces, the service never sees the caller), and
# bidirectional support is only exercised for the two mechanisms that have it.
ANALYTIC_CELLS: dict[tuple[Mechanism, Property], Mark] = {
    (Mechanism.BROADCAST_PERMISSION, Property.KERNEL_BACKED): Mark.PARTIAL,
    (Mechanism.PROVIDER_PERMISSION, Property.KERNEL_BACKED): Mark.PARTIAL,
    (Mechanism.KNOWN_SIGNERS, Property.KERNEL_BACKED): Mark.PARTIAL,
    (Mechanism.START_ACTIVITY_FOR_RESULT, Property.BIDIRECTIONAL): Mark.NO,
    (Mechanism.GET_REFERRER, Property.BIDIRECTIONAL): Mark.NO,
    (Mechanism.BROADCAST_PERMISSION, Property.BIDIRECTIONAL): Mark.NO,
    (Mechanism.PROVIDER_PERMISSION, Property.BIDIRECTIONAL): Mark.NO,
    (Mechanism.KNOWN_SIGNERS, Property.BIDIRECTIONAL): Mark.NO,
    (Mechanism.PKCE, Property.BIDIRECTIONAL): Mark.NO,
}

SCENARIO_CELLS: tuple[tuple[Mechanism, Property], ...] = tuple(
    (m, p) for m in TABLE_ORDER for p in PROPERTY_ORDER if (m, p) not in ANALYTIC_CELLS
)


@dataclass
class PropertyMatrix:
    marks: dict[tuple[Mechanism, Property], Mark]
    provenance: dict[tuple[Mechanism, Property], Provenance]

    def mark(self, mechanism: Mechanism, prop: Property) -> Mark:
        return self.marks[(mechanism, prop)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schemaVersion": 1,
            "properties": [p.value for p in PROPERTY_ORDER],
            "mechanisms": {
                m.value: {p.value: self.marks[(m, p)].value for p in PROPERTY_ORDER} for m in TABLE_ORDER
            },
            "provenance": {
                m.value: {p.value: self.provenance[(m, p)].value for p in PROPERTY_ORDER} for m in TABLE_ORDER
            },
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PropertyMatrix":
        marks, prov = {}, {}
        for m in TABLE_ORDER:
            for p in PROPERTY_ORDER:
                marks[(m, p)] = Mark(doc["mechanisms"][m.value][p.value])
                prov[(m, p)] = Provenance(doc["provenance"][m.value][p.value])
        return cls(marks, prov)

    def diff(self, fixture: Mapping[str, Any]) -> list[str]:
        """Cells that disagree with a fixture document (empty list: identical)."""
        out = []
        rows = fixture["mechanisms"]
        if set(rows) != {m.value for m in TABLE_ORDER}:
            out.append(f"fixture rows {sorted(rows)} do not match mechanisms")
            return out
        for m in TABLE_ORDER:
            for p in PROPERTY_ORDER:
                want = rows[m.value].get(p.value)
                got = self.marks[(m, p)].value
                if want != got:
                    out.append(f"{m.value}/{p.value}: fixture={want} derived={got}")
        return out


def build_property_matrix(outcomes: Mapping[tuple[Mechanism, Property], bool]) -> PropertyMatrix:
    """``outcomes`` maps each scenario-backed cell to whether the property held."""
    missing = [c for c in SCENARIO_CELLS if c not in outcomes]
    if missing:
        names = ", ".join(f"{m.value}/{p.value}" for m, p in missing)
        raise IncompleteOutcomes(f"no scenario outcome for: {names}")
    marks: dict[tuple[Mechanism, Property], Mark] = {}
    prov: dict[tuple[Mechanism, Property], Provenance] = {}
    for cell in SCENARIO_CELLS:
        marks[cell] = Mark.YES if outcomes[cell] else Mark.NO
        prov[cell] = Provenance.SCENARIO
    for cell, mark in ANALYTIC_CELLS.items():
        marks[cell] = mark
        prov[cell] = Provenance.ANALYTIC
    return PropertyMatrix(marks, prov)


def load_fixture(path: str | Path | None = None) -> dict[str, Any]:
    if path is None:
        text = resources.files("pisim.data").joinpath("table1.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)
