"""SDK provider publish service.

Four modes share one handler: the PendingIntent-creator check that the attack
defeats, the three-layer defense (kernel uid -> signing certificate -> registry
triple), and two cut-down variants that each drop part of the defense.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Protocol

from .binder import Kernel, ProcessHandle, ServiceRegistration, Transaction, get_calling_uid
from .device import Device
from .errors import BadProviderCredential, TransportError
from .mechanisms import authenticate_pi_creator
from .pending_intent import PendingIntentToken
from .registry import AuditEntry, Triple


class ProviderMode(str, Enum):
    VULNERABLE_PI = "VULNERABLE_PI"
    SECURE_3LAYER = "SECURE_3LAYER"
    ALT_A_HARDCODED = "ALT_A_HARDCODED"
    ALT_B_NO_CERT = "ALT_B_NO_CERT"


class Layer(str, Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"


class RegistryClient(Protocol):
    def validate(self, triple: Triple, provider_credential: str | None, include_cert: bool = True) -> AuditEntry: ...

    def active_cert_hashes(self, package_name: str, client_id: str, provider_credential: str | None) -> set[str]: ...


@dataclass(frozen=True)
class PublishRequest:
    content: Any
    credential: Any = None
    client_id: str = ""


@dataclass
class ProviderConfig:
    mode: ProviderMode
    provider_credential: str = ""
    registry: RegistryClient | None = None
    hardcoded_hashes: frozenset[str] = frozenset()
    pi_allowlist: frozenset[str] = frozenset()
    # fault injection for layer-necessity experiments (SECURE_3LAYER only).
    # Dropping L2 removes the certificate from the check entirely, L3 included.
    disabled_layers: frozenset[Layer] = frozenset()


@dataclass(frozen=True)
class PublishOutcome:
    accepted: bool
    attributed_partner: tuple[str, str] | None = None
    layer_rejected: Layer | None = None
    caller_package: str | None = None
    reason: str = "OK"

    def __post_init__(self) -> None:
        if self.accepted and (self.layer_rejected is not None or self.attributed_partner is None):
            raise ValueError("an accepted publish carries an attribution and no rejecting layer")

    def to_dict(self) -> dict[str, Any]:
        return {
            "accepted": self.accepted,
            "attributedPartner": list(self.attributed_partner) if self.attributed_partner else None,
            "layerRejected": self.layer_rejected.value if self.layer_rejected else None,
            "callerPackage": self.caller_package,
            "reason": self.reason,
        }


def _reject(layer: Layer | None, reason: str, caller: str | None = None) -> PublishOutcome:
    return PublishOutcome(False, None, layer, caller, reason)


def provider_call_registry(config: ProviderConfig, triple: Triple, include_cert: bool = True) -> AuditEntry:
    if config.registry is None:
        raise TransportError("no registry endpoint configured")
    return config.registry.validate(triple, config.provider_credential, include_cert)


def resolve_caller(txn: Transaction, device: Device) -> str | None:
    """Layer 1: kernel-stamped uid -> package (first entry, as with getPackagesForUid)."""
    pkgs = device.get_packages_for_uid(get_calling_uid(txn))
    return pkgs[0] if pkgs else None


def handle_publish(
    txn: Transaction, config: ProviderConfig, device: Device, timings: list[int] | None = None
) -> PublishOutcome:
    """Decide one publish call. ``timings`` collects L1+L2 verification ns."""
    req = txn.payload
    if not isinstance(req, PublishRequest):
        return _reject(None, "MALFORMED_REQUEST")
    mode = config.mode

    if mode is ProviderMode.VULNERABLE_PI:
        if not isinstance(req.credential, PendingIntentToken):
            return _reject(None, "NO_CREDENTIAL")
        decision = authenticate_pi_creator(req.credential, config.pi_allowlist)
        if not decision.accepted:
            return _reject(None, decision.reason.value)
        return PublishOutcome(True, (decision.authenticated_as, req.client_id))

    t0 = time.perf_counter_ns()
    caller = resolve_caller(txn, device)
    verify_ns = time.perf_counter_ns() - t0
    if caller is None:
        return _reject(Layer.L1, "UNKNOWN_CALLER")
    cert = device.get_app(caller).cert_hash

    if mode is ProviderMode.ALT_A_HARDCODED:
        t0 = time.perf_counter_ns()
        ok = any(device.has_signing_certificate(caller, h) for h in config.hardcoded_hashes)
        verify_ns += time.perf_counter_ns() - t0
        if timings is not None:
            timings.append(verify_ns)
        if not ok:
            return _reject(Layer.L2, "CERT_NOT_HARDCODED", caller)
        return PublishOutcome(True, (caller, req.client_id), caller_package=caller)

    if mode is ProviderMode.ALT_B_NO_CERT:
        return _registry_step(config, Triple(caller, None, req.client_id), False, caller, req.client_id)

    # SECURE_3LAYER
    use_cert = Layer.L2 not in config.disabled_layers
    if use_cert:
        try:
            if config.registry is None:
                raise TransportError("no registry endpoint configured")
            expected = config.registry.active_cert_hashes(caller, req.client_id, config.provider_credential)
        except (TransportError, BadProviderCredential) as exc:
            return _reject(Layer.L3, _failure_reason(exc), caller)
        t0 = time.perf_counter_ns()
        # no active record: nothing to compare against here, the registry decides
        ok = not expected or any(device.has_signing_certificate(caller, h) for h in expected)
        verify_ns += time.perf_counter_ns() - t0
        if not ok:
            if timings is not None:
                timings.append(verify_ns)
            return _reject(Layer.L2, "CERT_MISMATCH", caller)
    if timings is not None:
        timings.append(verify_ns)
    if Layer.L3 in config.disabled_layers:
        return PublishOutcome(True, (caller, req.client_id), caller_package=caller)
    triple = Triple(caller, cert if use_cert else None, req.client_id)
    return _registry_step(config, triple, use_cert, caller, req.client_id)


def _failure_reason(exc: Exception) -> str:
    return "REGISTRY_UNREACHABLE" if isinstance(exc, TransportError) else "BAD_PROVIDER_CREDENTIAL"


def _registry_step(
    config: ProviderConfig, triple: Triple, include_cert: bool, caller: str, client_id: str
) -> PublishOutcome:
    try:
        entry = provider_call_registry(config, triple, include_cert)
    except (TransportError, BadProviderCredential) as exc:
        # fail closed
        return _reject(Layer.L3, _failure_reason(exc), caller)
    if not entry.accepted:
        return _reject(Layer.L3, entry.reason.value, caller)
    return PublishOutcome(True, (caller, client_id), caller_package=caller)


@dataclass
class PublishService:
    """A provider's exported ``publish`` bound service."""

    kernel: Kernel
    provider: ProcessHandle
    config: ProviderConfig
    service_name: str = "publish"
    redeploys: int = 0
    published: list[tuple[tuple[str, str], Any]] = field(default_factory=list)
    outcomes: list[PublishOutcome] = field(default_factory=list)
    verification_ns: list[int] = field(default_factory=list)
    registration: ServiceRegistration | None = None

    def __post_init__(self) -> None:
        self.registration = self.kernel.register_service(self.provider, self.service_name, True, self.on_transact)

    @property
    def package_name(self) -> str:
        return self.registration.provider_package

    def on_transact(self, txn: Transaction) -> PublishOutcome:
        outcome = handle_publish(txn, self.config, self.kernel.device, self.verification_ns)
        self.outcomes.append(outcome)
        if outcome.accepted:
            self.published.append((outcome.attributed_partner, txn.payload.content))
        return outcome

    def redeploy(self, config: ProviderConfig) -> None:
        """Ship a new provider build (the thing server-side onboarding avoids)."""
        self.config = config
        self.redeploys += 1
