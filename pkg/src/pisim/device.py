"""Installed-app table, UID allocation and package-manager queries."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

from .errors import DuplicatePackage, RestrictedSettingsBlocked, UnknownPackage

FIRST_APP_UID = 10000


class InstallSource(str, Enum):
    STORE = "STORE"
    SIDELOAD = "SIDELOAD"


class PlatformPolicy(str, Enum):
    ANDROID_14 = "ANDROID_14"
    ANDROID_15_MASKING = "ANDROID_15_MASKING"


class Capability(str, Enum):
    NLS = "NLS"


def digest_hex(data: bytes) -> str:
    """SHA-256, lowercase hex. The one digest primitive used repo-wide."""
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class SigningKey:
    key_bytes: bytes
    label: str = ""

    def __post_init__(self) -> None:
        if len(self.key_bytes) < 16:
            raise ValueError("signing key material must be at least 16 bytes")

    @classmethod
    def from_label(cls, label: str) -> "SigningKey":
        # deterministic key material, handy for fixtures and scenario configs
        return cls(hashlib.sha256(b"pisim-key:" + label.encode()).digest(), label)

    @property
    def cert_hash(self) -> str:
        return digest_hex(self.key_bytes)

    def __repr__(self) -> str:
        return f"SigningKey({self.label!r}, {self.cert_hash[:12]}...)"


@dataclass(frozen=True)
class Manifest:
    defined_permissions: frozenset[str] = frozenset()
    used_permissions: frozenset[str] = frozenset()
    known_signer_hashes: frozenset[str] = frozenset()
    exported_services: frozenset[str] = frozenset()

    @classmethod
    def build(
        cls,
        defined_permissions: Iterable[str] = (),
        used_permissions: Iterable[str] = (),
        known_signer_hashes: Iterable[str] = (),
        exported_services: Iterable[str] = (),
    ) -> "Manifest":
        return cls(
            frozenset(defined_permissions),
            frozenset(used_permissions),
            frozenset(known_signer_hashes),
            frozenset(exported_services),
        )

    def to_dict(self) -> dict[str, list[str]]:
        return {
            "definedPermissions": sorted(self.defined_permissions),
            "usedPermissions": sorted(self.used_permissions),
            "knownSignerHashes": sorted(self.known_signer_hashes),
            "exportedServices": sorted(self.exported_services),
        }


@dataclass
class InstalledApp:
    package_name: str
    uid: int
    cert_hash: str
    manifest: Manifest
    install_source: InstallSource = InstallSource.STORE
    capabilities: set[Capability] = field(default_factory=set)


class Device:
    """Package-manager view of one simulated handset.

    UIDs are handed out sequentially from 10000 and never reused, so a stale
    uid held by a process handle can never resolve to a newly installed app.
    """

    def __init__(self, policy: PlatformPolicy = PlatformPolicy.ANDROID_14) -> None:
        self.policy = policy
        self.apps: dict[str, InstalledApp] = {}
        self.uid_index: dict[int, str] = {}
        self.next_uid = FIRST_APP_UID

    def install_app(
        self,
        package_name: str,
        key: SigningKey,
        manifest: Manifest | None = None,
        install_source: InstallSource = InstallSource.STORE,
    ) -> int:
        if package_name in self.apps:
            raise DuplicatePackage(package_name)
        uid = self.next_uid
        self.next_uid += 1
        self.apps[package_name] = InstalledApp(
            package_name=package_name,
            uid=uid,
            cert_hash=key.cert_hash,
            manifest=manifest if manifest is not None else Manifest(),
            install_source=InstallSource(install_source),
        )
        self.uid_index[uid] = package_name
        return uid

    def uninstall_app(self, package_name: str) -> None:
        app = self.get_app(package_name)
        del self.apps[package_name]
        del self.uid_index[app.uid]

    def get_app(self, package_name: str) -> InstalledApp:
        try:
            return self.apps[package_name]
        except KeyError:
            raise UnknownPackage(package_name) from None

    def is_installed_uid(self, uid: int) -> bool:
        return uid in self.uid_index

    def get_packages_for_uid(self, uid: int) -> list[str]:
        pkg = self.uid_index.get(uid)
        return [pkg] if pkg is not None else []

    def has_signing_certificate(self, package_name: str, cert_hash: str) -> bool:
        return self.get_app(package_name).cert_hash == cert_hash

    def grant_capability(self, package_name: str, capability: Capability = Capability.NLS) -> None:
        app = self.get_app(package_name)
        if (
            capability is Capability.NLS
            and self.policy is PlatformPolicy.ANDROID_15_MASKING
            and app.install_source is InstallSource.SIDELOAD
        ):
            raise RestrictedSettingsBlocked(
                f"{package_name}: sideloaded apps cannot obtain notification access"
            )
        app.capabilities.add(capability)

    def apps_with(self, capability: Capability) -> list[InstalledApp]:
        """Apps holding ``capability``, in install (uid) order."""
        return sorted(
            (a for a in self.apps.values() if capability in a.capabilities),
            key=lambda a: a.uid,
        )

    @classmethod
    def from_config(cls, doc: dict[str, Any]) -> "Device":
        """Build a device from a scenario-config document.

        ``{"platformPolicy": "ANDROID_14", "apps": [{"packageName": ..., "key": {"label": ...}
        | {"hex": ...}, "installSource": "STORE", "manifest": {...}, "capabilities": ["NLS"]}]}``
        """
        device = cls(PlatformPolicy(doc.get("platformPolicy", "ANDROID_14")))
        for spec in doc.get("apps", []):
            key_doc = spec["key"]
            if "hex" in key_doc:
                key = SigningKey(bytes.fromhex(key_doc["hex"]), key_doc.get("label", ""))
            else:
                key = SigningKey.from_label(key_doc["label"])
            m = spec.get("manifest", {})
            manifest = Manifest.build(
                m.get("definedPermissions", ()),
                m.get("usedPermissions", ()),
                m.get("knownSignerHashes", ()),
                m.get("exportedServices", ()),
            )
            device.install_app(
                spec["packageName"], key, manifest, InstallSource(spec.get("installSource", "STORE"))
            )
            for cap in spec.get("capabilities", []):
                device.grant_capability(spec["packageName"], Capability(cap))
        return device
