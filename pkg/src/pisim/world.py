"""A fresh simulated handset with the proof-of-concept cast installed."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .binder import Kernel, ProcessHandle
from .device import Capability, Device, InstallSource, Manifest, PlatformPolicy, SigningKey
from .notifications import Notification, NotificationManager
from .pending_intent import Mutability, PendingIntentManager, PendingIntentToken, WrappedIntent
from .registry import LocalRegistryClient, Registry
from .sdk import ProviderConfig, ProviderMode, PublishOutcome, PublishRequest, PublishService

PARTNER = "com.poc.partner"
ATTACKER = "com.poc.attacker"
VULNERABLE_SDK = "com.poc.vulnerable.sdk"
SECURE_SDK = "com.poc.secure.sdk"
NEW_PARTNER = "com.poc.newpartner"
SECOND_PARTNER = "com.poc.partner2"

PARTNER_CLIENT_ID = "client-42"
PROVIDER_CREDENTIAL = "provider-credential-in-process"
PUBLISH_PERMISSION = "com.poc.sdk.permission.PUBLISH"

KEYS = {
    PARTNER: SigningKey.from_label("partner-release-key"),
    ATTACKER: SigningKey.from_label("attacker-key"),
    VULNERABLE_SDK: SigningKey.from_label("vulnerable-sdk-key"),
    SECURE_SDK: SigningKey.from_label("secure-sdk-key"),
    NEW_PARTNER: SigningKey.from_label("newpartner-key"),
    SECOND_PARTNER: SigningKey.from_label("partner2-key"),
}
ROTATED_PARTNER_KEY = SigningKey.from_label("partner-release-key-v2")

PARTNER_MANIFEST = Manifest.build(used_permissions=[PUBLISH_PERMISSION])
SDK_HOST_MANIFEST = Manifest.build(
    defined_permissions=[PUBLISH_PERMISSION],
    known_signer_hashes=[KEYS[PARTNER].cert_hash],
    exported_services=["publish"],
)


@dataclass
class World:
    device: Device
    kernel: Kernel
    intents: PendingIntentManager
    notifications: NotificationManager
    registry: Registry
    registry_client: LocalRegistryClient
    rng: random.Random
    services: dict[tuple[str, str], PublishService] = field(default_factory=dict)
    _handles: dict[str, ProcessHandle] = field(default_factory=dict)

    def handle(self, package_name: str) -> ProcessHandle:
        # re-mint when the cached handle died with an uninstall
        h = self._handles.get(package_name)
        if h is None or not h.valid:
            h = self.kernel.mint_handle(package_name)
            self._handles[package_name] = h
        return h

    def install(
        self,
        package_name: str,
        key: SigningKey,
        manifest: Manifest | None = None,
        source: InstallSource = InstallSource.STORE,
    ) -> int:
        return self.device.install_app(package_name, key, manifest, source)

    def provider_config(self, mode: ProviderMode, **kw) -> ProviderConfig:
        kw.setdefault("provider_credential", PROVIDER_CREDENTIAL)
        kw.setdefault("registry", self.registry_client)
        return ProviderConfig(mode, **kw)

    def add_service(self, provider_package: str, config: ProviderConfig, name: str = "publish") -> PublishService:
        svc = PublishService(self.kernel, self.handle(provider_package), config, name)
        self.services[(provider_package, name)] = svc
        return svc

    def publish(self, caller: str, provider: str, request: PublishRequest, service: str = "publish") -> PublishOutcome:
        conn = self.kernel.bind_service(self.handle(caller), provider, service)
        return self.kernel.transact(conn, request)

    def partner_token(self, mutability: Mutability, package_name: str = PARTNER) -> PendingIntentToken:
        intent = WrappedIntent(
            "com.poc.partner.action.OPEN_PLAYER",
            {"track": str(self.rng.randrange(1, 10_000))},
            package_name,
        )
        return self.intents.create_pending_intent(self.handle(package_name), intent, mutability)

    def post(self, poster: str, token: PendingIntentToken, title: str, text: str):
        return self.notifications.post_notification(self.handle(poster), Notification(title, text, token))


def build_world(
    policy: PlatformPolicy = PlatformPolicy.ANDROID_14,
    seed: int = 1,
    install_partner: bool = True,
) -> World:
    """Partner, attacker (store install, notification access) and both SDK providers.

    The partner is registered with the registry under ``PARTNER_CLIENT_ID``.
    Every call builds new state; nothing is shared between worlds.
    """
    device = Device(policy)
    kernel = Kernel(device)
    registry = Registry(PROVIDER_CREDENTIAL)
    world = World(
        device=device,
        kernel=kernel,
        intents=PendingIntentManager(kernel),
        notifications=NotificationManager(kernel),
        registry=registry,
        registry_client=LocalRegistryClient(registry),
        rng=random.Random(seed),
    )
    if install_partner:
        world.install(PARTNER, KEYS[PARTNER], PARTNER_MANIFEST)
    world.install(ATTACKER, KEYS[ATTACKER])
    world.install(VULNERABLE_SDK, KEYS[VULNERABLE_SDK], SDK_HOST_MANIFEST)
    world.install(SECURE_SDK, KEYS[SECURE_SDK], SDK_HOST_MANIFEST)
    device.grant_capability(ATTACKER, Capability.NLS)

    registry.register_partner(PARTNER, KEYS[PARTNER].cert_hash, PARTNER_CLIENT_ID)
    world.add_service(
        VULNERABLE_SDK, world.provider_config(ProviderMode.VULNERABLE_PI, pi_allowlist=frozenset({PARTNER}))
    )
    world.add_service(SECURE_SDK, world.provider_config(ProviderMode.SECURE_3LAYER))
    return world
