"""Notification posting and NotificationListenerService delivery."""
from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field, replace

from .binder import Kernel, ProcessHandle
from .device import Capability, PlatformPolicy
from .errors import NotAListener
from .pending_intent import PendingIntentToken

MASK_GLYPH = "•"
# OTP heuristic: an isolated run of 4-8 digits
_OTP_RUN = re.compile(r"(?<!\d)\d{4,8}(?!\d)")


def mask_sensitive(text: str, policy: PlatformPolicy) -> str:
    if policy is not PlatformPolicy.ANDROID_15_MASKING:
        return text
    return _OTP_RUN.sub(lambda m: MASK_GLYPH * len(m.group()), text)


@dataclass(frozen=True)
class Notification:
    title: str
    text: str
    content_intent: PendingIntentToken
    action_intents: tuple[PendingIntentToken, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.content_intent, PendingIntentToken):
            raise TypeError("a tappable notification needs a content PendingIntent")
        object.__setattr__(self, "action_intents", tuple(self.action_intents))


@dataclass(frozen=True)
class StatusBarNotification:
    package_name: str
    post_time: int
    notification: Notification


@dataclass
class CredentialCache:
    """What a listener has squirreled away, keyed by the posting package."""

    tokens: dict[str, list[PendingIntentToken]] = field(default_factory=lambda: defaultdict(list))

    def store(self, package_name: str, token: PendingIntentToken) -> None:
        self.tokens[package_name].append(token)

    def get(self, package_name: str) -> PendingIntentToken | None:
        found = self.tokens.get(package_name)
        return found[-1] if found else None

    def __len__(self) -> int:
        return sum(len(v) for v in self.tokens.values())


class NotificationManager:
    def __init__(self, kernel: Kernel) -> None:
        self.kernel = kernel
        self.tick = 0
        self.post_log: list[StatusBarNotification] = []
        self.deliveries: dict[str, list[StatusBarNotification]] = defaultdict(list)
        self.caches: dict[str, CredentialCache] = defaultdict(CredentialCache)

    @property
    def policy(self) -> PlatformPolicy:
        return self.kernel.device.policy

    def post_notification(self, poster: ProcessHandle, n: Notification) -> StatusBarNotification:
        pkg = self.kernel.package_of(poster)
        self.tick += 1
        sbn = StatusBarNotification(pkg, self.tick, n)
        self.post_log.append(sbn)
        delivered = self._listener_copy(sbn)
        for app in self.kernel.device.apps_with(Capability.NLS):
            self.on_notification_posted(app.package_name, delivered)
        return sbn

    def _listener_copy(self, sbn: StatusBarNotification) -> StatusBarNotification:
        # only the text is masked; token references are passed through untouched
        n = sbn.notification
        masked = replace(
            n,
            title=mask_sensitive(n.title, self.policy),
            text=mask_sensitive(n.text, self.policy),
        )
        return replace(sbn, notification=masked)

    def on_notification_posted(
        self, listener_package: str, sbn: StatusBarNotification
    ) -> list[PendingIntentToken]:
        app = self.kernel.device.get_app(listener_package)
        if Capability.NLS not in app.capabilities:
            raise NotAListener(listener_package)
        self.deliveries[listener_package].append(sbn)
        harvested = [sbn.notification.content_intent, *sbn.notification.action_intents]
        cache = self.caches[listener_package]
        for token in harvested:
            cache.store(sbn.package_name, token)
        return harvested

    def cache_for(self, package_name: str) -> CredentialCache:
        return self.caches[package_name]
