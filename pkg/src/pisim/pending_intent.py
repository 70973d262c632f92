"""Transferable PendingIntent tokens.

A token records who created it and wraps an intent nobody can read back. Any
process holding the token may ``send`` it; the action then runs with the
creator's identity. Nothing on the token says who is presenting it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping

from .binder import Kernel, ProcessHandle

log = logging.getLogger(__name__)


class Mutability(str, Enum):
    IMMUTABLE = "IMMUTABLE"
    MUTABLE = "MUTABLE"


@dataclass(frozen=True)
class WrappedIntent:
    action: str
    extras: Mapping[str, str] = field(default_factory=dict)
    target_package: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "extras", MappingProxyType(dict(self.extras)))


@dataclass(frozen=True)
class PendingIntentToken:
    token_id: int
    creator_uid: int
    creator_package: str
    mutability: Mutability
    _sealed: WrappedIntent = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.mutability, Mutability):
            raise TypeError("mutability must be declared as Mutability.IMMUTABLE or MUTABLE")


@dataclass(frozen=True)
class DispatchRecord:
    token_id: int
    executed_as_uid: int
    executed_as_package: str
    effective_action: str
    effective_extras: Mapping[str, str]
    target_package: str
    # harness-only: never handed to an authenticator
    presenter_uid: int


def get_creator_package(token: PendingIntentToken) -> str:
    return token.creator_package


def get_creator_uid(token: PendingIntentToken) -> int:
    return token.creator_uid


class PendingIntentManager:
    """Mints and dispatches tokens for one simulated device."""

    def __init__(self, kernel: Kernel) -> None:
        self.kernel = kernel
        self._next_id = 1
        self.dispatch_log: list[DispatchRecord] = []

    def create_pending_intent(
        self, creator: ProcessHandle, intent: WrappedIntent, mutability: Mutability
    ) -> PendingIntentToken:
        pkg = self.kernel.package_of(creator)
        token = PendingIntentToken(self._next_id, creator.uid, pkg, mutability, intent)
        self._next_id += 1
        return token

    def send(
        self,
        token: PendingIntentToken,
        presenter: ProcessHandle,
        fill_in: Mapping[str, str] | None = None,
    ) -> DispatchRecord:
        self.kernel.check_handle(presenter)
        intent = token._sealed
        extras = dict(intent.extras)
        if fill_in:
            if token.mutability is Mutability.MUTABLE:
                extras.update(fill_in)
            else:
                log.warning("fill-in ignored for immutable token %d", token.token_id)
        record = DispatchRecord(
            token_id=token.token_id,
            executed_as_uid=token.creator_uid,
            executed_as_package=token.creator_package,
            effective_action=intent.action,
            effective_extras=MappingProxyType(extras),
            target_package=intent.target_package,
            presenter_uid=presenter.uid,
        )
        self.dispatch_log.append(record)
        return record
