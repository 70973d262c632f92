"""Simulated Binder driver.

Process handles and transactions can only be created inside this module; the
calling uid on a transaction is copied from the issuing handle and there is no
public constructor that accepts a uid.
"""
from __future__ import annotations

import threading
from typing import Any, Callable

from .device import Device
from .errors import (
    CallingIdentityOutOfScope,
    DuplicateService,
    HandleInvalid,
    HandlerError,
    NoCallback,
    NotExported,
    ServiceNotFound,
)

_SEAL = object()


def _check_seal(seal: object, what: str) -> None:
    if seal is not _SEAL:
        raise TypeError(f"{what} objects can only be created by the kernel")


class _Sealed:
    __slots__ = ()

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError(f"{type(self).__name__} is read-only")


class ProcessHandle(_Sealed):
    """An app process as seen by the kernel."""

    __slots__ = ("_uid", "_kernel")

    def __init__(self, seal: object, kernel: "Kernel", uid: int) -> None:
        _check_seal(seal, "ProcessHandle")
        object.__setattr__(self, "_uid", uid)
        object.__setattr__(self, "_kernel", kernel)

    @property
    def uid(self) -> int:
        return self._uid

    @property
    def valid(self) -> bool:
        return self._kernel.device.is_installed_uid(self._uid)

    def __repr__(self) -> str:
        return f"<ProcessHandle uid={self._uid}{'' if self.valid else ' (dead)'}>"


Handler = Callable[["Transaction"], Any]


class ServiceRegistration(_Sealed):
    __slots__ = ("provider_package", "provider_uid", "service_name", "exported", "handler")

    def __init__(self, seal, provider_package, provider_uid, service_name, exported, handler):
        _check_seal(seal, "ServiceRegistration")
        for k, v in (
            ("provider_package", provider_package),
            ("provider_uid", provider_uid),
            ("service_name", service_name),
            ("exported", exported),
            ("handler", handler),
        ):
            object.__setattr__(self, k, v)

    def __repr__(self) -> str:
        return f"<Service {self.provider_package}/{self.service_name} exported={self.exported}>"


class Connection(_Sealed):
    __slots__ = ("caller", "target", "callback")

    def __init__(self, seal: object, caller: ProcessHandle, target: ServiceRegistration) -> None:
        _check_seal(seal, "Connection")
        object.__setattr__(self, "caller", caller)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "callback", None)


class Transaction(_Sealed):
    """One IPC call. ``calling_uid`` is only readable while its handler runs."""

    __slots__ = ("_calling_uid", "_live", "payload", "connection")

    def __init__(self, seal: object, caller: ProcessHandle, payload: Any, connection: Connection):
        _check_seal(seal, "Transaction")
        object.__setattr__(self, "_calling_uid", caller._uid)
        object.__setattr__(self, "_live", False)
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "connection", connection)

    @property
    def calling_uid(self) -> int:
        if not self._live:
            raise CallingIdentityOutOfScope("calling uid queried outside the transaction's handler")
        return self._calling_uid

    @property
    def in_scope(self) -> bool:
        return self._live


def get_calling_uid(txn: Transaction) -> int:
    return txn.calling_uid


class Kernel:
    def __init__(self, device: Device) -> None:
        self.device = device
        self._services: dict[tuple[str, str], ServiceRegistration] = {}
        # handlers run one at a time; re-entrant for nested IPC from a handler
        self._lock = threading.RLock()
        self.transaction_count = 0

    def mint_handle(self, package_name: str) -> ProcessHandle:
        app = self.device.get_app(package_name)
        return ProcessHandle(_SEAL, self, app.uid)

    def check_handle(self, handle: ProcessHandle) -> None:
        if not isinstance(handle, ProcessHandle) or handle._kernel is not self:
            raise HandleInvalid("handle was not minted by this kernel")
        if not handle.valid:
            raise HandleInvalid(f"uid {handle._uid} no longer belongs to an installed app")

    def package_of(self, handle: ProcessHandle) -> str:
        self.check_handle(handle)
        return self.device.uid_index[handle._uid]

    def register_service(
        self, provider: ProcessHandle, service_name: str, exported: bool, handler: Handler
    ) -> ServiceRegistration:
        pkg = self.package_of(provider)
        key = (pkg, service_name)
        if key in self._services:
            raise DuplicateService(f"{pkg}/{service_name}")
        reg = ServiceRegistration(_SEAL, pkg, provider._uid, service_name, bool(exported), handler)
        self._services[key] = reg
        return reg

    def bind_service(self, caller: ProcessHandle, provider_package: str, service_name: str) -> Connection:
        # binding never authenticates; handlers decide
        reg = self._services.get((provider_package, service_name))
        if reg is None:
            raise ServiceNotFound(f"{provider_package}/{service_name}")
        if not reg.exported and caller._uid != reg.provider_uid:
            raise NotExported(f"{provider_package}/{service_name}")
        return Connection(_SEAL, caller, reg)

    def transact(self, conn: Connection, payload: Any) -> Any:
        self.check_handle(conn.caller)
        txn = Transaction(_SEAL, conn.caller, payload, conn)
        with self._lock:
            self.transaction_count += 1
            object.__setattr__(txn, "_live", True)
            try:
                return conn.target.handler(txn)
            except Exception as exc:
                raise HandlerError(f"{conn.target!r}: {exc}") from exc
            finally:
                object.__setattr__(txn, "_live", False)

    def register_callback(self, conn: Connection, endpoint: Callable[[Any], Any]) -> None:
        self.check_handle(conn.caller)
        object.__setattr__(conn, "callback", endpoint)

    def invoke_callback(self, conn: Connection, message: Any) -> Any:
        """Provider-to-caller push over an established connection."""
        if conn.callback is None:
            raise NoCallback(repr(conn.target))
        self.check_handle(conn.caller)
        conn.callback(message)
        return message

    def services(self) -> list[ServiceRegistration]:
        return list(self._services.values())

