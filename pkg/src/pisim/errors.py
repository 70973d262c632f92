"""Exception hierarchy for the simulator.

Every error raised by the simulation API derives from :class:`SimError` so that
scenario drivers can distinguish modelled platform refusals from bugs.
"""


class SimError(Exception):
    pass


# device / package manager
class DuplicatePackage(SimError):
    pass


class UnknownPackage(SimError):
    pass


class RestrictedSettingsBlocked(SimError):
    pass


# kernel IPC
class DuplicateService(SimError):
    pass


class ServiceNotFound(SimError):
    pass


class NotExported(SimError):
    pass


class HandleInvalid(SimError):
    pass


class HandlerError(SimError):
    pass


class NoCallback(SimError):
    pass


class CallingIdentityOutOfScope(SimError):
    """Calling identity was queried outside the handler of that transaction."""


# notifications
class NotAListener(SimError):
    pass


# authentication mechanisms
class NoActivityContext(SimError):
    pass


class UnknownFlow(SimError):
    pass


class CodeMismatch(SimError):
    pass


class IncompleteOutcomes(SimError):
    pass


# partner registry
class TransportError(SimError):
    pass


class DuplicateActive(SimError):
    pass


class NotFound(SimError):
    pass


class BadProviderCredential(SimError):
    pass


class CorruptFile(SimError):
    pass


# harness
class UnknownScenario(SimError):
    pass


class InvalidSpec(SimError):
    pass
