"""Exception hierarchy shared by every pdkit module."""


class PdError(Exception):
    """Base class for all pdkit errors."""


class ConfigError(PdError, ValueError):
    pass


class OutOfRange(PdError, IndexError):
    pass


class BadLength(PdError, ValueError):
    pass


class WriteOnceViolation(PdError):
    """A flash program asked for a 1 -> 0 cell transition without an erase."""


class AuthFail(PdError):
    """Ciphertext does not authenticate under the given key ("not my data")."""


class DomainError(PdError, ValueError):
    pass


class InvalidPattern(PdError):
    """The pattern is outside the scheme's request vocabulary (the bottom output)."""


class RuleViolation(PdError):
    def __init__(self, requirement: str, message: str):
        super().__init__(f"{requirement}: {message}")
        self.requirement = requirement
        self.message = message


class VolumeFull(PdError):
    pass


class NotFound(PdError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class StashOverflow(PdError):
    pass


class LogFull(PdError):
    pass


class QueueOverflow(PdError):
    pass


class NoInvalidPages(PdError):
    pass


class DeviceFull(PdError):
    pass


class AdversaryInvalid(PdError):
    """The adversary proposed a challenge that breaks the game requirements."""


class Precondition(PdError, ValueError):
    pass
