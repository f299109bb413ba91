"""Exception hierarchy shared across the simulator."""


class SimulatorError(Exception):
    """Base class for every error raised by this package."""


class PolicyViolation(SimulatorError):
    """An access targets cache sets or store regions its world may not use."""


class LayoutError(SimulatorError):
    """A victim table layout does not fit the cache geometry or partition."""


class InsufficientData(SimulatorError):
    pass


class ConfigError(SimulatorError):
    """A scenario document is malformed; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnknownParameter(ConfigError):
    pass


class IoError(SimulatorError):
    pass


# ATP-side failures


class AuthFailure(SimulatorError):
    pass


class RoleError(SimulatorError):
    pass


class NotAuthenticated(SimulatorError):
    pass


class EmptyData(SimulatorError):
    pass


class TripleDenied(SimulatorError):
    pass


class NotFound(SimulatorError):
    pass


class TokenInvalid(SimulatorError):
    """IVP rejected the presented token; ``reason`` is an :class:`IvpFailure`."""

    def __init__(self, reason):
        super().__init__(f"token rejected: {reason.value}")
        self.reason = reason
