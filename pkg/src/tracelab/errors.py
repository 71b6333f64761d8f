"""Exception types shared across the package."""


class TraceLabError(Exception):
    pass


class DomainError(TraceLabError, ValueError):
    """Argument outside the mathematical domain (t <= 0, empty interval, ...)."""


class NotSelectedLayer(TraceLabError, ValueError):
    """Cube level is not of the form 2**j."""


class LevelOutOfRange(TraceLabError, ValueError):
    pass


class LevelError(TraceLabError, ValueError):
    """Grid resolution incompatible with the requested operation."""


class InvalidParams(TraceLabError, ValueError):
    pass


class MissingGradient(TraceLabError, ValueError):
    pass


class ConfigError(TraceLabError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class NormFailure(TraceLabError, RuntimeError):
    pass
