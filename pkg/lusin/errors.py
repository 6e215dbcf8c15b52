"""Exception hierarchy shared by every module, plus the CLI exit-code contract."""

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_IO = 3


class LusinError(Exception):
    """Base class for toolkit failures."""


class DomainError(LusinError):
    """A point is not a member of the space it was handed to."""


class ParameterError(LusinError):
    """A numeric parameter is outside its admissible range."""


class OracleError(LusinError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class DescriptorError(LusinError):
    """A region, branch or JSON descriptor is malformed."""


class DepthExhaustedError(LusinError):
    def __init__(self, message: str, lower: float, upper: float):
        super().__init__(f"{message} (g in [{lower:.12g}, {upper:.12g}])")
        self.lower = lower
        self.upper = upper


class MapError(LusinError):
    """Forward or inverse evaluation of a map failed."""


class InconclusiveError(LusinError):
    """The properness test captured no samples at any radius."""


class ResolutionError(LusinError):
    def __init__(self, message: str, level: int):
        super().__init__(f"level {level}: {message}")
        self.level = level


class BoundaryContactError(LusinError):
    """A point handed to a stratum metric lies on the stratum boundary."""


class ScopeError(LusinError):
    """The hypothesis of the one-point construction does not hold for this map."""


class ConfigError(LusinError):
    """Run configuration is invalid or names an unknown target."""
