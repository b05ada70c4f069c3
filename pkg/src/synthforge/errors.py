"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 config/invalid input,
3 I/O or malformed files, 4 empty result, 5 degenerate input.
"""


class SynthForgeError(Exception):
    exit_code = 1


class InvalidInputError(SynthForgeError, ValueError):
    exit_code = 2


class ConfigError(InvalidInputError):
    exit_code = 2


class OutOfRangeError(InvalidInputError):
    exit_code = 2


class StrategyUnavailableError(SynthForgeError):
    exit_code = 2


class FormatError(SynthForgeError, ValueError):
    exit_code = 3


class NotFoundError(SynthForgeError, LookupError):
    exit_code = 3


class IntegrityError(SynthForgeError):
    exit_code = 3


class EmptyForegroundError(SynthForgeError):
    exit_code = 4


class GenerationFailureError(SynthForgeError):
    exit_code = 4


class InsufficientDataError(SynthForgeError):
    exit_code = 5


class DegenerateSignalError(SynthForgeError):
    exit_code = 5


class DegenerateGeometryError(SynthForgeError):
    exit_code = 5


class DegenerateTransformError(SynthForgeError):
    exit_code = 5


class RegionOutOfBoundsError(SynthForgeError):
    exit_code = 5


class CapacityError(SynthForgeError):
    exit_code = 5


class InfeasibleError(SynthForgeError):
    exit_code = 5


class UndefinedMetricError(SynthForgeError):
    exit_code = 5
