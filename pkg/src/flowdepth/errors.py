"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems (2),
data problems (3) and numeric failures (4).
"""


class FlowDepthError(Exception):
    exit_code = 1


class ConfigError(FlowDepthError, ValueError):
    exit_code = 2


class DataError(FlowDepthError, ValueError):
    exit_code = 3


class NumericError(FlowDepthError, ArithmeticError):
    exit_code = 4


# videoio
class MissingFrames(DataError):
    pass


class MalformedFile(DataError):
    pass


class InconsistentDims(DataError):
    pass


class InvalidClip(DataError):
    pass


class NotDivisible(DataError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


# opticalflow
class DimMismatch(DataError):
    pass


class FrameTooSmall(DataError):
    pass


# synthdata
class ConfigInvalid(ConfigError):
    pass


class OddCount(ConfigError):
    pass


# nn / model
class ShapeMismatch(DataError):
    pass


class KernelTooDeep(ConfigError):
    pass


class PoolTooLarge(ConfigError):
    pass


class ArchitectureUnderflow(ConfigError):
    pass


class ClassMissing(DataError):
    pass


class EmptySet(DataError):
    pass


class NonFiniteLoss(NumericError):
    pass
