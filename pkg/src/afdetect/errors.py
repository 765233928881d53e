"""Exception hierarchy shared by every afdetect module."""


class AfDetectError(Exception):
    """Base class for all errors raised by afdetect."""


class DataError(AfDetectError):
    """Input data is unreadable or violates a precondition."""


class MalformedFile(DataError):
    pass


class EmptySignal(DataError):
    pass


class NoSignalPixels(DataError):
    pass


class DegenerateRange(DataError):
    pass


class InsufficientData(DataError):
    pass


class InvalidCutoff(DataError):
    pass


class TooShort(DataError):
    pass


class NonPositiveScale(DataError):
    pass


class ShapeMismatch(AfDetectError):
    pass


class NotScalar(AfDetectError):
    pass


class GraphConsumed(AfDetectError):
    pass


class MembershipMismatch(AfDetectError):
    pass


class EmptyBranches(AfDetectError):
    pass


class TooFewNegatives(InsufficientData):
    pass


class NoPositives(InsufficientData):
    pass


class SingleClassInput(DataError):
    pass


class ConfigError(AfDetectError):
    pass


class ArchitectureMismatch(AfDetectError):
    pass


class CheckpointError(AfDetectError):
    pass
