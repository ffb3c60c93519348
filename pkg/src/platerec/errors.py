"""Exception hierarchy shared by every platerec module."""


class PlateRecError(Exception):
    """Base class for all platerec errors."""


# numerics / tensors
class ShapeMismatch(PlateRecError, ValueError):
    pass


class EmptyTensor(PlateRecError, ValueError):
    pass


class UninitializedState(PlateRecError, RuntimeError):
    pass


class NonFiniteLoss(PlateRecError, ArithmeticError):
    pass


# ctc
class InfeasibleLabel(PlateRecError, ValueError):
    pass


class DegenerateRow(PlateRecError, ValueError):
    pass


class TooLarge(PlateRecError, ValueError):
    pass


class NoValidPath(PlateRecError, ArithmeticError):
    pass


# model / checkpoint
class ConfigInvalid(PlateRecError, ValueError):
    pass


class CorruptCheckpoint(PlateRecError, ValueError):
    pass


class VersionMismatch(PlateRecError, ValueError):
    pass


class IoFailure(PlateRecError, OSError):
    pass


# detection
class InvalidBox(PlateRecError, ValueError):
    pass


class NoGroundTruth(PlateRecError, ValueError):
    pass


class MissingAnnotations(PlateRecError, ValueError):
    pass


# data
class UnknownSymbol(PlateRecError, ValueError):
    def __init__(self, symbol, source=None):
        self.symbol = symbol
        self.source = source
        where = f" in {source}" if source else ""
        super().__init__(f"unknown symbol {symbol!r}{where}")


class UnreadableImage(PlateRecError, OSError):
    pass


class TooFewSamples(PlateRecError, ValueError):
    pass


class LabelTooLong(PlateRecError, ValueError):
    pass


class DatasetEmpty(PlateRecError, ValueError):
    pass


class AlphabetMismatch(PlateRecError, ValueError):
    pass
