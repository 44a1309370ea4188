"""Exception hierarchy shared by all handsoff modules."""


class HandsOffError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(HandsOffError, ValueError):
    pass


class InvalidInputError(HandsOffError, ValueError):
    pass


class NumericalFailure(HandsOffError, RuntimeError):
    pass


class DegenerateProgramError(HandsOffError, ValueError):
    pass


class UnboundedSearchError(HandsOffError, RuntimeError):
    pass


class ComplexityGuardError(HandsOffError, ValueError):
    pass


class StructureViolationError(HandsOffError, ValueError):
    """A signal contains a direct +1 <-> -1 transition."""


class CodecError(HandsOffError, ValueError):
    """Base class for packet encode/decode failures."""


class CapacityError(CodecError):
    pass


class PacketFormatError(CodecError):
    pass


class ReservedCodeError(CodecError):
    pass


class PacketLengthError(CodecError):
    pass


class PacketCorruptionError(CodecError):
    pass


class DivergenceError(HandsOffError, RuntimeError):
    def __init__(self, message, horizon=None):
        super().__init__(message)
        self.horizon = horizon
