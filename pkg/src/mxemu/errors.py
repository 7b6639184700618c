"""Exception types raised by mxemu."""


class MxError(Exception):
    """Base class for all library errors."""


class UnrepresentableSpecial(MxError, ValueError):
    """NaN or Inf given to an element format that has no such encoding."""


class SpecialInput(MxError, ValueError):
    """A block contains NaN/Inf where a finite vector was required."""


class LengthMismatch(MxError, ValueError):
    pass


class BlockSizeMismatch(MxError, ValueError):
    pass


class ShapeMismatch(MxError, ValueError):
    pass


class AxisMismatch(MxError, ValueError):
    pass


class RankError(MxError, ValueError):
    pass


class DivergenceError(MxError, RuntimeError):
    """Training loss became non-finite. ``records`` holds the steps run so far."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])


# -- file format errors -------------------------------------------------------


class FormatError(MxError, ValueError):
    """A tensor file is malformed. ``field`` names the offending header field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class CorruptLength(FormatError):
    pass


class CorruptField(FormatError):
    pass
