"""Exception hierarchy shared across the package.

File-format errors carry the byte offset at which the problem was
detected so corrupt inputs can be diagnosed without a hex editor.
"""


class SetokError(Exception):
    """Base class for all package errors."""


class FormatError(SetokError):
    """A file failed structural validation; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class RankMismatch(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class IoFailure(SetokError):
    pass


class KTooLarge(SetokError):
    pass


class DimMismatch(SetokError):
    pass


class EmptyGrid(SetokError):
    pass


class NotNormalized(SetokError):
    pass


class ShapeMismatch(SetokError):
    pass


class PairingSizeMismatch(SetokError):
    pass


class EmptyInput(SetokError):
    pass


class EmptyCluster(SetokError):
    pass


class BadDim(SetokError):
    pass


class MaskModeError(SetokError):
    pass


class MechanismParamError(SetokError):
    pass


class ConfigError(SetokError):
    pass
