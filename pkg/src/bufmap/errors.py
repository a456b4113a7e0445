"""Exception types shared across the package."""


class BufmapError(Exception):
    """Base class for all package-specific errors."""


class WindowError(BufmapError):
    """Relevant-window misuse."""


class PositionNotInWindow(WindowError):
    """A position was excluded that is not currently a window member.

    Raised on double exclusion or exclusion below the floor; in a codec
    session this signals that the two endpoints have desynchronized.
    """


class CodecError(BufmapError):
    """Codec-level protocol violation."""


class InconsistentBitmap(CodecError):
    """A buffer map contradicts the monotone-filling history of a session."""


class Desynchronized(CodecError):
    """A message cannot be interpreted against the receiver's window."""


class InvalidParameters(BufmapError, ValueError):
    """A diffusion curve was constructed from invalid parameters."""


class DegenerateCondition(BufmapError, ValueError):
    """Conditioning on a position that is already filled with certainty."""


class ModelContradiction(CodecError):
    """An observed bit has probability zero under the supplied model."""


class TruncatedBlock(CodecError):
    """A coded block is too short to decode the declared bit count."""


class NoFeasibleCurve(BufmapError):
    """Curve calibration could not meet the residual bound."""


class ConfigError(BufmapError):
    """A scenario or sweep configuration failed validation."""
