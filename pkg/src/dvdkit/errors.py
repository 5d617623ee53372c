"""Exception hierarchy shared across dvdkit."""


class DvdError(Exception):
    """Base class for all dvdkit errors."""


class InvalidInput(DvdError, ValueError):
    pass


class InvalidConfig(DvdError, ValueError):
    pass


class ShapeError(DvdError, ValueError):
    pass


class SupportMismatch(DvdError, ValueError):
    """KL(p||q) is undefined: p puts mass where q has none."""


class DegenerateDenominator(DvdError, ValueError):
    """Reference loss too close to zero for a meaningful ratio."""


class EmptyWindow(DvdError, ValueError):
    pass


class NoLossTokens(DvdError, ValueError):
    pass


class EmptyResponse(DvdError, ValueError):
    pass


class InvalidFrame(DvdError, ValueError):
    pass


class FrameDecodeError(DvdError, ValueError):
    """Base for wire decoding failures."""


class BadMagic(FrameDecodeError):
    pass


class UnsupportedVersion(FrameDecodeError):
    pass


class Truncated(FrameDecodeError):
    pass


class InconsistentShape(FrameDecodeError):
    pass


class TransportClosed(DvdError, ConnectionError):
    """Peer closed or reset the connection."""
