"""Exception types shared across the package."""


class SpatialShareError(Exception):
    """Base class for all package errors."""


class ParseError(SpatialShareError):
    """A document could not be parsed at all (malformed structured text)."""


class ValidationError(SpatialShareError):
    """A document, frame, or scenario violated a schema rule or invariant.

    ``field`` names the offending field so callers can report precisely.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateGeometryError(SpatialShareError):
    """Anchor geometry cannot support a position solve."""


class OrderingError(SpatialShareError):
    """An observation arrived out of timestamp order."""


class DimensionMismatchError(SpatialShareError):
    """Two frames with different grid dimensions were compared."""


class StalePolicyError(SpatialShareError):
    """A cached filter output was offered under a changed policy digest."""


class MetadataMismatchError(SpatialShareError):
    """Frame grid and object map disagree; the frame is rejected outright."""


class UnknownObjectError(SpatialShareError):
    """An operation referenced an object id absent from the scene registry."""


class CodecError(SpatialShareError):
    """Base class for wire codec failures."""


class TruncationError(CodecError):
    """Byte string ends before the declared frame does."""


class UnknownTagError(CodecError):
    """Frame carries a message type tag outside the protocol."""


class PayloadSchemaError(CodecError):
    """Payload bytes do not form a canonical document of the tagged type."""


class ReplayError(SpatialShareError):
    """A session id was presented more than once."""


class IllegalTransitionError(SpatialShareError):
    """The session state machine received an event its phase forbids."""


class SequenceGapError(SpatialShareError):
    """An audit record skipped or repeated a sequence number."""
