"""Exception hierarchy shared across the package.

Everything raised on purpose derives from PhysioBusError so callers can
catch broadly at process boundaries (CLI, bridge) without masking bugs.
"""


class PhysioBusError(Exception):
    """Base class for all errors raised by this package."""


class EncodingError(PhysioBusError):
    """A message could not be encoded."""


class InvariantViolation(EncodingError):
    """A message or value violates a declared invariant."""


class DecodeError(PhysioBusError):
    """Envelope bytes could not be decoded."""


class UnknownSchema(DecodeError):
    """Envelope carries a schema id outside the known range."""


class Truncated(DecodeError):
    """Input ended in the middle of a field.

    For log files, `offset` is the byte position of the damage and
    `intact_records` counts complete records before it.
    """

    def __init__(self, message: str, offset: int | None = None,
                 intact_records: int | None = None):
        super().__init__(message)
        self.offset = offset
        self.intact_records = intact_records


class TrailingBytes(DecodeError):
    """Extra bytes follow a complete message."""


class MalformedUtf8(DecodeError):
    """A string field is not valid UTF-8."""


class InvalidTopic(PhysioBusError):
    """Topic string does not match the topic grammar.

    `segment` names the first offending part: one of ``leading_slash``,
    ``segment_count``, ``humans``, ``physiological``, ``human_id``,
    ``sensor_type``, ``sensor_id``, ``field``.
    """

    def __init__(self, message: str, segment: str):
        super().__init__(message)
        self.segment = segment


class UnknownModality(PhysioBusError):
    """sensor_type has no entry in the indicator registry."""


class InvalidPattern(PhysioBusError):
    """Subscription pattern is syntactically invalid."""


class DuplicateNodeName(PhysioBusError):
    """A node with this name is already registered."""


class UnknownNode(PhysioBusError):
    """No node with this name is registered."""


class NoObservations(PhysioBusError):
    """Offset estimator has not seen any (device, receive) pair yet."""


class NonMonotonicInput(PhysioBusError):
    """Timestamps were expected to be nondecreasing."""


class EmptyWindow(PhysioBusError):
    """An interval window was empty where at least one value is required."""


class InsufficientData(PhysioBusError):
    """Fewer intervals than the statistic needs."""


class InvalidConfig(PhysioBusError):
    """A simulator or node configuration is out of range."""


class LogFormatError(PhysioBusError):
    """Log file is not a valid recording container."""


class IoError(PhysioBusError):
    """Filesystem operation failed."""


class BindError(PhysioBusError):
    """A server socket could not be bound."""


class ConnectError(PhysioBusError):
    """A client connection could not be established."""


class ProtocolError(PhysioBusError):
    """Peer sent a malformed or out-of-order frame."""
