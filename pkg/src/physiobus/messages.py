"""Message types and their binary envelope encoding.

Every message travels as an *envelope*: a little-endian ``u16`` schema id
followed by a schema-specific body. The layout is fixed (no self-describing
framing) so byte sequences can be compared, logged, and replayed verbatim:

* integers: little-endian, fixed width
* strings: ``u16`` byte length + UTF-8 bytes
* floats: IEEE-754 binary64, little-endian

The common header is ``seq u64 + stamp_ns i64 + source string``. Bodies are
documented field-by-field in ``docs/wire-format.md`` together with golden
hex dumps.

``decode_envelope`` is a strict inverse of ``encode_envelope``: it rejects
unknown schema ids, truncated input, malformed UTF-8, trailing bytes, and
any value that violates the type invariants (so a decoded message is always
safe to hand to feature math).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from .errors import (
    InvariantViolation,
    MalformedUtf8,
    TrailingBytes,
    Truncated,
    UnknownSchema,
)

SCHEMA_PHYSIO_RAW = 1
SCHEMA_DEVICE_FEATURE = 2
SCHEMA_ECG_FEATURES = 3
SCHEMA_PPG_FEATURES = 4
SCHEMA_EXPRESSION_EVENT = 5
SCHEMA_AFFECTIVE_STATE = 6
SCHEMA_BEAT_TRUTH = 7

EXPRESSIONS = ("neutral", "happy", "sad", "angry", "fear", "disgust", "surprise")
AFFECTIVE_STATES = ("calm_relaxed", "alert_active", "stressed_anxious")

_U16_MAX = 0xFFFF
_U32_MAX = 0xFFFFFFFF
_U64_MAX = 0xFFFFFFFFFFFFFFFF
_I64_MIN = -(1 << 63)
_I64_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class Header:
    """Per-message metadata: stream sequence number, publish time, node name."""

    seq: int = 0
    stamp_ns: int = 0
    source: str = ""


@dataclass(frozen=True)
class PhysioRawChannel:
    channel_name: str
    samples: tuple[float, ...] = ()


@dataclass(frozen=True)
class PhysioRaw:
    """One block of raw multi-channel samples.

    ``device_timestamp_ns`` is the device-clock time of the *first* sample;
    all channels in a block carry the same number of samples.
    """

    header: Header = field(default_factory=Header)
    device_timestamp_ns: int = 0
    channels: tuple[PhysioRawChannel, ...] = ()


@dataclass(frozen=True)
class DeviceFeature:
    """A single named feature reported by the device itself."""

    header: Header = field(default_factory=Header)
    device_timestamp_ns: int = 0
    name: str = ""
    value: float = 0.0


@dataclass(frozen=True)
class EcgFeatures:
    """Derived ECG features over a trailing analysis window."""

    header: Header = field(default_factory=Header)
    device_timestamp_ns: int = 0
    rr_ms: float = 0.0
    peak_count: int = 0
    sdnn_ms: float = 0.0
    rmssd_ms: float = 0.0
    pnn50_pct: float = 0.0
    heart_rate_bpm: float = 0.0
    window_s: float = 0.0


@dataclass(frozen=True)
class PpgFeatures:
    """Same shape as EcgFeatures, derived from PPG beats."""

    header: Header = field(default_factory=Header)
    device_timestamp_ns: int = 0
    rr_ms: float = 0.0
    peak_count: int = 0
    sdnn_ms: float = 0.0
    rmssd_ms: float = 0.0
    pnn50_pct: float = 0.0
    heart_rate_bpm: float = 0.0
    window_s: float = 0.0


@dataclass(frozen=True)
class ExpressionEvent:
    """Recognized facial expression for one human."""

    header: Header = field(default_factory=Header)
    human_id: str = ""
    expression: str = "neutral"
    confidence: float = 1.0


@dataclass(frozen=True)
class AffectiveState:
    """Fused affective-state estimate plus the inputs that produced it."""

    header: Header = field(default_factory=Header)
    human_id: str = ""
    state: str = "calm_relaxed"
    heart_rate_bpm: float = 0.0
    expression: str = "neutral"


@dataclass(frozen=True)
class BeatTruth:
    """Simulator ground truth: bus-time of one true beat."""

    header: Header = field(default_factory=Header)
    beat_time_ns: int = 0


Message = (
    PhysioRaw
    | DeviceFeature
    | EcgFeatures
    | PpgFeatures
    | ExpressionEvent
    | AffectiveState
    | BeatTruth
)

SCHEMA_IDS: dict[type, int] = {
    PhysioRaw: SCHEMA_PHYSIO_RAW,
    DeviceFeature: SCHEMA_DEVICE_FEATURE,
    EcgFeatures: SCHEMA_ECG_FEATURES,
    PpgFeatures: SCHEMA_PPG_FEATURES,
    ExpressionEvent: SCHEMA_EXPRESSION_EVENT,
    AffectiveState: SCHEMA_AFFECTIVE_STATE,
    BeatTruth: SCHEMA_BEAT_TRUTH,
}

SCHEMA_NAMES = {
    SCHEMA_PHYSIO_RAW: "physio_raw",
    SCHEMA_DEVICE_FEATURE: "device_feature",
    SCHEMA_ECG_FEATURES: "ecg_features",
    SCHEMA_PPG_FEATURES: "ppg_features",
    SCHEMA_EXPRESSION_EVENT: "expression_event",
    SCHEMA_AFFECTIVE_STATE: "affective_state",
    SCHEMA_BEAT_TRUTH: "beat_truth",
}


def schema_id_of(msg: Message) -> int:
    try:
        return SCHEMA_IDS[type(msg)]
    except KeyError:
        raise InvariantViolation(f"not a message type: {type(msg).__name__}")


# ---------------------------------------------------------------------------
# validation

def _check_uint(value, bits: int, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvariantViolation(f"{what} must be an integer, got {value!r}")
    if not 0 <= value <= (1 << bits) - 1:
        raise InvariantViolation(f"{what} out of u{bits} range: {value}")
    return value


def _check_i64(value, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvariantViolation(f"{what} must be an integer, got {value!r}")
    if not _I64_MIN <= value <= _I64_MAX:
        raise InvariantViolation(f"{what} out of i64 range: {value}")
    return value


def _check_finite(value, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvariantViolation(f"{what} must be finite, got {value!r}")
    return value


def _check_string(value, what: str, *, max_bytes: int = _U16_MAX,
                  nonempty: bool = False) -> bytes:
    if not isinstance(value, str):
        raise InvariantViolation(f"{what} must be a string, got {value!r}")
    raw = value.encode("utf-8")
    if nonempty and not raw:
        raise InvariantViolation(f"{what} must be nonempty")
    if len(raw) > max_bytes:
        raise InvariantViolation(f"{what} exceeds {max_bytes} bytes")
    return raw


def _validate_header(h: Header) -> None:
    if not isinstance(h, Header):
        raise InvariantViolation(f"header must be a Header, got {h!r}")
    _check_uint(h.seq, 64, "header.seq")
    _check_i64(h.stamp_ns, "header.stamp_ns")
    if h.stamp_ns < 0:
        raise InvariantViolation(f"header.stamp_ns must be >= 0, got {h.stamp_ns}")
    _check_string(h.source, "header.source", max_bytes=255)


def validate_message(msg: Message) -> None:
    """Raise InvariantViolation if `msg` breaks any declared invariant."""
    _validate_header(msg.header)
    if isinstance(msg, PhysioRaw):
        _check_i64(msg.device_timestamp_ns, "device_timestamp_ns")
        if len(msg.channels) > _U16_MAX:
            raise InvariantViolation("more than 65535 channels")
        seen: set[str] = set()
        counts = {len(ch.samples) for ch in msg.channels}
        if len(counts) > 1:
            raise InvariantViolation("channels carry unequal sample counts")
        for ch in msg.channels:
            _check_string(ch.channel_name, "channel_name", max_bytes=255,
                          nonempty=True)
            if ch.channel_name in seen:
                raise InvariantViolation(f"duplicate channel {ch.channel_name!r}")
            seen.add(ch.channel_name)
            if len(ch.samples) > _U32_MAX:
                raise InvariantViolation("channel sample count exceeds u32")
            for s in ch.samples:
                if not math.isfinite(s):
                    raise InvariantViolation(
                        f"non-finite sample in channel {ch.channel_name!r}")
    elif isinstance(msg, DeviceFeature):
        _check_i64(msg.device_timestamp_ns, "device_timestamp_ns")
        _check_string(msg.name, "name", nonempty=True)
        _check_finite(msg.value, "value")
    elif isinstance(msg, (EcgFeatures, PpgFeatures)):
        _check_i64(msg.device_timestamp_ns, "device_timestamp_ns")
        _check_uint(msg.peak_count, 32, "peak_count")
        for fname in ("rr_ms", "sdnn_ms", "rmssd_ms", "pnn50_pct",
                      "heart_rate_bpm", "window_s"):
            _check_finite(getattr(msg, fname), fname)
        if not 0.0 <= msg.pnn50_pct <= 100.0:
            raise InvariantViolation(f"pnn50_pct outside [0,100]: {msg.pnn50_pct}")
    elif isinstance(msg, ExpressionEvent):
        _check_string(msg.human_id, "human_id")
        if msg.expression not in EXPRESSIONS:
            raise InvariantViolation(f"unknown expression {msg.expression!r}")
        _check_finite(msg.confidence, "confidence")
        if not 0.0 <= msg.confidence <= 1.0:
            raise InvariantViolation(f"confidence outside [0,1]: {msg.confidence}")
    elif isinstance(msg, AffectiveState):
        _check_string(msg.human_id, "human_id")
        if msg.state not in AFFECTIVE_STATES:
            raise InvariantViolation(f"unknown state {msg.state!r}")
        if msg.expression not in EXPRESSIONS:
            raise InvariantViolation(f"unknown expression {msg.expression!r}")
        _check_finite(msg.heart_rate_bpm, "heart_rate_bpm")
    elif isinstance(msg, BeatTruth):
        _check_i64(msg.beat_time_ns, "beat_time_ns")
    else:
        raise InvariantViolation(f"not a message type: {type(msg).__name__}")


# ---------------------------------------------------------------------------
# encoding

def _pack_string(raw: bytes) -> bytes:
    return struct.pack("<H", len(raw)) + raw


def _pack_header(h: Header) -> bytes:
    return (struct.pack("<Qq", h.seq, h.stamp_ns)
            + _pack_string(h.source.encode("utf-8")))


def encode_envelope(msg: Message) -> bytes:
    """Encode a message into its schema-tagged byte envelope."""
    validate_message(msg)
    schema = schema_id_of(msg)
    parts = [struct.pack("<H", schema), _pack_header(msg.header)]
    if isinstance(msg, PhysioRaw):
        parts.append(struct.pack("<qH", msg.device_timestamp_ns,
                                 len(msg.channels)))
        for ch in msg.channels:
            parts.append(_pack_string(ch.channel_name.encode("utf-8")))
            parts.append(struct.pack("<I", len(ch.samples)))
            parts.append(struct.pack(f"<{len(ch.samples)}d", *ch.samples))
    elif isinstance(msg, DeviceFeature):
        parts.append(struct.pack("<q", msg.device_timestamp_ns))
        parts.append(_pack_string(msg.name.encode("utf-8")))
        parts.append(struct.pack("<d", msg.value))
    elif isinstance(msg, (EcgFeatures, PpgFeatures)):
        parts.append(struct.pack(
            "<qdIddddd", msg.device_timestamp_ns, msg.rr_ms, msg.peak_count,
            msg.sdnn_ms, msg.rmssd_ms, msg.pnn50_pct, msg.heart_rate_bpm,
            msg.window_s))
    elif isinstance(msg, ExpressionEvent):
        parts.append(_pack_string(msg.human_id.encode("utf-8")))
        parts.append(struct.pack("<Bd", EXPRESSIONS.index(msg.expression),
                                 msg.confidence))
    elif isinstance(msg, AffectiveState):
        parts.append(_pack_string(msg.human_id.encode("utf-8")))
        parts.append(struct.pack("<BdB", AFFECTIVE_STATES.index(msg.state),
                                 msg.heart_rate_bpm,
                                 EXPRESSIONS.index(msg.expression)))
    elif isinstance(msg, BeatTruth):
        parts.append(struct.pack("<q", msg.beat_time_ns))
    return b"".join(parts)


# ---------------------------------------------------------------------------
# decoding

class _Cursor:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"input ends inside {what}", offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def i64(self, what: str) -> int:
        return struct.unpack("<q", self.take(8, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def string(self, what: str) -> str:
        n = self.u16(f"{what} length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedUtf8(f"{what} is not valid UTF-8") from exc

    def floats(self, n: int, what: str) -> tuple[float, ...]:
        raw = self.take(8 * n, what)
        return struct.unpack(f"<{n}d", raw)


def _read_header(cur: _Cursor) -> Header:
    seq = cur.u64("header.seq")
    stamp = cur.i64("header.stamp_ns")
    source = cur.string("header.source")
    return Header(seq=seq, stamp_ns=stamp, source=source)


def _enum_member(values: tuple[str, ...], index: int, what: str) -> str:
    if index >= len(values):
        raise InvariantViolation(f"{what} index {index} out of range")
    return values[index]


def decode_envelope(data: bytes) -> Message:
    """Decode envelope bytes back into a message.

    Strict inverse of :func:`encode_envelope`: the whole input must be
    consumed and the result must satisfy all type invariants.
    """
    cur = _Cursor(bytes(data))
    schema = cur.u16("schema_id")
    if schema not in SCHEMA_NAMES:
        raise UnknownSchema(f"unknown schema id {schema}")
    header = _read_header(cur)
    msg: Message
    if schema == SCHEMA_PHYSIO_RAW:
        device_ts = cur.i64("device_timestamp_ns")
        n_channels = cur.u16("channel_count")
        channels = []
        for _ in range(n_channels):
            name = cur.string("channel_name")
            n = cur.u32("sample_count")
            channels.append(PhysioRawChannel(name, cur.floats(n, "samples")))
        msg = PhysioRaw(header, device_ts, tuple(channels))
    elif schema == SCHEMA_DEVICE_FEATURE:
        device_ts = cur.i64("device_timestamp_ns")
        name = cur.string("name")
        value = cur.f64("value")
        msg = DeviceFeature(header, device_ts, name, value)
    elif schema in (SCHEMA_ECG_FEATURES, SCHEMA_PPG_FEATURES):
        device_ts = cur.i64("device_timestamp_ns")
        rr = cur.f64("rr_ms")
        peak_count = cur.u32("peak_count")
        sdnn = cur.f64("sdnn_ms")
        rmssd = cur.f64("rmssd_ms")
        pnn50 = cur.f64("pnn50_pct")
        hr = cur.f64("heart_rate_bpm")
        window = cur.f64("window_s")
        cls = EcgFeatures if schema == SCHEMA_ECG_FEATURES else PpgFeatures
        msg = cls(header, device_ts, rr, peak_count, sdnn, rmssd, pnn50, hr,
                  window)
    elif schema == SCHEMA_EXPRESSION_EVENT:
        human = cur.string("human_id")
        expr = _enum_member(EXPRESSIONS, cur.u8("expression"), "expression")
        confidence = cur.f64("confidence")
        msg = ExpressionEvent(header, human, expr, confidence)
    elif schema == SCHEMA_AFFECTIVE_STATE:
        human = cur.string("human_id")
        state = _enum_member(AFFECTIVE_STATES, cur.u8("state"), "state")
        hr = cur.f64("heart_rate_bpm")
        expr = _enum_member(EXPRESSIONS, cur.u8("expression"), "expression")
        msg = AffectiveState(header, human, state, hr, expr)
    else:
        msg = BeatTruth(header, cur.i64("beat_time_ns"))
    if cur.pos != len(cur.data):
        raise TrailingBytes(
            f"{len(cur.data) - cur.pos} trailing bytes after message")
    validate_message(msg)
    return msg


def peek_schema_id(data: bytes) -> int:
    """Schema id of an envelope without decoding the body."""
    if len(data) < 2:
        raise Truncated("input shorter than schema id", offset=0)
    schema = struct.unpack("<H", data[:2])[0]
    if schema not in SCHEMA_NAMES:
        raise UnknownSchema(f"unknown schema id {schema}")
    return schema


# ---------------------------------------------------------------------------
# JSON mapping (used by the bridge and `echo`)

def to_jsonable(msg: Message) -> dict:
    """Plain-dict form of a message, as documented in docs/bridge-protocol.md."""
    out: dict = {
        "header": {
            "seq": msg.header.seq,
            "stamp_ns": msg.header.stamp_ns,
            "source": msg.header.source,
        }
    }
    if isinstance(msg, PhysioRaw):
        out["device_timestamp_ns"] = msg.device_timestamp_ns
        out["channels"] = [
            {"channel_name": ch.channel_name, "samples": list(ch.samples)}
            for ch in msg.channels
        ]
    elif isinstance(msg, DeviceFeature):
        out["device_timestamp_ns"] = msg.device_timestamp_ns
        out["name"] = msg.name
        out["value"] = msg.value
    elif isinstance(msg, (EcgFeatures, PpgFeatures)):
        out["device_timestamp_ns"] = msg.device_timestamp_ns
        out["rr_ms"] = msg.rr_ms
        out["peak_count"] = msg.peak_count
        out["sdnn_ms"] = msg.sdnn_ms
        out["rmssd_ms"] = msg.rmssd_ms
        out["pnn50_pct"] = msg.pnn50_pct
        out["heart_rate_bpm"] = msg.heart_rate_bpm
        out["window_s"] = msg.window_s
    elif isinstance(msg, ExpressionEvent):
        out["human_id"] = msg.human_id
        out["expression"] = msg.expression
        out["confidence"] = msg.confidence
    elif isinstance(msg, AffectiveState):
        out["human_id"] = msg.human_id
        out["state"] = msg.state
        out["heart_rate_bpm"] = msg.heart_rate_bpm
        out["expression"] = msg.expression
    elif isinstance(msg, BeatTruth):
        out["beat_time_ns"] = msg.beat_time_ns
    return out
