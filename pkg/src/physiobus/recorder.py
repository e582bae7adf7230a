"""Synchronized multi-topic record and replay.

File layout (all little-endian, documented with a golden dump in
``docs/log-format.md``)::

    header:  magic "S4HBAG1\\0" (8 bytes)
             created_ns   i64
             meta_count   u16
             meta_count × (key string, value string)   # u16 len + UTF-8
    record:  total_len    u32      # bytes after this field
             recv_ns      i64      # broker receipt time
             topic        string   # u16 len + UTF-8
             payload_len  u32
             payload      envelope bytes, verbatim

Records appear in broker receipt order with nondecreasing ``recv_ns``. A
session streams records to disk as they arrive; ``stop()`` finalizes the
file by rewriting it with close-time metadata in the header (one
``offset_ns:<topic>`` device-clock offset estimate per recorded stream
that carries device timestamps) via a temp file and atomic replace, so a
crash mid-session leaves a readable metadata-free log and a crash during
finalize leaves the original.

Replay republishes payload bytes verbatim on the original topics, pacing
inter-record gaps at ``original / rate``.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import messages
from .bus import TopicPattern
from .errors import IoError, LogFormatError, NoObservations, Truncated
from .timesync import OffsetEstimator

MAGIC = b"S4HBAG1\x00"

_DEVICE_TS_SCHEMAS = frozenset({
    messages.SCHEMA_PHYSIO_RAW, messages.SCHEMA_DEVICE_FEATURE,
    messages.SCHEMA_ECG_FEATURES, messages.SCHEMA_PPG_FEATURES,
})


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise IoError(f"string field exceeds u16 length: {len(raw)} bytes")
    return struct.pack("<H", len(raw)) + raw


def _pack_header(created_ns: int, metadata: list[tuple[str, str]]) -> bytes:
    parts = [MAGIC, struct.pack("<qH", created_ns, len(metadata))]
    for key, value in metadata:
        parts.append(_pack_string(key))
        parts.append(_pack_string(value))
    return b"".join(parts)


def _pack_record(recv_ns: int, topic: str, payload: bytes) -> bytes:
    topic_field = _pack_string(topic)
    total = 8 + len(topic_field) + 4 + len(payload)
    return (struct.pack("<I", total) + struct.pack("<q", recv_ns)
            + topic_field + struct.pack("<I", len(payload)) + payload)


@dataclass(frozen=True)
class LogRecord:
    recv_bus_time_ns: int
    topic: str
    payload: bytes


@dataclass
class TopicSummary:
    topic: str
    count: int
    first_ns: int
    last_ns: int


@dataclass
class LogSummary:
    created_ns: int
    metadata: dict[str, str]
    record_count: int
    topics: list[TopicSummary] = field(default_factory=list)

    @property
    def span_ns(self) -> tuple[int, int] | None:
        if not self.topics:
            return None
        return (min(t.first_ns for t in self.topics),
                max(t.last_ns for t in self.topics))


class RecordingSession:
    """Single-writer recording of every message matching the patterns."""

    def __init__(self, bus, patterns, path):
        parsed = [p if isinstance(p, TopicPattern) else TopicPattern.parse(p)
                  for p in patterns]
        self.path = Path(path)
        created = bus.clock.now_ns()
        try:
            self._file = open(self.path, "wb")
            self._file.write(_pack_header(created, []))
            self._file.flush()
        except OSError as exc:
            raise IoError(f"cannot write {self.path}: {exc}") from exc
        self._created_ns = created
        self._io_lock = threading.Lock()
        self._closed = False
        self.record_count = 0
        self._estimators: dict[str, OffsetEstimator] = {}
        self._node = bus.create_node(bus.unique_node_name("recorder"))
        self._sub = self._node.subscribe_many(parsed, self._on_message)

    def _on_message(self, delivery) -> None:
        with self._io_lock:
            if self._closed:
                return
            self._file.write(_pack_record(delivery.recv_time_ns,
                                          delivery.topic, delivery.envelope))
            self.record_count += 1
            if delivery.schema_id in _DEVICE_TS_SCHEMAS:
                est = self._estimators.setdefault(delivery.topic,
                                                  OffsetEstimator())
                est.observe(delivery.message.device_timestamp_ns,
                            delivery.recv_time_ns)

    def stop(self) -> Path:
        """Flush, write close-time metadata into the header, close."""
        self._sub.unsubscribe()
        self._node.close()
        with self._io_lock:
            if self._closed:
                return self.path
            self._closed = True
            self._file.flush()
            self._file.close()
        metadata = []
        for topic in sorted(self._estimators):
            try:
                estimate = self._estimators[topic].estimate_ns
            except NoObservations:
                continue
            metadata.append((f"offset_ns:{topic}", str(estimate)))
        body = self.path.read_bytes()[len(_pack_header(self._created_ns, [])):]
        tmp = self.path.with_name(self.path.name + ".tmp")
        try:
            with open(tmp, "wb") as f:
                f.write(_pack_header(self._created_ns, metadata))
                f.write(body)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.path)
        except OSError as exc:
            raise IoError(f"cannot finalize {self.path}: {exc}") from exc
        return self.path


def record(bus, patterns, path) -> RecordingSession:
    return RecordingSession(bus, patterns, path)


# ---------------------------------------------------------------------------
# reading

class _Reader:
    def __init__(self, data: bytes, record_base: int = 0):
        self.data = data
        self.pos = 0
        self.intact_records = record_base

    def _fail(self, what: str):
        raise Truncated(f"log ends inside {what}", offset=self.pos,
                        intact_records=self.intact_records)

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            self._fail(what)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def string(self, what: str) -> str:
        n = struct.unpack("<H", self.take(2, f"{what} length"))[0]
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise LogFormatError(f"{what} is not valid UTF-8") from None


def _read_log(path) -> tuple[LogSummary, list[LogRecord]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise LogFormatError(f"{path}: bad magic, not a recording")
    reader = _Reader(data)
    reader.pos = len(MAGIC)
    created_ns, meta_count = struct.unpack(
        "<qH", reader.take(10, "log header"))
    metadata: dict[str, str] = {}
    for _ in range(meta_count):
        key = reader.string("metadata key")
        metadata[key] = reader.string("metadata value")

    records: list[LogRecord] = []
    per_topic: dict[str, TopicSummary] = {}
    while reader.pos < len(data):
        record_start = reader.pos
        reader.intact_records = len(records)
        total_len = struct.unpack("<I", reader.take(4, "record length"))[0]
        if reader.pos + total_len > len(data):
            raise Truncated(
                f"log ends inside record {len(records)}",
                offset=record_start, intact_records=len(records))
        body = _Reader(data[reader.pos:reader.pos + total_len],
                       record_base=len(records))
        recv_ns = struct.unpack("<q", body.take(8, "record recv_ns"))[0]
        topic = body.string("record topic")
        payload_len = struct.unpack("<I", body.take(4, "payload length"))[0]
        payload = body.take(payload_len, "record payload")
        if body.pos != total_len:
            raise LogFormatError(
                f"record {len(records)}: length field does not match body")
        reader.pos += total_len
        records.append(LogRecord(recv_ns, topic, payload))
        summary = per_topic.get(topic)
        if summary is None:
            per_topic[topic] = TopicSummary(topic, 1, recv_ns, recv_ns)
        else:
            summary.count += 1
            summary.last_ns = max(summary.last_ns, recv_ns)
            summary.first_ns = min(summary.first_ns, recv_ns)
    summary = LogSummary(created_ns=created_ns, metadata=metadata,
                         record_count=len(records),
                         topics=[per_topic[t] for t in sorted(per_topic)])
    return summary, records


def list_log(path) -> LogSummary:
    """Single sequential scan; raises Truncated with the intact prefix size."""
    summary, _ = _read_log(path)
    return summary


def read_records(path) -> list[LogRecord]:
    return _read_log(path)[1]


class ReplayHandle:
    def __init__(self, total: int):
        self.total = total
        self.published = 0
        self.done = threading.Event()

    def wait(self, timeout: float | None = None) -> bool:
        return self.done.wait(timeout)


def replay(bus, path, rate: float = 1.0, start_delay_s: float = 0.01
           ) -> ReplayHandle:
    """Republish a log's records on their original topics.

    Inter-record gaps are scaled by ``1/rate``; payload bytes are forwarded
    unmodified. Returns immediately; drive the bus runtime (simulated) or
    ``handle.wait()`` (real time) for completion.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    _, records = _read_log(path)
    handle = ReplayHandle(len(records))
    node = bus.create_node(bus.unique_node_name("replay"))
    if not records:
        node.close()
        handle.done.set()
        return handle
    runtime = bus.runtime
    t_start = runtime.now_ns() + int(start_delay_s * 1e9)
    base = records[0].recv_bus_time_ns

    def publish_at(index: int):
        def task():
            rec = records[index]
            node.publish_envelope(rec.topic, rec.payload)
            handle.published += 1
            if index + 1 < len(records):
                due = t_start + int(
                    (records[index + 1].recv_bus_time_ns - base) / rate)
                runtime.schedule_at(due, publish_at(index + 1))
            else:
                node.close()
                handle.done.set()
        return task

    runtime.schedule_at(t_start, publish_at(0))
    return handle
