"""In-process publish/subscribe broker with a node and parameter registry.

Delivery contract:

* per (publisher handle, topic) FIFO with contiguous auto-assigned ``seq``
* exactly-once delivery to every subscription whose pattern matches at
  publish time
* callbacks for one subscription run serially in receipt order; callbacks
  for different subscriptions may run on different threads (whichever
  thread publishes drains whatever queues it can claim)
* receipt time (``recv_time_ns``, broker clock) is stamped while routing,
  so any one subscription observes nondecreasing receipt times

Each subscription buffers at most ``QUEUE_SOFT_LIMIT`` undelivered
messages; beyond that the oldest are dropped and counted against the
dropped topic (visible in :meth:`Broker.list_topics` entries).

Node parameters are static hardware metadata fixed at registration; the
only exception is :meth:`NodeHandle.set_parameter_snapshot`, which nodes
use to expose read-only counters (documented per module).
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, replace

from . import messages, topics
from .errors import (
    DuplicateNodeName,
    InvalidPattern,
    InvalidTopic,
    UnknownNode,
)
from .messages import Message
from .runtime import RealRuntime, Runtime

log = logging.getLogger(__name__)

QUEUE_SOFT_LIMIT = 10_000

ParameterValue = float | int | str | bool


class _NotSet:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOT_SET"


NOT_SET = _NotSet()


def _check_parameters(params: dict[str, ParameterValue]) -> dict:
    out = {}
    for name, value in params.items():
        if not isinstance(name, str) or not name:
            raise ValueError(f"parameter name must be a nonempty string: {name!r}")
        if not isinstance(value, (bool, int, float, str)):
            raise ValueError(
                f"parameter {name!r} must be float/int/str/bool, got {value!r}")
        out[name] = value
    return out


@dataclass(frozen=True)
class TopicPattern:
    """Exact topic string, or a prefix pattern ending in ``/**``.

    ``/a/b/**`` matches every topic strictly under ``/a/b``; ``/**``
    matches everything.
    """

    raw: str
    prefix: str | None = None  # None for exact patterns

    @classmethod
    def parse(cls, raw: str) -> "TopicPattern":
        if not isinstance(raw, str) or not raw.startswith("/"):
            raise InvalidPattern(f"pattern must start with '/': {raw!r}")
        if raw.endswith("/**"):
            prefix = raw[:-3]
            if prefix:
                segments = prefix.split("/")
                if segments[0] != "" or not all(
                        topics.valid_token(s) for s in segments[1:]):
                    raise InvalidPattern(f"bad prefix segments in {raw!r}")
            return cls(raw, prefix=prefix)
        if "**" in raw:
            raise InvalidPattern(f"'**' only allowed as a trailing segment: {raw!r}")
        segments = raw.split("/")
        if segments[0] != "" or not all(
                topics.valid_token(s) for s in segments[1:]):
            raise InvalidPattern(f"bad topic segments in {raw!r}")
        return cls(raw)

    def matches(self, topic: str) -> bool:
        if self.prefix is None:
            return topic == self.raw
        return topic.startswith(self.prefix + "/")


@dataclass(frozen=True)
class ReceivedMessage:
    """What a subscription callback gets for each delivery."""

    topic: str
    message: Message
    envelope: bytes
    schema_id: int
    recv_time_ns: int
    publisher: str


@dataclass
class TopicEntry:
    topic: str
    schema_id: int
    publisher: str
    message_count: int = 0
    dropped_count: int = 0


class Subscription:
    """One callback attached to one or more topic patterns."""

    def __init__(self, broker: "Broker", node_name: str,
                 patterns: list[TopicPattern], callback):
        self._broker = broker
        self.node_name = node_name
        self._patterns = list(patterns)
        self._callback = callback
        self._queue: deque[ReceivedMessage] = deque()
        self._qlock = threading.Lock()
        self._drain_mutex = threading.Lock()
        self._closed = False
        self.dropped = 0

    @property
    def patterns(self) -> tuple[TopicPattern, ...]:
        return tuple(self._patterns)

    def _matches(self, topic: str) -> bool:
        return any(p.matches(topic) for p in self._patterns)

    def _enqueue(self, item: ReceivedMessage, entry: TopicEntry) -> None:
        with self._qlock:
            if len(self._queue) >= QUEUE_SOFT_LIMIT:
                victim = self._queue.popleft()
                self.dropped += 1
                self._broker._count_drop(victim.topic)
            self._queue.append(item)

    def _drain(self) -> None:
        while True:
            if not self._drain_mutex.acquire(blocking=False):
                return  # another thread is draining; it will see our items
            try:
                while True:
                    with self._qlock:
                        item = self._queue.popleft() if self._queue else None
                    if item is None or self._closed:
                        break
                    try:
                        self._callback(item)
                    except Exception:
                        log.exception("subscription callback failed (topic %s)",
                                      item.topic)
            finally:
                self._drain_mutex.release()
            if not self._queue or self._closed:
                return

    def add_pattern(self, pattern: TopicPattern) -> None:
        with self._broker._lock:
            self._patterns.append(pattern)

    def remove_pattern(self, raw: str) -> bool:
        with self._broker._lock:
            for i, p in enumerate(self._patterns):
                if p.raw == raw:
                    del self._patterns[i]
                    return True
        return False

    def unsubscribe(self) -> None:
        with self._broker._lock:
            self._closed = True
            if self in self._broker._subscriptions:
                self._broker._subscriptions.remove(self)


class NodeHandle:
    """A registered node: publishes, subscribes, owns static parameters."""

    def __init__(self, broker: "Broker", name: str,
                 parameters: dict[str, ParameterValue]):
        self._broker = broker
        self.name = name
        self._parameters = parameters
        self._seq: dict[str, int] = {}
        self._seq_lock = threading.Lock()
        self._subscriptions: list[Subscription] = []
        self._closed = False

    @property
    def parameters(self) -> dict[str, ParameterValue]:
        return dict(self._parameters)

    def set_parameter_snapshot(self, name: str, value: ParameterValue) -> None:
        """Update a read-only counter parameter (exception to immutability)."""
        self._parameters[name] = value

    def _next_seq(self, topic: str) -> int:
        with self._seq_lock:
            seq = self._seq.get(topic, 0)
            self._seq[topic] = seq + 1
            return seq

    def publish(self, topic: str, msg: Message) -> Message:
        """Publish `msg`, auto-assigning the header; returns the stamped copy."""
        if not topics.publishable(topic):
            raise InvalidTopic(f"topic not publishable: {topic!r}",
                               segment="topic")
        # validate the payload before consuming a sequence number, so a
        # rejected message leaves the stream contiguous
        messages.validate_message(replace(msg, header=messages.Header()))
        header = messages.Header(seq=self._next_seq(topic),
                                 stamp_ns=self._broker.clock.now_ns(),
                                 source=self.name)
        stamped = replace(msg, header=header)
        envelope = messages.encode_envelope(stamped)
        self._broker._route(self.name, topic, envelope, stamped)
        return stamped

    def publish_envelope(self, topic: str, envelope: bytes) -> None:
        """Publish pre-encoded envelope bytes verbatim (replay path).

        The payload is decoded once for validation and delivery, but the
        bytes on the wire and in logs are exactly `envelope`.
        """
        if not topics.publishable(topic):
            raise InvalidTopic(f"topic not publishable: {topic!r}",
                               segment="topic")
        msg = messages.decode_envelope(envelope)
        self._broker._route(self.name, topic, bytes(envelope), msg)

    def subscribe(self, pattern: str | TopicPattern, callback) -> Subscription:
        return self.subscribe_many([pattern], callback)

    def subscribe_many(self, patterns, callback) -> Subscription:
        parsed = [p if isinstance(p, TopicPattern) else TopicPattern.parse(p)
                  for p in patterns]
        sub = Subscription(self._broker, self.name, parsed, callback)
        with self._broker._lock:
            self._broker._subscriptions.append(sub)
            self._subscriptions.append(sub)
        return sub

    def close(self) -> None:
        """Unregister the node; its name becomes reusable."""
        if self._closed:
            return
        self._closed = True
        for sub in list(self._subscriptions):
            sub.unsubscribe()
        self._broker._remove_node(self.name)


class Broker:
    """The in-process message bus (see module docstring for guarantees)."""

    def __init__(self, runtime: Runtime | None = None):
        self.runtime = runtime or RealRuntime()
        self.clock = self.runtime.clock
        self._lock = threading.Lock()
        self._nodes: dict[str, NodeHandle] = {}
        self._topics: dict[str, TopicEntry] = {}
        self._subscriptions: list[Subscription] = []
        self._anon_counter = 0

    # -- nodes ---------------------------------------------------------

    def create_node(self, node_name: str,
                    parameters: dict[str, ParameterValue] | None = None
                    ) -> NodeHandle:
        params = _check_parameters(parameters or {})
        with self._lock:
            if node_name in self._nodes:
                raise DuplicateNodeName(f"node name in use: {node_name!r}")
            handle = NodeHandle(self, node_name, params)
            self._nodes[node_name] = handle
            return handle

    def unique_node_name(self, base: str) -> str:
        with self._lock:
            self._anon_counter += 1
            return f"{base}_{self._anon_counter}"

    def _remove_node(self, name: str) -> None:
        with self._lock:
            self._nodes.pop(name, None)

    def get_parameters(self, node_name: str, names: list[str]
                       ) -> list[tuple[str, ParameterValue | _NotSet]]:
        with self._lock:
            node = self._nodes.get(node_name)
        if node is None:
            raise UnknownNode(f"no node named {node_name!r}")
        return [(n, node._parameters.get(n, NOT_SET)) for n in names]

    def node_names(self) -> list[str]:
        with self._lock:
            return sorted(self._nodes)

    # -- topics ----------------------------------------------------------

    def list_topics(self) -> list[TopicEntry]:
        with self._lock:
            return [replace_entry(self._topics[t]) for t in sorted(self._topics)]

    def _count_drop(self, topic: str) -> None:
        # called with subscription qlock held; topic entry updates race-free
        entry = self._topics.get(topic)
        if entry is not None:
            entry.dropped_count += 1

    # -- routing ---------------------------------------------------------

    def _route(self, publisher: str, topic: str, envelope: bytes,
               msg: Message) -> None:
        schema_id = messages.schema_id_of(msg)
        with self._lock:
            recv = self.clock.now_ns()
            entry = self._topics.get(topic)
            if entry is None:
                entry = TopicEntry(topic=topic, schema_id=schema_id,
                                   publisher=publisher)
                self._topics[topic] = entry
            entry.schema_id = schema_id
            entry.message_count += 1
            item = ReceivedMessage(topic=topic, message=msg, envelope=envelope,
                                   schema_id=schema_id, recv_time_ns=recv,
                                   publisher=publisher)
            targets = [s for s in self._subscriptions if s._matches(topic)]
            for sub in targets:
                sub._enqueue(item, entry)
        for sub in targets:
            sub._drain()


def replace_entry(entry: TopicEntry) -> TopicEntry:
    return TopicEntry(entry.topic, entry.schema_id, entry.publisher,
                      entry.message_count, entry.dropped_count)
