"""Framed TCP transport: remote nodes against a central broker.

Both directions start with the 4-byte magic ``S4H1``, then exchange frames
``[u32 frame_len][u8 frame_type][body]`` (little-endian; ``frame_len``
covers the type byte plus body). Strings are u16-length + UTF-8, matching
the envelope encoding. Frame types:

====  ==========  ====================================================
 1    SUB         pattern string
 2    UNSUB       pattern string
 3    MSG         topic string + envelope bytes (to end of frame)
 4    PARAM_REQ   u32 corr_id + node string + u16 count + name strings
 5    PARAM_REP   u32 corr_id + u8 ok + u16 count + entries
 6    LIST_REQ    u32 corr_id
 7    LIST_REP    u32 corr_id + u32 count + entries
 8    HELLO       node string + u16 count + typed parameter entries
====  ==========  ====================================================

Typed parameter entries are ``name string + u8 tag + value`` with tags
0=not-set (no value), 1=f64, 2=i64, 3=string, 4=bool(u8). PARAM_REP with
``ok=0`` signals an unknown node. LIST_REP entries are ``topic string +
u16 schema_id + publisher string``.

MSG is symmetric: client→broker publishes, broker→client delivers. The
envelope bytes cross the wire verbatim in both directions, so a remote
subscriber sees exactly the bytes the publisher encoded. A connection is
one node: HELLO must come first; dropping the connection removes its
subscriptions and registration, freeing the node name.

Malformed frames close the offending connection with a logged
ProtocolError; other clients are unaffected.
"""

from __future__ import annotations

import itertools
import logging
import os
import socket
import struct
import threading
from collections import deque
from dataclasses import replace

from . import messages, topics
from .bus import (
    NOT_SET,
    QUEUE_SOFT_LIMIT,
    ReceivedMessage,
    TopicEntry,
    TopicPattern,
)
from .errors import (
    BindError,
    ConnectError,
    InvalidTopic,
    ProtocolError,
    UnknownNode,
)
from .runtime import RealRuntime

log = logging.getLogger(__name__)

MAGIC = b"S4H1"

FRAME_SUB = 1
FRAME_UNSUB = 2
FRAME_MSG = 3
FRAME_PARAM_REQ = 4
FRAME_PARAM_REP = 5
FRAME_LIST_REQ = 6
FRAME_LIST_REP = 7
FRAME_HELLO = 8

MAX_FRAME = 64 * 1024 * 1024

PARAM_NOT_SET = 0
PARAM_F64 = 1
PARAM_I64 = 2
PARAM_STR = 3
PARAM_BOOL = 4


def _rand_hex(n: int) -> str:
    return os.urandom(n).hex()


def parse_address(address) -> tuple[str, int]:
    if isinstance(address, tuple):
        return address
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be host:port, got {address!r}")
    return host, int(port)


# ---------------------------------------------------------------------------
# frame packing / parsing

def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _pack_frame(frame_type: int, body: bytes) -> bytes:
    return struct.pack("<IB", 1 + len(body), frame_type) + body


def _pack_param_value(value) -> bytes:
    if value is NOT_SET:
        return struct.pack("<B", PARAM_NOT_SET)
    if isinstance(value, bool):
        return struct.pack("<BB", PARAM_BOOL, int(value))
    if isinstance(value, int):
        return struct.pack("<Bq", PARAM_I64, value)
    if isinstance(value, float):
        return struct.pack("<Bd", PARAM_F64, value)
    if isinstance(value, str):
        return struct.pack("<B", PARAM_STR) + _pack_string(value)
    raise ProtocolError(f"unsupported parameter value {value!r}")


class _FrameReader:
    def __init__(self, body: bytes):
        self.body = body
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.body):
            raise ProtocolError(f"frame ends inside {what}")
        out = self.body[self.pos:self.pos + n]
        self.pos += n
        return out

    def rest(self) -> bytes:
        out = self.body[self.pos:]
        self.pos = len(self.body)
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what: str) -> str:
        n = self.u16(f"{what} length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ProtocolError(f"{what} is not valid UTF-8") from None

    def param_value(self, what: str):
        tag = self.u8(f"{what} tag")
        if tag == PARAM_NOT_SET:
            return NOT_SET
        if tag == PARAM_F64:
            return struct.unpack("<d", self.take(8, what))[0]
        if tag == PARAM_I64:
            return struct.unpack("<q", self.take(8, what))[0]
        if tag == PARAM_STR:
            return self.string(what)
        if tag == PARAM_BOOL:
            return bool(self.u8(what))
        raise ProtocolError(f"unknown parameter tag {tag} in {what}")

    def done(self, what: str) -> None:
        if self.pos != len(self.body):
            raise ProtocolError(f"trailing bytes in {what} frame")


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == n:
                return None
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _read_frame(sock: socket.socket) -> tuple[int, _FrameReader] | None:
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (frame_len,) = struct.unpack("<I", head)
    if frame_len < 1 or frame_len > MAX_FRAME:
        raise ProtocolError(f"bad frame length {frame_len}")
    body = _recv_exact(sock, frame_len)
    if body is None:
        raise ProtocolError("connection closed mid-frame")
    return body[0], _FrameReader(body[1:])


class _Sender:
    """Per-connection outbound queue with a writer thread.

    Keeps slow peers from blocking broker callbacks; beyond the soft limit
    the oldest frames are dropped (counted in `dropped`).
    """

    def __init__(self, sock: socket.socket, name: str):
        self._sock = sock
        self._queue: deque[bytes] = deque()
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name=f"physiobus-send-{name}")
        self._thread.start()

    def send(self, frame: bytes) -> None:
        with self._cond:
            if self._closed:
                return
            if len(self._queue) >= QUEUE_SOFT_LIMIT:
                self._queue.popleft()
                self.dropped += 1
            self._queue.append(frame)
            self._cond.notify()

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._closed:
                    self._cond.wait()
                if self._closed:
                    return
                frame = self._queue.popleft()
            try:
                self._sock.sendall(frame)
            except OSError:
                self.close()
                return

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._queue.clear()
            self._cond.notify()


# ---------------------------------------------------------------------------
# server side

class TcpServer:
    def __init__(self, broker, address):
        host, port = parse_address(address)
        self.broker = broker
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self.address = self._listener.getsockname()[:2]
        self._closed = False
        self._conn_lock = threading.Lock()
        self._connections: set[socket.socket] = set()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True,
                                        name="physiobus-tcp-accept")
        self._thread.start()

    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                sock, peer = self._listener.accept()
            except OSError:
                return
            with self._conn_lock:
                self._connections.add(sock)
            threading.Thread(target=self._serve_client, args=(sock, peer),
                             daemon=True,
                             name=f"physiobus-tcp-{peer}").start()

    def _serve_client(self, sock: socket.socket, peer) -> None:
        node = None
        sub = None
        sender = None
        try:
            sock.sendall(MAGIC)
            magic = _recv_exact(sock, 4)
            if magic != MAGIC:
                raise ProtocolError(f"bad magic from {peer}")
            first = _read_frame(sock)
            if first is None:
                return
            frame_type, reader = first
            if frame_type != FRAME_HELLO:
                raise ProtocolError("first frame must be HELLO")
            node_name = reader.string("node name")
            params = {}
            for _ in range(reader.u16("param count")):
                name = reader.string("param name")
                params[name] = reader.param_value("param value")
            reader.done("HELLO")
            node = self.broker.create_node(node_name, params)
            sender = _Sender(sock, node_name)

            def on_delivery(delivery: ReceivedMessage) -> None:
                sender.send(_pack_frame(
                    FRAME_MSG,
                    _pack_string(delivery.topic) + delivery.envelope))

            sub = node.subscribe_many([], on_delivery)
            while True:
                frame = _read_frame(sock)
                if frame is None:
                    return
                self._handle_frame(node, sub, sender, *frame)
        except ProtocolError as exc:
            log.warning("tcp client %s: %s", peer, exc)
        except OSError:
            pass
        except Exception:
            log.exception("tcp client %s failed", peer)
        finally:
            if sub is not None:
                sub.unsubscribe()
            if node is not None:
                node.close()
            if sender is not None:
                sender.close()
            with self._conn_lock:
                self._connections.discard(sock)
            try:
                sock.close()
            except OSError:
                pass

    def _handle_frame(self, node, sub, sender: _Sender, frame_type: int,
                      reader: _FrameReader) -> None:
        if frame_type == FRAME_SUB:
            pattern = reader.string("pattern")
            reader.done("SUB")
            sub.add_pattern(TopicPattern.parse(pattern))
        elif frame_type == FRAME_UNSUB:
            pattern = reader.string("pattern")
            reader.done("UNSUB")
            sub.remove_pattern(pattern)
        elif frame_type == FRAME_MSG:
            topic = reader.string("topic")
            envelope = reader.rest()
            node.publish_envelope(topic, envelope)
        elif frame_type == FRAME_PARAM_REQ:
            corr = reader.u32("corr_id")
            target = reader.string("node name")
            names = [reader.string("param name")
                     for _ in range(reader.u16("name count"))]
            reader.done("PARAM_REQ")
            try:
                entries = self.broker.get_parameters(target, names)
                body = struct.pack("<IBH", corr, 1, len(entries))
                for name, value in entries:
                    body += _pack_string(name) + _pack_param_value(value)
            except UnknownNode:
                body = struct.pack("<IBH", corr, 0, 0)
            sender.send(_pack_frame(FRAME_PARAM_REP, body))
        elif frame_type == FRAME_LIST_REQ:
            corr = reader.u32("corr_id")
            reader.done("LIST_REQ")
            entries = self.broker.list_topics()
            body = struct.pack("<II", corr, len(entries))
            for entry in entries:
                body += (_pack_string(entry.topic)
                         + struct.pack("<H", entry.schema_id)
                         + _pack_string(entry.publisher))
            sender.send(_pack_frame(FRAME_LIST_REP, body))
        else:
            raise ProtocolError(f"unexpected frame type {frame_type}")

    def close(self) -> None:
        self._closed = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._conn_lock:
            for sock in list(self._connections):
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                try:
                    sock.close()
                except OSError:
                    pass


def serve_tcp(broker, address) -> TcpServer:
    return TcpServer(broker, address)


# ---------------------------------------------------------------------------
# client side

class RemoteSubscription:
    """One callback over one or more patterns, like the broker-side class."""

    def __init__(self, client: "RemoteNode", patterns: list[TopicPattern],
                 callback):
        self._client = client
        self.patterns = list(patterns)
        self._callback = callback
        self._queue: deque[ReceivedMessage] = deque()
        self._qlock = threading.Lock()
        self._drain_mutex = threading.Lock()
        self._closed = False
        self.dropped = 0

    def _matches(self, topic: str) -> bool:
        return any(p.matches(topic) for p in self.patterns)

    def _enqueue(self, item: ReceivedMessage) -> None:
        with self._qlock:
            if len(self._queue) >= QUEUE_SOFT_LIMIT:
                self._queue.popleft()
                self.dropped += 1
            self._queue.append(item)

    def _drain(self) -> None:
        while True:
            if not self._drain_mutex.acquire(blocking=False):
                return
            try:
                while True:
                    with self._qlock:
                        item = self._queue.popleft() if self._queue else None
                    if item is None or self._closed:
                        break
                    try:
                        self._callback(item)
                    except Exception:
                        log.exception("remote subscription callback failed")
            finally:
                self._drain_mutex.release()
            if not self._queue or self._closed:
                return

    def unsubscribe(self) -> None:
        self._closed = True
        self._client._remove_subscription(self)


class RemoteNode:
    """Client-side node handle speaking the framed protocol.

    Remote deliveries stamp ``recv_time_ns`` with the client clock at
    arrival (broker receipt times are not carried by MSG frames) and leave
    ``publisher`` empty.
    """

    def __init__(self, address, node_name: str | None = None,
                 parameters: dict | None = None, runtime=None):
        host, port = parse_address(address)
        self.name = node_name or f"client_{_rand_hex(4)}"
        self.runtime = runtime or RealRuntime()
        self.clock = self.runtime.clock
        try:
            self._sock = socket.create_connection((host, port), timeout=10)
        except OSError as exc:
            raise ConnectError(f"cannot connect {host}:{port}: {exc}") from exc
        self._sock.settimeout(None)
        self._seq: dict[str, int] = {}
        self._seq_lock = threading.Lock()
        self._subs: list[RemoteSubscription] = []
        self._subs_lock = threading.Lock()
        self._corr = itertools.count(1)
        self._pending: dict[int, tuple[threading.Event, list]] = {}
        self._closed = False

        self._sock.sendall(MAGIC)
        magic = _recv_exact(self._sock, 4)
        if magic != MAGIC:
            self._sock.close()
            raise ConnectError("server did not send protocol magic")
        body = _pack_string(self.name)
        params = parameters or {}
        body += struct.pack("<H", len(params))
        for name, value in params.items():
            body += _pack_string(name) + _pack_param_value(value)
        self._sender = _Sender(self._sock, f"client-{self.name}")
        self._sender.send(_pack_frame(FRAME_HELLO, body))
        self._reader = threading.Thread(target=self._read_loop, daemon=True,
                                        name=f"physiobus-recv-{self.name}")
        self._reader.start()

    # -- node surface -----------------------------------------------------

    def publish(self, topic: str, msg):
        if not topics.publishable(topic):
            raise InvalidTopic(f"topic not publishable: {topic!r}",
                               segment="topic")
        messages.validate_message(replace(msg, header=messages.Header()))
        with self._seq_lock:
            seq = self._seq.get(topic, 0)
            self._seq[topic] = seq + 1
        stamped = replace(msg, header=messages.Header(
            seq=seq, stamp_ns=self.clock.now_ns(), source=self.name))
        envelope = messages.encode_envelope(stamped)
        self._sender.send(_pack_frame(FRAME_MSG,
                                      _pack_string(topic) + envelope))
        return stamped

    def publish_envelope(self, topic: str, envelope: bytes) -> None:
        if not topics.publishable(topic):
            raise InvalidTopic(f"topic not publishable: {topic!r}",
                               segment="topic")
        messages.decode_envelope(envelope)
        self._sender.send(_pack_frame(FRAME_MSG,
                                      _pack_string(topic) + bytes(envelope)))

    def subscribe(self, pattern, callback) -> RemoteSubscription:
        return self.subscribe_many([pattern], callback)

    def subscribe_many(self, patterns, callback) -> RemoteSubscription:
        parsed = [p if isinstance(p, TopicPattern) else TopicPattern.parse(p)
                  for p in patterns]
        sub = RemoteSubscription(self, parsed, callback)
        with self._subs_lock:
            self._subs.append(sub)
        for pattern in parsed:
            self._sender.send(_pack_frame(FRAME_SUB,
                                          _pack_string(pattern.raw)))
        return sub

    def _remove_subscription(self, sub: RemoteSubscription) -> None:
        with self._subs_lock:
            if sub in self._subs:
                self._subs.remove(sub)
        if not self._closed:
            for pattern in sub.patterns:
                self._sender.send(_pack_frame(FRAME_UNSUB,
                                              _pack_string(pattern.raw)))

    # -- services ---------------------------------------------------------

    def _request(self, frame_type: int, body: bytes, corr: int,
                 timeout: float):
        event = threading.Event()
        slot: list = []
        self._pending[corr] = (event, slot)
        try:
            self._sender.send(_pack_frame(frame_type, body))
            if not event.wait(timeout):
                raise ProtocolError("request timed out")
            return slot[0]
        finally:
            self._pending.pop(corr, None)

    def get_parameters(self, node_name: str, names: list[str],
                       timeout: float = 5.0):
        corr = next(self._corr)
        body = struct.pack("<I", corr) + _pack_string(node_name)
        body += struct.pack("<H", len(names))
        for name in names:
            body += _pack_string(name)
        ok, entries = self._request(FRAME_PARAM_REQ, body, corr, timeout)
        if not ok:
            raise UnknownNode(f"no node named {node_name!r}")
        return entries

    def list_topics(self, timeout: float = 5.0) -> list[TopicEntry]:
        corr = next(self._corr)
        _, entries = self._request(FRAME_LIST_REQ, struct.pack("<I", corr),
                                   corr, timeout)
        return entries

    # -- inbound ----------------------------------------------------------

    def _read_loop(self) -> None:
        try:
            while True:
                frame = _read_frame(self._sock)
                if frame is None:
                    return
                frame_type, reader = frame
                if frame_type == FRAME_MSG:
                    self._on_msg(reader)
                elif frame_type == FRAME_PARAM_REP:
                    corr = reader.u32("corr_id")
                    ok = reader.u8("ok")
                    entries = []
                    for _ in range(reader.u16("entry count")):
                        name = reader.string("param name")
                        entries.append((name, reader.param_value("param")))
                    self._complete(corr, (bool(ok), entries))
                elif frame_type == FRAME_LIST_REP:
                    corr = reader.u32("corr_id")
                    entries = []
                    for _ in range(reader.u32("entry count")):
                        topic = reader.string("topic")
                        schema = reader.u16("schema_id")
                        publisher = reader.string("publisher")
                        entries.append(TopicEntry(topic, schema, publisher))
                    self._complete(corr, (True, entries))
                else:
                    raise ProtocolError(
                        f"unexpected frame type {frame_type} from server")
        except (ProtocolError, OSError) as exc:
            if not self._closed:
                log.warning("remote node %s: connection lost: %s",
                            self.name, exc)
        finally:
            self.close()

    def _complete(self, corr: int, result) -> None:
        pending = self._pending.get(corr)
        if pending is not None:
            event, slot = pending
            slot.append(result)
            event.set()

    def _on_msg(self, reader: _FrameReader) -> None:
        topic = reader.string("topic")
        envelope = reader.rest()
        msg = messages.decode_envelope(envelope)
        item = ReceivedMessage(
            topic=topic, message=msg, envelope=envelope,
            schema_id=messages.schema_id_of(msg),
            recv_time_ns=self.clock.now_ns(), publisher="")
        with self._subs_lock:
            targets = [s for s in self._subs if s._matches(topic)]
        for sub in targets:
            sub._enqueue(item)
        for sub in targets:
            sub._drain()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._sender.close()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass
        for event, slot in list(self._pending.values()):
            event.set()


def connect_tcp(address, node_name: str | None = None,
                parameters: dict | None = None, runtime=None) -> RemoteNode:
    return RemoteNode(address, node_name=node_name, parameters=parameters,
                      runtime=runtime)


class RemoteBus:
    """Bus-like facade over TCP: one connection per created node.

    A dedicated service connection answers list/parameter queries. Lets
    the node classes (drivers, interpreters, fusion, recorder) run
    unchanged against a remote broker.
    """

    def __init__(self, address, runtime=None):
        self.address = address
        self.runtime = runtime or RealRuntime()
        self.clock = self.runtime.clock
        self._service = RemoteNode(address, runtime=self.runtime)
        self._counter = itertools.count(1)
        self._nodes: list[RemoteNode] = []

    def create_node(self, node_name: str, parameters: dict | None = None
                    ) -> RemoteNode:
        node = RemoteNode(self.address, node_name=node_name,
                          parameters=parameters, runtime=self.runtime)
        self._nodes.append(node)
        return node

    def unique_node_name(self, base: str) -> str:
        return f"{base}_{_rand_hex(3)}_{next(self._counter)}"

    def get_parameters(self, node_name: str, names: list[str]):
        return self._service.get_parameters(node_name, names)

    def list_topics(self):
        return self._service.list_topics()

    def close(self) -> None:
        for node in self._nodes:
            node.close()
        self._service.close()
