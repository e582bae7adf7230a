"""WebSocket gateway: bus traffic and session control as JSON.

Protocol (text frames, UTF-8 JSON; full examples in
``docs/bridge-protocol.md``). Client commands:

* ``{"op": "subscribe", "pattern": ...}`` / ``unsubscribe``
* ``{"op": "list"}``
* ``{"op": "param_get", "node": ..., "names": [...]}``
* ``{"op": "record_start", "patterns": [...], "path": ...}``
* ``{"op": "record_stop"}``
* ``{"op": "annotate", "label": ...}`` — publishes an event marker on
  ``/experiment/events``
* ``{"op": "stats"}`` — per-topic decimation drop counters

Server messages: ``{"op": "msg", "topic", "schema", "bus_time_ns",
"data"}`` for deliveries, ``{"op": "status", "request", ...}`` for command
replies, ``{"op": "error", "message", ...}`` for failures. A malformed
command earns an error reply; the connection stays open and other clients
are never affected.

Raw-sample topics are decimated to at most 50 messages/s per client
subscription (drops counted, feature/state topics never decimated). One
recording session may be active per bridge process.
"""

from __future__ import annotations

import json
import logging
import threading

from websockets.sync.server import serve

from . import messages, recorder
from .bus import NOT_SET
from .errors import BindError, PhysioBusError
from .messages import DeviceFeature
from .topics import EXPERIMENT_EVENTS_TOPIC
from .wire import parse_address

log = logging.getLogger(__name__)

RAW_RATE_LIMIT_HZ = 50.0
_MIN_RAW_GAP_NS = int(1e9 / RAW_RATE_LIMIT_HZ)


def _is_raw_topic(topic: str) -> bool:
    return topic.endswith("/raw")


class _ClientSession:
    """Per-connection state: subscriptions, decimation, serialized sends."""

    def __init__(self, bridge: "Bridge", conn):
        self.bridge = bridge
        self.conn = conn
        self.send_lock = threading.Lock()
        self.subscriptions: dict[str, object] = {}
        self.last_raw_sent_ns: dict[str, int] = {}
        self.raw_dropped: dict[str, int] = {}
        self.state_lock = threading.Lock()

    def send_json(self, payload: dict) -> None:
        try:
            with self.send_lock:
                self.conn.send(json.dumps(payload))
        except Exception:
            pass  # connection teardown races are handled by the recv loop

    def deliver(self, delivery) -> None:
        if _is_raw_topic(delivery.topic):
            with self.state_lock:
                last = self.last_raw_sent_ns.get(delivery.topic)
                if (last is not None
                        and delivery.recv_time_ns - last < _MIN_RAW_GAP_NS):
                    self.raw_dropped[delivery.topic] = (
                        self.raw_dropped.get(delivery.topic, 0) + 1)
                    return
                self.last_raw_sent_ns[delivery.topic] = delivery.recv_time_ns
        self.send_json({
            "op": "msg",
            "topic": delivery.topic,
            "schema": messages.SCHEMA_NAMES[delivery.schema_id],
            "bus_time_ns": delivery.recv_time_ns,
            "data": messages.to_jsonable(delivery.message),
        })

    def close(self) -> None:
        for sub in self.subscriptions.values():
            sub.unsubscribe()
        self.subscriptions.clear()


class Bridge:
    def __init__(self, bus, address):
        host, port = parse_address(address)
        self.bus = bus
        self.node = bus.create_node(bus.unique_node_name("bridge"))
        self._record_lock = threading.Lock()
        self._recording: recorder.RecordingSession | None = None
        self._recording_path: str | None = None
        try:
            self._server = serve(self._handle_client, host, port)
        except OSError as exc:
            raise BindError(f"cannot bind ws://{host}:{port}: {exc}") from exc
        self.address = self._server.socket.getsockname()[:2]
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True, name="physiobus-bridge")
        self._thread.start()

    @property
    def url(self) -> str:
        return f"ws://{self.address[0]}:{self.address[1]}"

    # -- connection handling ----------------------------------------------

    def _handle_client(self, conn) -> None:
        session = _ClientSession(self, conn)
        try:
            for raw in conn:
                self._handle_command(session, raw)
        except Exception:
            pass
        finally:
            session.close()

    def _handle_command(self, session: _ClientSession, raw) -> None:
        try:
            cmd = json.loads(raw)
            if not isinstance(cmd, dict) or "op" not in cmd:
                raise ValueError("command must be an object with an 'op'")
        except (ValueError, TypeError) as exc:
            session.send_json({"op": "error", "request": None,
                               "message": f"malformed command: {exc}"})
            return
        op = cmd.get("op")
        handler = getattr(self, f"_op_{op}", None)
        if handler is None:
            session.send_json({"op": "error", "request": op,
                               "message": f"unknown op {op!r}"})
            return
        try:
            handler(session, cmd)
        except (PhysioBusError, ValueError, KeyError, TypeError) as exc:
            session.send_json({"op": "error", "request": op,
                               "message": str(exc)})
        except Exception:
            log.exception("bridge op %s failed", op)
            session.send_json({"op": "error", "request": op,
                               "message": "internal error"})

    # -- ops ----------------------------------------------------------------

    def _op_subscribe(self, session: _ClientSession, cmd: dict) -> None:
        pattern = cmd["pattern"]
        if pattern in session.subscriptions:
            session.send_json({"op": "status", "request": "subscribe",
                               "pattern": pattern, "already": True})
            return
        sub = self.node.subscribe(pattern, session.deliver)
        session.subscriptions[pattern] = sub
        session.send_json({"op": "status", "request": "subscribe",
                           "pattern": pattern})

    def _op_unsubscribe(self, session: _ClientSession, cmd: dict) -> None:
        pattern = cmd["pattern"]
        sub = session.subscriptions.pop(pattern, None)
        if sub is not None:
            sub.unsubscribe()
        session.send_json({"op": "status", "request": "unsubscribe",
                           "pattern": pattern, "known": sub is not None})

    def _op_list(self, session: _ClientSession, cmd: dict) -> None:
        entries = [{"topic": e.topic,
                    "schema": messages.SCHEMA_NAMES.get(e.schema_id),
                    "publisher": e.publisher,
                    "message_count": e.message_count,
                    "dropped_count": e.dropped_count}
                   for e in self.bus.list_topics()]
        session.send_json({"op": "status", "request": "list",
                           "topics": entries})

    def _op_param_get(self, session: _ClientSession, cmd: dict) -> None:
        node = cmd["node"]
        names = list(cmd["names"])
        reply = self.bus.get_parameters(node, names)
        params = [{"name": name,
                   "set": value is not NOT_SET,
                   "value": None if value is NOT_SET else value}
                  for name, value in reply]
        session.send_json({"op": "status", "request": "param_get",
                           "node": node, "params": params})

    def _op_record_start(self, session: _ClientSession, cmd: dict) -> None:
        patterns = list(cmd["patterns"])
        path = cmd["path"]
        with self._record_lock:
            if self._recording is not None:
                raise PhysioBusError(
                    f"a recording is already active: {self._recording_path}")
            self._recording = recorder.record(self.bus, patterns, path)
            self._recording_path = path
        session.send_json({"op": "status", "request": "record_start",
                           "path": path, "patterns": patterns})

    def _op_record_stop(self, session: _ClientSession, cmd: dict) -> None:
        with self._record_lock:
            if self._recording is None:
                raise PhysioBusError("no active recording")
            active, self._recording = self._recording, None
            path, self._recording_path = self._recording_path, None
        active.stop()
        session.send_json({"op": "status", "request": "record_stop",
                           "path": path, "records": active.record_count})

    def _op_annotate(self, session: _ClientSession, cmd: dict) -> None:
        label = str(cmd["label"])
        if not label:
            raise ValueError("label must be nonempty")
        now = self.bus.clock.now_ns()
        self.node.publish(EXPERIMENT_EVENTS_TOPIC, DeviceFeature(
            device_timestamp_ns=now, name=label, value=1.0))
        session.send_json({"op": "status", "request": "annotate",
                           "label": label, "bus_time_ns": now})

    def _op_stats(self, session: _ClientSession, cmd: dict) -> None:
        with session.state_lock:
            dropped = dict(session.raw_dropped)
        session.send_json({"op": "status", "request": "stats",
                           "raw_dropped": dropped})

    # -- lifecycle ----------------------------------------------------------

    def close(self) -> None:
        with self._record_lock:
            if self._recording is not None:
                try:
                    self._recording.stop()
                except PhysioBusError:
                    log.exception("failed to finalize recording on shutdown")
                self._recording = None
        self._server.shutdown()
        self.node.close()


def serve_ws(bus, address) -> Bridge:
    return Bridge(bus, address)
