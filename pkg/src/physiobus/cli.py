"""Command-line entry point.

Subcommands: ``bus`` (run a broker), ``launch`` (node graph from a JSON
config), ``list``, ``echo``, ``param get``, ``describe``, ``record``,
``replay``, ``bridge``. Exit codes: 0 success, 1 usage/config error,
2 runtime error; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import messages, recorder
from .bridge import serve_ws
from .bus import NOT_SET, Broker
from .drivers import (
    EcgSimConfig,
    ExpressionScript,
    PpgSimConfig,
    run_ecg_driver,
    run_ppg_driver,
)
from .errors import PhysioBusError
from .fusion import FusionConfig, run_fusion_node
from .interpreters import run_ecg_interpreter, run_ppg_interpreter
from .registry import INDICATOR_TABLE
from .runtime import RealRuntime, SimRuntime
from .wire import RemoteBus, serve_tcp

DEFAULT_BUS_ADDRESS = "127.0.0.1:7447"

NODE_KINDS = ("ecg_driver", "ppg_driver", "ecg_interpreter",
              "ppg_interpreter", "fusion", "expression_script", "replay")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="physiobus",
                     description="physiological sensing middleware")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bus", help="run a broker listening on TCP")
    p.add_argument("--listen", default=DEFAULT_BUS_ADDRESS)

    p = sub.add_parser("launch", help="start a node graph from a JSON config")
    p.add_argument("config")
    p.add_argument("--bus", help="connect to a remote broker instead of "
                                 "running in-process")
    p.add_argument("--serve", help="also serve the in-process broker on TCP")
    p.add_argument("--ws", help="also serve the dashboard bridge (host:port)")
    p.add_argument("--duration", type=float,
                   help="stop after this many seconds")
    p.add_argument("--sim", action="store_true",
                   help="run on a simulated clock as fast as possible "
                        "(requires --duration)")

    p = sub.add_parser("list", help="list active topics")
    p.add_argument("--bus", default=DEFAULT_BUS_ADDRESS)

    p = sub.add_parser("echo", help="print decoded messages as JSON lines")
    p.add_argument("topic")
    p.add_argument("--bus", default=DEFAULT_BUS_ADDRESS)
    p.add_argument("--count", type=int, help="exit after N messages")

    p = sub.add_parser("param", help="query node parameters")
    param_sub = p.add_subparsers(dest="param_command", required=True)
    g = param_sub.add_parser("get")
    g.add_argument("node")
    g.add_argument("names", nargs="+")
    g.add_argument("--bus", default=DEFAULT_BUS_ADDRESS)

    p = sub.add_parser("describe",
                       help="print the indicator categories of a modality")
    p.add_argument("sensor_type")

    p = sub.add_parser("record", help="record matching topics to a log file")
    p.add_argument("patterns", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--bus", default=DEFAULT_BUS_ADDRESS)
    p.add_argument("--duration", type=float)

    p = sub.add_parser("replay", help="republish a recorded log")
    p.add_argument("path")
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--bus", default=DEFAULT_BUS_ADDRESS)

    p = sub.add_parser("bridge", help="serve the WebSocket dashboard bridge")
    p.add_argument("--ws", default="127.0.0.1:8090")
    p.add_argument("--bus", default=DEFAULT_BUS_ADDRESS)
    return parser


# ---------------------------------------------------------------------------
# launch

def _validate_launch_config(config: dict) -> list[dict]:
    if not isinstance(config, dict) or not isinstance(config.get("nodes"),
                                                      list):
        raise ValueError("config must be an object with a 'nodes' list")
    nodes = config["nodes"]
    for i, node in enumerate(nodes):
        if not isinstance(node, dict):
            raise ValueError(f"nodes[{i}] must be an object")
        kind = node.get("kind")
        if kind not in NODE_KINDS:
            raise ValueError(f"nodes[{i}]: unknown kind {kind!r}")
        if kind != "replay" and "human_id" not in node:
            raise ValueError(f"nodes[{i}] ({kind}): missing human_id")
        if kind in ("ecg_driver", "ppg_driver", "ecg_interpreter",
                    "ppg_interpreter") and "sensor_id" not in node:
            raise ValueError(f"nodes[{i}] ({kind}): missing sensor_id")
    return nodes


def _start_node(bus, node: dict):
    kind = node["kind"]
    params = dict(node.get("params", {}))
    if kind == "ecg_driver":
        return run_ecg_driver(bus, node["human_id"], node["sensor_id"],
                              EcgSimConfig(**params))
    if kind == "ppg_driver":
        return run_ppg_driver(bus, node["human_id"], node["sensor_id"],
                              PpgSimConfig(**params))
    if kind == "ecg_interpreter":
        return run_ecg_interpreter(bus, node["human_id"], node["sensor_id"],
                                   **params)
    if kind == "ppg_interpreter":
        return run_ppg_interpreter(bus, node["human_id"], node["sensor_id"],
                                   **params)
    if kind == "fusion":
        if "ecg_features_topic" in params:
            config = FusionConfig(human_id=node["human_id"], **params)
        else:
            config = FusionConfig.for_sensors(
                node["human_id"], params.pop("ecg_sensor_id"),
                params.pop("ppg_sensor_id"), **params)
        return run_fusion_node(bus, config)
    if kind == "expression_script":
        timeline = [(float(t), str(e)) for t, e in params.pop("timeline")]
        return ExpressionScript(bus, node["human_id"], timeline, **params)
    if kind == "replay":
        return recorder.replay(bus, params["path"],
                               rate=float(params.get("rate", 1.0)))
    raise ValueError(f"unknown kind {kind!r}")


def _cmd_launch(args) -> int:
    try:
        with open(args.config) as f:
            config = json.load(f)
        nodes = _validate_launch_config(config)
    except (OSError, ValueError) as exc:
        print(f"launch: invalid config: {exc}", file=sys.stderr)
        return 1
    if args.sim and args.bus:
        print("launch: --sim requires an in-process bus", file=sys.stderr)
        return 1
    if args.sim and not args.duration:
        print("launch: --sim requires --duration", file=sys.stderr)
        return 1

    if args.bus:
        bus = RemoteBus(args.bus)
    else:
        runtime = SimRuntime() if args.sim else RealRuntime()
        bus = Broker(runtime)
    tcp_server = serve_tcp(bus, args.serve) if args.serve else None
    ws_bridge = serve_ws(bus, args.ws) if args.ws else None

    monitor = bus.create_node(bus.unique_node_name("launch_monitor"))

    def print_state(delivery):
        line = {"topic": delivery.topic,
                "bus_time_ns": delivery.recv_time_ns,
                "data": messages.to_jsonable(delivery.message)}
        print(json.dumps(line), flush=True)

    monitor.subscribe("/humans/affective_state/**", print_state)

    started = []
    try:
        for node in nodes:
            started.append(_start_node(bus, node))
    except (PhysioBusError, TypeError, KeyError, ValueError, OSError) as exc:
        print(f"launch: cannot start nodes: {exc}", file=sys.stderr)
        for running in started:
            _stop_quietly(running)
        return 1

    print(f"launch: {len(started)} nodes running", file=sys.stderr)
    try:
        if args.sim:
            bus.runtime.run_for(args.duration)
        elif args.duration:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        for running in started:
            _stop_quietly(running)
        if ws_bridge:
            ws_bridge.close()
        if tcp_server:
            tcp_server.close()
    return 0


def _stop_quietly(node) -> None:
    stop = getattr(node, "stop", None)
    if stop is not None:
        try:
            stop()
        except PhysioBusError:
            pass


# ---------------------------------------------------------------------------
# other commands

def _cmd_bus(args) -> int:
    broker = Broker(RealRuntime())
    server = serve_tcp(broker, args.listen)
    print(f"bus: listening on {server.address[0]}:{server.address[1]}",
          file=sys.stderr)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.close()
    return 0


def _cmd_list(args) -> int:
    bus = RemoteBus(args.bus)
    try:
        for entry in bus.list_topics():
            schema = messages.SCHEMA_NAMES.get(entry.schema_id, "?")
            print(f"{entry.topic}\t{schema}\t{entry.publisher}")
    finally:
        bus.close()
    return 0


def _cmd_echo(args) -> int:
    bus = RemoteBus(args.bus)
    remaining = args.count
    done = None
    if remaining is not None:
        import threading
        done = threading.Event()

    def on_message(delivery):
        nonlocal remaining
        print(json.dumps({
            "topic": delivery.topic,
            "schema": messages.SCHEMA_NAMES[delivery.schema_id],
            "bus_time_ns": delivery.recv_time_ns,
            "data": messages.to_jsonable(delivery.message),
        }), flush=True)
        if remaining is not None:
            remaining -= 1
            if remaining <= 0:
                done.set()

    node = bus.create_node(bus.unique_node_name("echo"))
    node.subscribe(args.topic, on_message)
    try:
        if done is not None:
            done.wait()
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        bus.close()
    return 0


def _cmd_param_get(args) -> int:
    bus = RemoteBus(args.bus)
    try:
        for name, value in bus.get_parameters(args.node, args.names):
            if value is NOT_SET:
                print(f"{name} = <not set>")
            else:
                print(f"{name} = {value}")
    finally:
        bus.close()
    return 0


def _cmd_describe(args) -> int:
    indicators = INDICATOR_TABLE.get(args.sensor_type)
    if indicators is None:
        print(f"describe: unknown sensor type {args.sensor_type!r} "
              f"(known: {', '.join(INDICATOR_TABLE)})", file=sys.stderr)
        return 1
    for indicator in indicators:
        print(indicator)
    return 0


def _cmd_record(args) -> int:
    bus = RemoteBus(args.bus)
    session = recorder.record(bus, args.patterns, args.out)
    print(f"record: writing {args.out}", file=sys.stderr)
    try:
        if args.duration:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        session.stop()
        bus.close()
    print(f"record: {session.record_count} records", file=sys.stderr)
    return 0


def _cmd_replay(args) -> int:
    bus = RemoteBus(args.bus)
    try:
        handle = recorder.replay(bus, args.path, rate=args.rate)
        handle.wait()
        print(f"replay: {handle.published} messages", file=sys.stderr)
    finally:
        bus.close()
    return 0


def _cmd_bridge(args) -> int:
    bus = RemoteBus(args.bus)
    bridge = serve_ws(bus, args.ws)
    print(f"bridge: serving {bridge.url}", file=sys.stderr)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        bridge.close()
        bus.close()
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "bus":
            return _cmd_bus(args)
        if args.command == "launch":
            return _cmd_launch(args)
        if args.command == "list":
            return _cmd_list(args)
        if args.command == "echo":
            return _cmd_echo(args)
        if args.command == "param":
            return _cmd_param_get(args)
        if args.command == "describe":
            return _cmd_describe(args)
        if args.command == "record":
            return _cmd_record(args)
        if args.command == "replay":
            return _cmd_replay(args)
        if args.command == "bridge":
            return _cmd_bridge(args)
    except PhysioBusError as exc:
        print(f"physiobus: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
