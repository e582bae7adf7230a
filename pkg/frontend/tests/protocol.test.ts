import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { BridgeClient, CLIENT_OPS, SocketLike } from "../src/protocol.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const PROTOCOL_DOC = join(HERE, "..", "..", "docs", "bridge-protocol.md");

class FakeSocket implements SocketLike {
  sent: Record<string, unknown>[] = [];
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  closed = false;

  send(data: string): void {
    this.sent.push(JSON.parse(data));
  }

  close(): void {
    this.closed = true;
  }

  reply(payload: unknown): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }
}

function makeClient(): { client: BridgeClient; socket: FakeSocket } {
  let socket!: FakeSocket;
  const client = new BridgeClient("ws://test", (url) => {
    socket = new FakeSocket();
    return socket;
  });
  return { client, socket };
}

describe("protocol conformance against the documented bridge protocol", () => {
  it("every client op is documented", () => {
    const doc = readFileSync(PROTOCOL_DOC, "utf8");
    const documented = new Set(
      [...doc.matchAll(/"op":\s*"([a-z_]+)"/g)].map((m) => m[1]));
    for (const op of CLIENT_OPS) {
      expect(documented, `op ${op} not documented`).toContain(op);
    }
  });

  it("the client sends no op outside the documented set", async () => {
    const { client, socket } = makeClient();
    // exercise the full command surface without awaiting replies
    client.subscribe("/**").catch(() => undefined);
    client.unsubscribe("/**").catch(() => undefined);
    client.list().catch(() => undefined);
    client.paramGet("n", ["a"]).catch(() => undefined);
    client.recordStart(["/**"], "/tmp/x.s4h").catch(() => undefined);
    client.recordStop().catch(() => undefined);
    client.annotate("mark").catch(() => undefined);
    client.stats().catch(() => undefined);
    const allowed = new Set<string>(CLIENT_OPS);
    expect(socket.sent.length).toBe(8);
    for (const cmd of socket.sent) {
      expect(allowed).toContain(cmd.op as string);
    }
  });

  it("command payloads carry the documented fields", () => {
    const { client, socket } = makeClient();
    client.subscribe("/humans/physiological/p1/**").catch(() => undefined);
    client.paramGet("drv", ["unit"]).catch(() => undefined);
    client.recordStart(["/**"], "/data/s.s4h").catch(() => undefined);
    client.annotate("stimulus_on").catch(() => undefined);
    expect(socket.sent[0]).toEqual({
      op: "subscribe", pattern: "/humans/physiological/p1/**" });
    expect(socket.sent[1]).toEqual({
      op: "param_get", node: "drv", names: ["unit"] });
    expect(socket.sent[2]).toEqual({
      op: "record_start", patterns: ["/**"], path: "/data/s.s4h" });
    expect(socket.sent[3]).toEqual({ op: "annotate", label: "stimulus_on" });
  });
});

describe("reply pairing", () => {
  it("resolves a command with its status reply", async () => {
    const { client, socket } = makeClient();
    const pending = client.list();
    socket.reply({ op: "status", request: "list",
                   topics: [{ topic: "/experiment/events", schema: null,
                              publisher: "x", message_count: 1,
                              dropped_count: 0 }] });
    const topics = await pending;
    expect(topics).toHaveLength(1);
    expect(topics[0].topic).toBe("/experiment/events");
  });

  it("rejects a command answered with an error", async () => {
    const { client, socket } = makeClient();
    const pending = client.recordStop();
    socket.reply({ op: "error", request: "record_stop",
                   message: "no active recording" });
    await expect(pending).rejects.toThrow("no active recording");
  });

  it("ignores interleaved deliveries while waiting", async () => {
    const { client, socket } = makeClient();
    const events: unknown[] = [];
    client.onEvent((ev) => events.push(ev));
    const pending = client.annotate("mark");
    socket.reply({ op: "msg", topic: "/experiment/events",
                   schema: "device_feature", bus_time_ns: 1,
                   data: { header: { seq: 0, stamp_ns: 1, source: "b" },
                           name: "other", value: 1 } });
    socket.reply({ op: "status", request: "annotate", label: "mark",
                   bus_time_ns: 2 });
    const reply = await pending;
    expect(reply.label).toBe("mark");
    expect(events.length).toBe(2);
  });
});
