// End-to-end against the real bridge: spawns the demo node graph with a
// WebSocket gateway and drives the dashboard's client + store exactly the
// way the page does.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { WebSocket } from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { BridgeClient, type SocketLike } from "../src/protocol.js";
import { DashboardStore } from "../src/store.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO = join(HERE, "..", "..");
const PYTHON = process.env.PHYSIOBUS_PYTHON ?? "python3";
const PORT = 8090 + Math.floor(Math.random() * 400);
const WS_URL = `ws://127.0.0.1:${PORT}`;

const nodeSocketFactory = (url: string): SocketLike =>
  new WebSocket(url) as unknown as SocketLike;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitFor(predicate: () => boolean, timeoutMs: number,
                       what: string): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await sleep(50);
  }
  throw new Error(`timed out waiting for ${what}`);
}

async function connectWithRetry(timeoutMs: number): Promise<BridgeClient> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    const client = new BridgeClient(WS_URL, nodeSocketFactory);
    try {
      await client.ready();
      return client;
    } catch (err) {
      lastError = err;
      client.close();
      await sleep(200);
    }
  }
  throw new Error(`bridge not reachable: ${lastError}`);
}

function listLog(path: string): { records: number;
                                  topics: Record<string, number> } {
  const script = [
    "import json, sys",
    "from physiobus.recorder import list_log",
    "s = list_log(sys.argv[1])",
    "print(json.dumps({'records': s.record_count,",
    "                  'topics': {t.topic: t.count for t in s.topics}}))",
  ].join("\n");
  const out = execFileSync(PYTHON, ["-c", script, path],
                           { cwd: REPO, encoding: "utf8" });
  return JSON.parse(out.trim());
}

describe("dashboard against the live demo graph", () => {
  let demo: ChildProcess;
  let client: BridgeClient;
  let store: DashboardStore;
  let workDir: string;

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "physiobus-dash-"));
    demo = spawn(PYTHON,
                 ["-m", "physiobus.cli", "launch", "configs/demo.json",
                  "--ws", `127.0.0.1:${PORT}`],
                 { cwd: REPO, stdio: ["ignore", "ignore", "pipe"] });
    demo.stderr?.on("data", () => undefined);
    client = await connectWithRetry(15_000);
    store = new DashboardStore();
    client.onEvent((ev) => store.handleEvent(ev));
  }, 30_000);

  afterAll(async () => {
    client?.close();
    demo?.kill("SIGINT");
    await sleep(300);
    demo?.kill("SIGKILL");
    rmSync(workDir, { recursive: true, force: true });
  });

  it("renders the topic list within 2 s of connecting", async () => {
    // let the node graph finish coming up first
    const deadline = Date.now() + 15_000;
    while ((await client.list()).length === 0) {
      if (Date.now() > deadline) throw new Error("demo graph has no topics");
      await sleep(200);
    }
    // the criterion: a fresh connection sees the list within 2 s
    const fresh = new BridgeClient(WS_URL, nodeSocketFactory);
    const freshStore = new DashboardStore();
    fresh.onEvent((ev) => freshStore.handleEvent(ev));
    try {
      const started = Date.now();
      await fresh.ready();
      await fresh.list();
      await waitFor(() => freshStore.topicRows().length > 0, 2000, "topics");
      expect(Date.now() - started).toBeLessThanOrEqual(2000);
      const names = freshStore.topicRows().map((r) => r.topic);
      expect(names).toContain("/humans/physiological/p1/ecg/h10/raw");
    } finally {
      fresh.close();
    }
  }, 30_000);

  it("updates the live HR chart as features arrive", async () => {
    const featuresTopic = "/humans/physiological/p1/ecg/h10/features";
    await client.subscribe(featuresTopic);
    const key = `${featuresTopic}#heart_rate_bpm`;
    await waitFor(() => (store.series.get(key)?.points.length ?? 0) >= 2,
                  30_000, "two HR points");
    const points = store.series.get(key)!.points;
    expect(points.length).toBeGreaterThanOrEqual(2);
    expect(points[points.length - 1].t).toBeGreaterThan(points[0].t);
    for (const p of points) {
      expect(p.v).toBeGreaterThan(50);
      expect(p.v).toBeLessThan(100);
    }
    expect(store.featureRows()[0].heartRateBpm).toBeGreaterThan(50);
  }, 45_000);

  it("records a session with an annotation and validates the log", async () => {
    const logPath = join(workDir, "dash-session.s4h");
    await client.recordStart(["/**"], logPath);
    expect(store.recording.active).toBe(true);
    expect(store.recording.path).toBe(logPath);

    await sleep(700);
    await client.annotate("noted_from_dashboard");
    await waitFor(() => store.annotations.length === 1, 2000, "annotation");
    expect(store.annotations[0].label).toBe("noted_from_dashboard");
    await sleep(700);

    const stopReply = await client.recordStop();
    expect(store.recording.active).toBe(false);
    expect(stopReply.records as number).toBeGreaterThan(0);

    const summary = listLog(logPath);
    expect(summary.records).toBeGreaterThan(0);
    expect(summary.topics["/experiment/events"]).toBe(1);
    expect(Object.keys(summary.topics).some(
      (t) => t.endsWith("/raw"))).toBe(true);
  }, 30_000);

  it("answers parameter queries for live nodes", async () => {
    const reply = await client.paramGet("ecg_driver_p1_h10",
                                        ["sampling_frequency_hz", "unit"]);
    const params = reply.params as { name: string; set: boolean;
                                     value: unknown }[];
    expect(params[0]).toEqual({ name: "sampling_frequency_hz", set: true,
                                value: 250 });
    expect(params[1]).toEqual({ name: "unit", set: true, value: "mV" });
  }, 15_000);
});
