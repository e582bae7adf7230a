// DOM wiring: one BridgeClient + one DashboardStore drive the page.
// Configuration is limited to the WebSocket URL (?ws=host:port).

import { drawChart } from "./chart.js";
import { BridgeClient } from "./protocol.js";
import { DashboardStore } from "./store.js";

function wsUrl(): string {
  const param = new URLSearchParams(location.search).get("ws");
  if (param) return param.includes("://") ? param : `ws://${param}`;
  return `ws://${location.hostname}:8090`;
}

const store = new DashboardStore();
const client = new BridgeClient(wsUrl());
client.onEvent((ev) => store.handleEvent(ev));

const el = (id: string) => document.getElementById(id) as HTMLElement;
const subscribed = new Set<string>();
const charts = new Map<string, HTMLCanvasElement>();

function setStatus(text: string): void {
  el("status").textContent = text;
}

async function refreshTopics(): Promise<void> {
  try {
    await client.list();
  } catch (err) {
    setStatus(String(err));
  }
}

function chartKeysFor(topic: string, schema: string): string[] {
  if (schema === "ecg_features" || schema === "ppg_features") {
    return [`${topic}#heart_rate_bpm`];
  }
  if (schema === "affective_state") return ["affective_state"];
  if (schema === "physio_raw") return []; // channels appear once data flows
  if (schema === "device_feature") return [];
  return [];
}

function toggleTopic(topic: string, schema: string): void {
  if (subscribed.has(topic)) {
    client.unsubscribe(topic).catch(() => undefined);
    subscribed.delete(topic);
    for (const key of [...charts.keys()]) {
      if (key === topic || key.startsWith(`${topic}#`)) {
        charts.get(key)?.parentElement?.remove();
        charts.delete(key);
      }
    }
  } else {
    client.subscribe(topic).catch((err) => setStatus(String(err)));
    subscribed.add(topic);
    for (const key of chartKeysFor(topic, schema)) ensureChart(key);
  }
  renderTopics();
}

function ensureChart(key: string): void {
  if (charts.has(key)) return;
  const card = document.createElement("div");
  card.className = "chart-card";
  const title = document.createElement("div");
  title.className = "chart-title";
  title.textContent = key;
  const canvas = document.createElement("canvas");
  canvas.width = 560;
  canvas.height = 140;
  card.append(title, canvas);
  el("charts").append(card);
  charts.set(key, canvas);
}

function renderTopics(): void {
  const tbody = el("topics");
  tbody.innerHTML = "";
  for (const row of store.topicRows()) {
    const tr = document.createElement("tr");
    const active = subscribed.has(row.topic);
    tr.innerHTML =
      `<td class="mono">${row.topic}</td><td>${row.schema}</td>` +
      `<td>${row.publisher}</td><td>${row.count}</td>`;
    const td = document.createElement("td");
    const button = document.createElement("button");
    button.textContent = active ? "unwatch" : "watch";
    button.onclick = () => toggleTopic(row.topic, row.schema);
    td.append(button);
    tr.append(td);
    tbody.append(tr);
  }
}

function renderFeatures(): void {
  const tbody = el("features");
  tbody.innerHTML = "";
  for (const f of store.featureRows()) {
    const tr = document.createElement("tr");
    tr.innerHTML =
      `<td class="mono">${f.topic}</td>` +
      `<td>${f.heartRateBpm.toFixed(1)}</td>` +
      `<td>${f.sdnnMs.toFixed(1)}</td>` +
      `<td>${f.rmssdMs.toFixed(1)}</td>` +
      `<td>${f.pnn50Pct.toFixed(1)}</td>`;
    tbody.append(tr);
  }
}

function renderBadge(): void {
  const badge = el("state-badge");
  const snapshot = store.stateBadge();
  if (!snapshot) {
    badge.textContent = "no estimate yet";
    badge.style.background = "#444";
    return;
  }
  badge.textContent = `${snapshot.label} (${snapshot.detail})`;
  badge.style.background = snapshot.color;
}

function renderRecording(): void {
  const recording = store.recording;
  el("record-state").textContent = recording.active
    ? `recording -> ${recording.path}`
    : recording.lastRecordCount !== null
      ? `stopped (${recording.lastRecordCount} records in ${recording.path})`
      : "idle";
  (el("record-start") as HTMLButtonElement).disabled = recording.active;
  (el("record-stop") as HTMLButtonElement).disabled = !recording.active;
}

function renderCharts(): void {
  // charts for raw channels appear once their first spans are plotted
  for (const key of store.series.keys()) {
    if (key.includes("#") || key === "affective_state") {
      const topic = key.split("#")[0];
      if (key === "affective_state" || subscribed.has(topic)) {
        ensureChart(key);
      }
    }
  }
  const nowNs = Date.now() * 1e6;
  for (const [key, canvas] of charts) {
    const ctx = canvas.getContext("2d");
    if (!ctx) continue;
    const buffer = store.series.get(key);
    drawChart(ctx, canvas.width, canvas.height, buffer?.points ?? [],
              store.annotationsInWindow(nowNs));
  }
}

let dirty = true;
store.onChange(() => {
  dirty = true;
});

function frame(): void {
  if (dirty) {
    dirty = false;
    renderTopics();
    renderFeatures();
    renderBadge();
    renderRecording();
    renderCharts();
    el("errors").textContent = store.errors.slice(-3).join("\n");
  }
  requestAnimationFrame(frame);
}

async function main(): Promise<void> {
  setStatus(`connecting to ${wsUrl()} ...`);
  try {
    await client.ready();
  } catch {
    setStatus(`cannot connect to ${wsUrl()}`);
    return;
  }
  setStatus(`connected to ${wsUrl()}`);
  client.subscribe("/humans/affective_state/**").catch(() => undefined);
  await refreshTopics();
  setInterval(refreshTopics, 2000);

  el("record-start").onclick = () => {
    const path = (el("record-path") as HTMLInputElement).value.trim();
    if (!path) {
      setStatus("recording needs a file path");
      return;
    }
    const pattern = (el("record-pattern") as HTMLInputElement).value.trim()
      || "/**";
    client.recordStart([pattern], path).catch((err) => setStatus(String(err)));
  };
  el("record-stop").onclick = () => {
    client.recordStop().catch((err) => setStatus(String(err)));
  };
  el("annotate-send").onclick = () => {
    const box = el("annotate-label") as HTMLInputElement;
    const label = box.value.trim();
    if (!label) return;
    client.annotate(label).catch((err) => setStatus(String(err)));
    box.value = "";
  };
  frame();
}

main();
