// Dashboard state, fed by bridge events. No DOM in here: everything the
// UI renders is queryable, which is also what the tests exercise.

import type {
  ErrorEvent,
  MsgEvent,
  ServerEvent,
  StatusEvent,
  TopicEntry,
} from "./protocol.js";

export const CHART_WINDOW_S = 30;
export const MAX_POINTS_PER_SERIES = 2000;
const NS = 1e9;

export interface Point {
  t: number; // bus time, ns
  v: number;
}

// Scrolling window of points: drops anything older than CHART_WINDOW_S
// behind the newest point and thins to MAX_POINTS_PER_SERIES.
export class SeriesBuffer {
  points: Point[] = [];

  push(t: number, v: number): void {
    this.points.push({ t, v });
    this.prune();
  }

  pushMany(points: Point[]): void {
    this.points.push(...points);
    this.prune();
  }

  private prune(): void {
    const newest = this.points[this.points.length - 1];
    if (!newest) return;
    const horizon = newest.t - CHART_WINDOW_S * NS;
    let start = 0;
    while (start < this.points.length && this.points[start].t < horizon) {
      start++;
    }
    if (start > 0) this.points = this.points.slice(start);
    while (this.points.length > MAX_POINTS_PER_SERIES) {
      this.points = this.points.filter((_, i) => i % 2 === 0);
    }
  }

  latest(): Point | null {
    return this.points[this.points.length - 1] ?? null;
  }
}

export interface FeatureSnapshot {
  topic: string;
  busTimeNs: number;
  heartRateBpm: number;
  sdnnMs: number;
  rmssdMs: number;
  pnn50Pct: number;
  rrMs: number;
  peakCount: number;
  windowS: number;
}

export interface AffectiveSnapshot {
  state: string;
  heartRateBpm: number;
  expression: string;
  busTimeNs: number;
}

export interface Annotation {
  label: string;
  busTimeNs: number;
}

export interface RecordingState {
  active: boolean;
  path: string | null;
  lastRecordCount: number | null;
}

export const STATE_COLORS: Record<string, string> = {
  calm_relaxed: "#4caf82",
  alert_active: "#e8b339",
  stressed_anxious: "#e05252",
};

interface RawSeriesTracker {
  pendingSamples: number[] | null;
  pendingBusTime: number | null;
}

export class DashboardStore {
  topics: TopicEntry[] = [];
  series = new Map<string, SeriesBuffer>();
  features = new Map<string, FeatureSnapshot>();
  affective: AffectiveSnapshot | null = null;
  annotations: Annotation[] = [];
  recording: RecordingState = { active: false, path: null,
                                lastRecordCount: null };
  errors: string[] = [];
  rawDropped: Record<string, number> = {};

  private rawTrackers = new Map<string, RawSeriesTracker>();
  private listeners: (() => void)[] = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  seriesFor(key: string): SeriesBuffer {
    let buffer = this.series.get(key);
    if (!buffer) {
      buffer = new SeriesBuffer();
      this.series.set(key, buffer);
    }
    return buffer;
  }

  handleEvent(ev: ServerEvent): void {
    if (ev.op === "msg") this.handleMsg(ev);
    else if (ev.op === "status") this.handleStatus(ev);
    else this.handleError(ev);
    this.notify();
  }

  private handleMsg(ev: MsgEvent): void {
    switch (ev.schema) {
      case "physio_raw":
        this.handleRaw(ev);
        break;
      case "ecg_features":
      case "ppg_features": {
        const d = ev.data as Record<string, number>;
        this.features.set(ev.topic, {
          topic: ev.topic,
          busTimeNs: ev.bus_time_ns,
          heartRateBpm: d.heart_rate_bpm,
          sdnnMs: d.sdnn_ms,
          rmssdMs: d.rmssd_ms,
          pnn50Pct: d.pnn50_pct,
          rrMs: d.rr_ms,
          peakCount: d.peak_count,
          windowS: d.window_s,
        });
        this.seriesFor(`${ev.topic}#heart_rate_bpm`).push(
          ev.bus_time_ns, d.heart_rate_bpm);
        break;
      }
      case "affective_state": {
        const d = ev.data as Record<string, unknown>;
        this.affective = {
          state: String(d.state),
          heartRateBpm: Number(d.heart_rate_bpm),
          expression: String(d.expression),
          busTimeNs: ev.bus_time_ns,
        };
        const levels: Record<string, number> = {
          calm_relaxed: 0, alert_active: 1, stressed_anxious: 2,
        };
        this.seriesFor("affective_state").push(
          ev.bus_time_ns, levels[this.affective.state] ?? -1);
        break;
      }
      case "device_feature": {
        const d = ev.data as unknown as { name: string; value: number };
        this.seriesFor(`${ev.topic}#${d.name}`).push(ev.bus_time_ns, d.value);
        break;
      }
      default:
        break; // beat_truth / expression_event are not charted
    }
  }

  // Raw blocks are published at block end, so a block's samples span the
  // gap back to the previous block. The first block is held until the
  // second arrives and establishes the spacing.
  private handleRaw(ev: MsgEvent): void {
    const channels = ev.data.channels as
      { channel_name: string; samples: number[] }[];
    for (const channel of channels) {
      const key = `${ev.topic}#${channel.channel_name}`;
      let tracker = this.rawTrackers.get(key);
      if (!tracker) {
        tracker = { pendingSamples: null, pendingBusTime: null };
        this.rawTrackers.set(key, tracker);
      }
      if (tracker.pendingSamples !== null
          && tracker.pendingBusTime !== null
          && ev.bus_time_ns > tracker.pendingBusTime) {
        const t0 = tracker.pendingBusTime;
        const span = ev.bus_time_ns - t0;
        const n = channel.samples.length;
        const points = channel.samples.map((v, i) => ({
          t: t0 + ((i + 1) / n) * span,
          v,
        }));
        this.seriesFor(key).pushMany(points);
      }
      tracker.pendingSamples = channel.samples;
      tracker.pendingBusTime = ev.bus_time_ns;
    }
  }

  private handleStatus(ev: StatusEvent): void {
    switch (ev.request) {
      case "list":
        this.topics = ev.topics as TopicEntry[];
        break;
      case "record_start":
        this.recording = { active: true, path: ev.path as string,
                           lastRecordCount: null };
        break;
      case "record_stop":
        this.recording = { active: false, path: ev.path as string,
                           lastRecordCount: ev.records as number };
        break;
      case "annotate":
        this.annotations.push({ label: ev.label as string,
                                busTimeNs: ev.bus_time_ns as number });
        break;
      case "stats":
        this.rawDropped = ev.raw_dropped as Record<string, number>;
        break;
      default:
        break;
    }
  }

  private handleError(ev: ErrorEvent): void {
    this.errors.push(`${ev.request ?? "?"}: ${ev.message}`);
    if (this.errors.length > 50) this.errors.shift();
  }

  // -- view models -------------------------------------------------------

  topicRows(): { topic: string; schema: string; publisher: string;
                 count: number }[] {
    return this.topics.map((t) => ({
      topic: t.topic,
      schema: t.schema ?? "?",
      publisher: t.publisher,
      count: t.message_count,
    }));
  }

  featureRows(): FeatureSnapshot[] {
    return [...this.features.values()]
      .sort((a, b) => a.topic.localeCompare(b.topic));
  }

  stateBadge(): { label: string; color: string; detail: string } | null {
    if (!this.affective) return null;
    const a = this.affective;
    return {
      label: a.state,
      color: STATE_COLORS[a.state] ?? "#888",
      detail: `${a.expression}, ${a.heartRateBpm.toFixed(1)} bpm`,
    };
  }

  annotationsInWindow(nowNs: number): Annotation[] {
    const horizon = nowNs - CHART_WINDOW_S * NS;
    return this.annotations.filter((a) => a.busTimeNs >= horizon);
  }
}
