// Typed client for the bridge WebSocket protocol (docs/bridge-protocol.md).
// Only documented operations are used; a conformance test checks that.

export const CLIENT_OPS = [
  "subscribe",
  "unsubscribe",
  "list",
  "param_get",
  "record_start",
  "record_stop",
  "annotate",
  "stats",
] as const;

export type ClientOp = (typeof CLIENT_OPS)[number];

export interface MessageHeader {
  seq: number;
  stamp_ns: number;
  source: string;
}

export interface MsgEvent {
  op: "msg";
  topic: string;
  schema: string;
  bus_time_ns: number;
  data: { header: MessageHeader } & Record<string, unknown>;
}

export interface StatusEvent {
  op: "status";
  request: ClientOp;
  [key: string]: unknown;
}

export interface ErrorEvent {
  op: "error";
  request: string | null;
  message: string;
}

export type ServerEvent = MsgEvent | StatusEvent | ErrorEvent;

export interface TopicEntry {
  topic: string;
  schema: string | null;
  publisher: string;
  message_count: number;
  dropped_count: number;
}

// Minimal surface shared by the browser WebSocket and the `ws` package,
// so the client is testable under node.
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

type EventHandler = (ev: ServerEvent) => void;

export class BridgeClient {
  private socket: SocketLike;
  private handlers: EventHandler[] = [];
  private openPromise: Promise<void>;
  closed = false;

  constructor(url: string, factory?: SocketFactory) {
    const make = factory ?? ((u: string) => new WebSocket(u) as SocketLike);
    this.socket = make(url);
    this.openPromise = new Promise((resolve, reject) => {
      this.socket.onopen = () => resolve();
      this.socket.onerror = (ev) => reject(ev ?? new Error("socket error"));
    });
    this.socket.onmessage = (ev) => {
      let parsed: ServerEvent;
      try {
        parsed = JSON.parse(String(ev.data)) as ServerEvent;
      } catch {
        return; // server only sends JSON; ignore anything else
      }
      for (const handler of this.handlers) handler(parsed);
    };
    this.socket.onclose = () => {
      this.closed = true;
    };
  }

  ready(): Promise<void> {
    return this.openPromise;
  }

  onEvent(handler: EventHandler): void {
    this.handlers.push(handler);
  }

  private send(op: ClientOp, fields: Record<string, unknown> = {}): void {
    this.socket.send(JSON.stringify({ op, ...fields }));
  }

  // Resolves with the next status/error reply for `request`.
  private reply(request: ClientOp, timeoutMs = 5000): Promise<StatusEvent> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        this.handlers = this.handlers.filter((h) => h !== handler);
        reject(new Error(`${request}: no reply within ${timeoutMs} ms`));
      }, timeoutMs);
      const handler: EventHandler = (ev) => {
        if (ev.op === "status" && ev.request === request) {
          clearTimeout(timer);
          this.handlers = this.handlers.filter((h) => h !== handler);
          resolve(ev);
        } else if (ev.op === "error" && ev.request === request) {
          clearTimeout(timer);
          this.handlers = this.handlers.filter((h) => h !== handler);
          reject(new Error(ev.message));
        }
      };
      this.handlers.push(handler);
    });
  }

  subscribe(pattern: string): Promise<StatusEvent> {
    const reply = this.reply("subscribe");
    this.send("subscribe", { pattern });
    return reply;
  }

  unsubscribe(pattern: string): Promise<StatusEvent> {
    const reply = this.reply("unsubscribe");
    this.send("unsubscribe", { pattern });
    return reply;
  }

  async list(): Promise<TopicEntry[]> {
    const reply = this.reply("list");
    this.send("list");
    return (await reply).topics as TopicEntry[];
  }

  paramGet(node: string, names: string[]): Promise<StatusEvent> {
    const reply = this.reply("param_get");
    this.send("param_get", { node, names });
    return reply;
  }

  recordStart(patterns: string[], path: string): Promise<StatusEvent> {
    const reply = this.reply("record_start");
    this.send("record_start", { patterns, path });
    return reply;
  }

  recordStop(): Promise<StatusEvent> {
    const reply = this.reply("record_stop");
    this.send("record_stop");
    return reply;
  }

  annotate(label: string): Promise<StatusEvent> {
    const reply = this.reply("annotate");
    this.send("annotate", { label });
    return reply;
  }

  stats(): Promise<StatusEvent> {
    const reply = this.reply("stats");
    this.send("stats");
    return reply;
  }

  close(): void {
    this.closed = true;
    this.socket.close();
  }
}
