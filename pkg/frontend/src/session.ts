/**
 * Session state machine for the walkthrough client.
 *
 * Everything the UI shows lives in a single `SessionState` that is mutated
 * only here, and only in response to server messages or socket lifecycle
 * events — the client never invents a pose, a counter, or a file path.
 *
 * Two rules shape the traffic:
 *
 *  - At most one frame-producing request (`cmd` or `set_light`) is ever
 *    outstanding. While one is in flight the most recent further request
 *    waits in a one-slot buffer (latest wins) and is sent the moment the
 *    matching frame arrives, so holding a movement key advances at the
 *    server's frame rate instead of flooding it.
 *
 *  - Reconnects back off exponentially and give up after `maxAttempts`
 *    tries. A refusal with the "busy" close code is not retried at all:
 *    another tab owns the avatar, and hammering the port would not change
 *    that. Both outcomes stay on screen until the user asks to retry.
 */

import {
  CLOSE_BUSY,
  ClientMsg,
  Cmd,
  FrameMsg,
  SceneSummaryMsg,
  parseServerMsg,
  serialize,
} from "./protocol";

/** The part of a WebSocket this module relies on; the browser class
 * satisfies it as-is, tests and the node client supply equivalents. */
export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: { code: number; reason: string }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type Status =
  | "idle"         // before connect()
  | "connecting"
  | "live"
  | "reconnecting" // between backoff attempts
  | "busy"         // refused: another session owns the avatar
  | "failed"       // gave up after maxAttempts
  | "closed";      // closed by this client

export interface SessionState {
  status: Status;
  /** Reconnect attempts consumed since the last healthy connection. */
  attempt: number;
  /** User-visible error text, or null when all is well. */
  error: string | null;
  summary: SceneSummaryMsg | null;
  /** scene_summary messages seen on the current connection. */
  summariesSeen: number;
  frame: FrameMsg | null;
  recording: { active: boolean; frames: number };
  /** Server-reported path of the last saved trajectory, verbatim. */
  savedPath: string | null;
  /** Frame-producing requests in flight (0 or 1 by construction). */
  outstanding: number;
}

export interface SessionOptions {
  url: string;
  factory: SocketFactory;
  /** First reconnect delay; doubles per attempt. */
  backoffBaseMs?: number;
  maxAttempts?: number;
}

type Listener = (s: SessionState) => void;

export class Session {
  readonly state: SessionState = {
    status: "idle",
    attempt: 0,
    error: null,
    summary: null,
    summariesSeen: 0,
    frame: null,
    recording: { active: false, frames: 0 },
    savedPath: null,
    outstanding: 0,
  };

  private readonly url: string;
  private readonly factory: SocketFactory;
  private readonly backoffBaseMs: number;
  private readonly maxAttempts: number;

  private sock: SocketLike | null = null;
  private pending: ClientMsg | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private closedByUser = false;
  private readonly listeners = new Set<Listener>();

  constructor(opts: SessionOptions) {
    this.url = opts.url;
    this.factory = opts.factory;
    this.backoffBaseMs = opts.backoffBaseMs ?? 500;
    this.maxAttempts = opts.maxAttempts ?? 5;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  // -- lifecycle ----------------------------------------------------------

  connect(): void {
    if (this.closedByUser) return;
    this.state.status = this.state.attempt > 0 ? "reconnecting" : "connecting";
    this.state.summariesSeen = 0;
    this.notify();

    const sock = this.factory(this.url);
    this.sock = sock;
    sock.onopen = () => this.handleOpen(sock);
    sock.onmessage = (ev) => this.handleMessage(sock, String(ev.data));
    sock.onclose = (ev) => this.handleClose(sock, ev.code, ev.reason);
    sock.onerror = () => {
      // The close event (which always follows) decides what happens next;
      // surfacing the error here just gets the banner up immediately.
      if (sock === this.sock && this.state.status !== "live") {
        this.state.error = `cannot reach ${this.url}`;
        this.notify();
      }
    };
  }

  /** Manual restart after "busy" or "failed": fresh attempt budget. */
  retry(): void {
    if (this.state.status === "busy" || this.state.status === "failed") {
      this.state.attempt = 0;
      this.state.error = null;
      this.connect();
    }
  }

  close(): void {
    this.closedByUser = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.retryTimer = null;
    this.state.status = "closed";
    this.dropTraffic();
    this.sock?.close(1000, "bye");
    this.sock = null;
    this.notify();
  }

  private handleOpen(sock: SocketLike): void {
    if (sock !== this.sock) return; // stale socket from an abandoned attempt
    this.state.status = "live";
    this.state.attempt = 0;
    this.state.error = null;
    this.notify();
  }

  private handleClose(sock: SocketLike, code: number, _reason: string): void {
    if (sock !== this.sock) return;
    this.sock = null;
    this.dropTraffic();
    if (this.closedByUser) return;

    if (code === CLOSE_BUSY) {
      this.state.status = "busy";
      this.state.error = "another session is already driving this avatar";
      this.notify();
      return;
    }

    this.state.attempt += 1;
    if (this.state.attempt > this.maxAttempts) {
      this.state.status = "failed";
      this.state.error =
        `connection lost (gave up after ${this.maxAttempts} attempts)`;
      this.notify();
      return;
    }
    this.state.status = "reconnecting";
    this.state.error = this.state.error ?? "connection lost — retrying";
    this.notify();
    const delay = this.backoffBaseMs * 2 ** (this.state.attempt - 1);
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      this.connect();
    }, delay);
  }

  /** An interrupted request's frame will never arrive; the server greets a
   * reconnect with a fresh frame instead, so in-flight tracking resets. */
  private dropTraffic(): void {
    this.state.outstanding = 0;
    this.pending = null;
  }

  // -- incoming -----------------------------------------------------------

  private handleMessage(sock: SocketLike, raw: string): void {
    if (sock !== this.sock) return;
    const msg = parseServerMsg(raw);
    switch (msg.type) {
      case "scene_summary":
        this.state.summary = msg;
        this.state.summariesSeen += 1;
        break;
      case "frame":
        this.state.frame = msg;
        if (this.state.outstanding > 0) {
          this.state.outstanding -= 1;
          this.flushPending();
        }
        break;
      case "recording":
        this.state.recording = { active: msg.active, frames: msg.frames };
        if (msg.path !== undefined) this.state.savedPath = msg.path;
        break;
    }
    this.notify();
  }

  // -- outgoing -----------------------------------------------------------

  /** Queue a movement; dropped silently unless the session is live. */
  request(cmd: Cmd): void {
    this.sendFrameProducing({ type: "cmd", cmd });
  }

  setLight(id: number): void {
    this.sendFrameProducing({ type: "set_light", id });
  }

  startRecording(): void {
    this.sendNow({ type: "start_recording" });
  }

  stopRecording(): void {
    this.sendNow({ type: "stop_recording" });
  }

  private sendFrameProducing(msg: ClientMsg): void {
    if (this.state.status !== "live" || this.sock === null) return;
    if (this.state.outstanding > 0) {
      this.pending = msg; // latest wins; earlier waiters are superseded
      return;
    }
    this.state.outstanding = 1;
    this.sock.send(serialize(msg));
    this.notify();
  }

  private flushPending(): void {
    if (this.pending === null || this.sock === null ||
        this.state.status !== "live") {
      return;
    }
    const msg = this.pending;
    this.pending = null;
    this.state.outstanding = 1;
    this.sock.send(serialize(msg));
  }

  /** Recording toggles get `recording` replies, not frames, so they bypass
   * the one-in-flight gate; the server processes messages in order. */
  private sendNow(msg: ClientMsg): void {
    if (this.state.status !== "live" || this.sock === null) return;
    this.sock.send(serialize(msg));
  }
}
