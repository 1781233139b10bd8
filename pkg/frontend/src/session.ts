/**
 * Connection and request lifecycle for one viewer session.
 *
 * The session holds the frame buffer for the current clip, enforces one
 * in-flight request at a time, reconnects with backoff, and runs story mode
 * (a list of lines submitted one per user advance).  Frames are appended
 * exactly as received and never mutated.
 */

import {
  FrameMessage,
  GenerationAttributes,
  buildRequest,
  parseServerMessage,
} from "./protocol.js";

export type SessionStatus = "idle" | "connecting" | "connected" | "retrying" | "closed";

export interface WsLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
}

export type WsFactory = (url: string) => WsLike;

export interface SessionEvents {
  onStatus?: (status: SessionStatus) => void;
  onFrame?: (frame: FrameMessage) => void;
  onDone?: (frames: number, meanMs: number) => void;
  onError?: (message: string) => void;
}

export interface SessionOptions {
  /** Base reconnect delay; doubles per attempt up to 8x. */
  reconnectDelayMs?: number;
  /** Injected timer for tests. */
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
}

export class Session {
  status: SessionStatus = "idle";
  /** id of the request currently streaming, or null. */
  inFlight: string | null = null;
  /** frames of the clip being received/played; replaced per request. */
  buffer: FrameMessage[] = [];
  requestsSent = 0;

  private ws: WsLike | null = null;
  private nextId = 1;
  private attempts = 0;
  private closedByUser = false;

  private storyLines: string[] = [];
  private storyCursor = 0;

  constructor(
    private url: string,
    private factory: WsFactory,
    private events: SessionEvents = {},
    private options: SessionOptions = {},
  ) {}

  connect(): void {
    this.closedByUser = false;
    this.open();
  }

  private open(): void {
    this.setStatus(this.attempts === 0 ? "connecting" : "retrying");
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.attempts = 0;
      this.setStatus("connected");
    };
    ws.onmessage = (event) => this.handleMessage(event.data);
    const retry = () => {
      if (this.closedByUser) return;
      this.ws = null;
      this.inFlight = null;
      this.setStatus("retrying");
      const base = this.options.reconnectDelayMs ?? 500;
      const delay = base * Math.min(2 ** this.attempts, 8);
      this.attempts += 1;
      const timer = this.options.setTimeoutFn ?? ((fn, ms) => setTimeout(fn, ms));
      timer(() => this.open(), delay);
    };
    ws.onerror = retry;
    ws.onclose = retry;
  }

  close(): void {
    this.closedByUser = true;
    this.ws?.close();
    this.ws = null;
    this.setStatus("closed");
  }

  /**
   * Send one utterance. Returns false (and sends nothing) when not
   * connected, the sentence is empty, or a request is already in flight.
   */
  submitUtterance(sentence: string, attrs: GenerationAttributes, fpsOut = 120): boolean {
    if (this.status !== "connected" || this.inFlight !== null) return false;
    if (!sentence.trim()) return false;
    const id = `r${this.nextId++}`;
    this.inFlight = id;
    this.buffer = [];
    this.ws!.send(JSON.stringify(buildRequest(id, sentence, attrs, fpsOut)));
    this.requestsSent += 1;
    return true;
  }

  handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      console.warn("viewer: skipping malformed message", raw.slice(0, 120));
      return;
    }
    if (msg.type === "error") {
      this.inFlight = null;
      this.events.onError?.(msg.message);
      return;
    }
    if (msg.id !== this.inFlight) return; // stale stream after an error/reset
    if (msg.type === "frame") {
      this.buffer.push(msg);
      this.events.onFrame?.(msg);
    } else {
      this.inFlight = null;
      this.events.onDone?.(msg.frames, msg.mean_ms);
    }
  }

  // --- story mode -----------------------------------------------------------

  loadStory(text: string): number {
    this.storyLines = text
      .split("\n")
      .map((l) => l.trim())
      .filter((l) => l.length > 0);
    this.storyCursor = 0;
    return this.storyLines.length;
  }

  get storyRemaining(): number {
    return this.storyLines.length - this.storyCursor;
  }

  /** Submit the next story line; one request per advance. */
  advanceStory(attrs: GenerationAttributes, fpsOut = 120): boolean {
    if (this.storyCursor >= this.storyLines.length) return false;
    const ok = this.submitUtterance(this.storyLines[this.storyCursor], attrs, fpsOut);
    if (ok) this.storyCursor += 1;
    return ok;
  }

  private setStatus(status: SessionStatus): void {
    this.status = status;
    this.events.onStatus?.(status);
  }
}

/** Frames needed in the buffer before playback should start (0.25 s). */
export function playbackStartThreshold(fpsOut: number): number {
  return Math.max(1, Math.ceil(0.25 * fpsOut));
}
