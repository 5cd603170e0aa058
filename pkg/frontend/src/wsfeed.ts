// WS live feed with reconnect and a stale badge. The socket constructor is
// injectable so tests (and node) can supply an implementation.

import type { EnvelopeFrame } from "./types.js";

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface FeedOptions {
  socketFactory: SocketFactory;
  initialBackoffMs?: number;
  maxBackoffMs?: number;
  setTimeoutImpl?: (fn: () => void, ms: number) => unknown;
}

export class LiveFeed {
  stale = true;
  closed = false;
  backoffMs: number;
  private socket: SocketLike | null = null;
  private readonly initialBackoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly setTimeoutImpl: (fn: () => void, ms: number) => unknown;

  constructor(
    private readonly url: string,
    private readonly onFrame: (frame: EnvelopeFrame) => void,
    private readonly onReconnect: () => void,
    private readonly options: FeedOptions,
  ) {
    this.initialBackoffMs = options.initialBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 15_000;
    this.setTimeoutImpl = options.setTimeoutImpl ?? ((fn, ms) => setTimeout(fn, ms));
    this.backoffMs = this.initialBackoffMs;
  }

  connect(): void {
    if (this.closed) return;
    const sock = this.options.socketFactory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      const wasStale = this.stale;
      this.stale = false;
      this.backoffMs = this.initialBackoffMs;
      if (wasStale) this.onReconnect();
    };
    sock.onmessage = (ev) => {
      this.onFrame(JSON.parse(String(ev.data)) as EnvelopeFrame);
    };
    sock.onerror = () => {
      // close follows; the close handler owns the retry
    };
    sock.onclose = () => {
      this.stale = true;
      if (this.closed) return;
      this.setTimeoutImpl(() => this.connect(), this.backoffMs);
      this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
