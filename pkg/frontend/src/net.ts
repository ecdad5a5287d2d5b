import type { ViewModel } from './viewmodel.js';
import type { InputPump, InputSink } from './input.js';

// Browser WebSocket shape, narrowed to what the client touches so tests
// can hand in a scripted fake.
export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

const RETRY_START_MS = 500;
const RETRY_CAP_MS = 8000;

/**
 * Owns the websocket: feeds incoming messages to the view model and gates
 * outgoing input. Input is suppressed from disconnect until the snapshot
 * state frame of the next connection has arrived; the pump then restarts
 * with a fresh seq (the server tracks seq per connection).
 */
export class SessionClient implements InputSink {
  retries = 0;

  private sock: SocketLike | null = null;
  private ready = false;
  private retryMs = RETRY_START_MS;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private url: string,
    private vm: ViewModel,
    private pump: InputPump,
    private factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect() {
    this.stopped = false;
    this.vm.status = 'connecting';
    this.vm.retryInMs = null;
    let sock: SocketLike;
    try {
      sock = this.factory(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.sock = sock;
    sock.onopen = () => {
      this.retryMs = RETRY_START_MS;
    };
    sock.onmessage = (ev) => this.handleMessage(String(ev.data));
    sock.onerror = () => {};
    sock.onclose = () => this.handleClose(sock);
  }

  close() {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.ready = false;
    this.sock?.close();
    this.sock = null;
  }

  /** InputSink: true only when connected and past the snapshot frame. */
  send(text: string): boolean {
    if (this.sock === null || !this.ready) return false;
    try {
      this.sock.send(text);
    } catch {
      return false;
    }
    return true;
  }

  private handleMessage(raw: string) {
    const kind = this.vm.ingest(raw);
    if (kind === 'state' && !this.ready) {
      // snapshot received: this connection is now good for input
      this.ready = true;
      this.pump.reset();
    }
  }

  private handleClose(sock: SocketLike) {
    if (this.sock !== sock) return; // stale handler from a replaced socket
    this.sock = null;
    this.ready = false;
    if (this.stopped || this.vm.status === 'ended') return;
    this.vm.status = 'down';
    this.scheduleRetry();
  }

  private scheduleRetry() {
    if (this.stopped) return;
    const wait = this.retryMs;
    this.retryMs = Math.min(2 * this.retryMs, RETRY_CAP_MS);
    this.retries += 1;
    this.vm.status = 'down';
    this.vm.retryInMs = wait;
    this.timer = setTimeout(() => {
      this.timer = null;
      this.connect();
    }, wait);
  }
}
