import {
  parseServerMessage,
  type SceneMsg,
  type StateMsg,
  type ColorToken,
  type Vec2,
} from './protocol.js';
import { fitCamera, toScreen, GrowBounds, type Bounds, type Camera } from './camera.js';

// The 2D-context subset the renderer uses. The browser canvas context
// satisfies it structurally; tests substitute a recording fake.
export interface Ctx2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

export type Status = 'connecting' | 'live' | 'replay' | 'down' | 'ended';

const BG = '#11151a';
const GRID = '#2c333b';
const OBSTACLE_FILL = '#4a5560';
const OBSTACLE_EDGE = '#6b7885';
const NEEDLE_RED = '#e5484d';
const TEXT = '#c7d0d9';
const BAD = '#ff5555';

const SHADES: Record<ColorToken, { pale: number[]; sat: number[] }> = {
  green: { pale: [63, 163, 77], sat: [63, 163, 77] },
  orange: { pale: [255, 216, 168], sat: [255, 127, 14] },
  blue: { pale: [188, 217, 240], sat: [31, 119, 180] },
};

function hex(c: number): string {
  return Math.round(c).toString(16).padStart(2, '0');
}

/** Color token to CSS color; intensity moves orange/blue toward saturation. */
export function colorFor(token: ColorToken, intensity: number): string {
  const { pale, sat } = SHADES[token];
  const k = Math.min(1, Math.max(0, intensity));
  const r = pale[0] + k * (sat[0] - pale[0]);
  const g = pale[1] + k * (sat[1] - pale[1]);
  const b = pale[2] + k * (sat[2] - pale[2]);
  return `#${hex(r)}${hex(g)}${hex(b)}`;
}

/** Fixed-capacity history of one scalar per obstacle, oldest first. */
export class HudTraces {
  readonly capacity: number;
  private data: number[][] = [];

  constructor(capacity = 240) {
    this.capacity = capacity;
  }

  push(values: number[]) {
    while (this.data.length < values.length) this.data.push([]);
    for (let i = 0; i < values.length; i++) {
      const trace = this.data[i];
      trace.push(values[i]);
      if (trace.length > this.capacity) trace.shift();
    }
  }

  traces(): ReadonlyArray<ReadonlyArray<number>> {
    return this.data;
  }

  clearHistory() {
    this.data = [];
  }
}

export class ViewModel {
  scene: SceneMsg | null = null;
  frame: StateMsg | null = null;
  status: Status = 'connecting';
  retryInMs: number | null = null;

  badFrames = 0;
  framesSeen = 0;
  hud = new HudTraces();
  /** Display rate, EMA of state-frame arrival intervals. */
  arrivalHz = 0;

  paintLatencies: number[] = [];

  private lastArrival: number | null = null;
  private pendingSince: number | null = null;
  private bounds: Bounds | null = null;
  private now: () => number;

  constructor(now: () => number = () => performance.now()) {
    this.now = now;
  }

  inputSpeed(): number {
    return this.scene ? this.scene.max_input_speed : 0;
  }

  /**
   * Feed one raw websocket message. Returns its type, or null when the
   * message failed validation and was dropped (the last good frame stays
   * on screen; the HUD shows an error badge).
   */
  ingest(raw: string): 'scene' | 'state' | 'end' | null {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      this.badFrames += 1;
      return null;
    }
    if (msg.type === 'scene') {
      this.scene = msg;
      this.status = msg.mode === 'live' ? 'live' : 'replay';
      this.retryInMs = null;
      this.bounds = msg.workspace ? { min: msg.workspace[0], max: msg.workspace[1] } : null;
      return 'scene';
    }
    if (msg.type === 'end') {
      this.status = 'ended';
      return 'end';
    }
    const t = this.now();
    if (this.lastArrival !== null) {
      const dt = Math.max(t - this.lastArrival, 1e-3);
      const hz = 1000 / dt;
      this.arrivalHz = this.arrivalHz === 0 ? hz : 0.9 * this.arrivalHz + 0.1 * hz;
    }
    this.lastArrival = t;
    this.pendingSince = t;
    this.frame = msg;
    this.framesSeen += 1;
    this.hud.push(msg.min_h_obs);
    if (this.bounds === null || this.bounds instanceof GrowBounds) {
      const gb = (this.bounds as GrowBounds | null) ?? new GrowBounds(msg.needle);
      gb.include(msg.needle);
      for (const p of msg.nodes) gb.include(p);
      this.bounds = gb;
    }
    return 'state';
  }

  /** Repaint everything from the latest complete frame. */
  render(ctx: Ctx2D, width: number, height: number) {
    ctx.fillStyle = BG;
    ctx.fillRect(0, 0, width, height);
    const frame = this.frame;
    const bounds = this.bounds;
    if (frame !== null && bounds !== null) {
      const cam = fitCamera(bounds, width, height);
      this.drawWorkspace(ctx, cam);
      this.drawObstacles(ctx, cam);
      this.drawThread(ctx, cam, frame);
    }
    this.drawHud(ctx, width, frame);
    if (this.pendingSince !== null) {
      this.paintLatencies.push(this.now() - this.pendingSince);
      if (this.paintLatencies.length > 600) this.paintLatencies.shift();
      this.pendingSince = null;
    }
  }

  private drawWorkspace(ctx: Ctx2D, cam: Camera) {
    const b = this.bounds;
    if (b === null || b instanceof GrowBounds) return; // no declared box
    const [x0, y0] = toScreen(cam, b.min);
    const [x1, y1] = toScreen(cam, b.max);
    ctx.strokeStyle = GRID;
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y0);
    ctx.lineTo(x1, y1);
    ctx.lineTo(x0, y1);
    ctx.closePath();
    ctx.stroke();
  }

  private drawObstacles(ctx: Ctx2D, cam: Camera) {
    if (!this.scene) return;
    for (const ring of this.scene.obstacles) {
      if (ring.length < 3) continue;
      ctx.beginPath();
      const [px, py] = toScreen(cam, ring[0]);
      ctx.moveTo(px, py);
      for (let i = 1; i < ring.length; i++) {
        const [x, y] = toScreen(cam, ring[i]);
        ctx.lineTo(x, y);
      }
      ctx.closePath();
      ctx.fillStyle = OBSTACLE_FILL;
      ctx.fill();
      ctx.strokeStyle = OBSTACLE_EDGE;
      ctx.lineWidth = 1;
      ctx.stroke();
    }
  }

  private drawThread(ctx: Ctx2D, cam: Camera, frame: StateMsg) {
    const rho = this.scene?.rho ?? null;
    const threadPx = rho !== null ? Math.max(2, 1.6 * rho * cam.sx) : 2;
    const pts: Vec2[] = [frame.needle, ...frame.nodes];
    // polyline through needle + nodes, each segment in the far node's color
    ctx.lineWidth = threadPx;
    for (let i = 1; i < pts.length; i++) {
      const [ax, ay] = toScreen(cam, pts[i - 1]);
      const [bx, by] = toScreen(cam, pts[i]);
      ctx.strokeStyle = colorFor(frame.colors[i - 1], frame.intensity);
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    }
    for (let i = 0; i < frame.nodes.length; i++) {
      const [x, y] = toScreen(cam, frame.nodes[i]);
      ctx.fillStyle = colorFor(frame.colors[i], frame.intensity);
      ctx.beginPath();
      ctx.arc(x, y, Math.max(2, 0.45 * threadPx), 0, 2 * Math.PI);
      ctx.fill();
    }
    // the lead node gets a red ring so the steered point is unmistakable
    const [nx, ny] = toScreen(cam, frame.needle);
    ctx.strokeStyle = NEEDLE_RED;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(nx, ny, Math.max(5, 1.2 * threadPx), 0, 2 * Math.PI);
    ctx.stroke();
  }

  private drawHud(ctx: Ctx2D, width: number, frame: StateMsg | null) {
    ctx.font = '12px ui-monospace, monospace';
    ctx.fillStyle = TEXT;
    const name = this.scene ? this.scene.name : '';
    let line = `${this.status}${name ? ' ' + name : ''}`;
    if (this.status === 'down' && this.retryInMs !== null) {
      line += ` (retry in ${(this.retryInMs / 1000).toFixed(1)} s)`;
    }
    ctx.fillText(line, 12, 18);
    if (frame) {
      const s = frame.stats;
      ctx.fillText(
        `t ${frame.t.toFixed(2)} s  ${this.arrivalHz.toFixed(0)} Hz  tick ${s.tick_ms.toFixed(1)} ms  qp ${s.qp_iterations}`,
        12,
        34,
      );
      ctx.fillText(
        `slack ${s.slack.con.toExponential(1)} / ${s.slack.enh.toExponential(1)} / ${s.slack.stiff.toExponential(1)}`,
        12,
        50,
      );
    }
    if (this.badFrames > 0) {
      ctx.fillStyle = BAD;
      ctx.fillText(`dropped ${this.badFrames} bad frame${this.badFrames > 1 ? 's' : ''}`, 12, 66);
    }
    this.drawTraces(ctx, width);
  }

  // one min-h_obs sparkline per obstacle, top-right, most recent sample last
  private drawTraces(ctx: Ctx2D, width: number) {
    const traces = this.hud.traces();
    const boxW = 150;
    const boxH = 26;
    const x0 = width - boxW - 12;
    for (let k = 0; k < traces.length; k++) {
      const trace = traces[k];
      if (trace.length === 0) continue;
      const y0 = 14 + k * (boxH + 10);
      let lo = Infinity;
      let hi = -Infinity;
      for (const v of trace) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
      if (!(hi > lo)) {
        lo -= 1e-12;
        hi += 1e-12;
      }
      const yOf = (v: number) => y0 + boxH - ((v - lo) / (hi - lo)) * boxH;
      if (lo <= 0 && hi >= 0) {
        ctx.strokeStyle = GRID;
        ctx.lineWidth = 1;
        ctx.beginPath();
        ctx.moveTo(x0, yOf(0));
        ctx.lineTo(x0 + boxW, yOf(0));
        ctx.stroke();
      }
      ctx.strokeStyle = TEXT;
      ctx.lineWidth = 1;
      ctx.beginPath();
      for (let i = 0; i < trace.length; i++) {
        const x = x0 + (i / Math.max(trace.length - 1, 1)) * boxW;
        const y = yOf(trace[i]);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      }
      ctx.stroke();
      ctx.fillStyle = TEXT;
      const latest = trace[trace.length - 1];
      ctx.fillText(`h${k} ${latest.toExponential(1)}`, x0, y0 + boxH + 9);
    }
  }
}
