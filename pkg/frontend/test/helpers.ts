import type { Ctx2D } from '../src/viewmodel.js';

type Op =
  | { op: 'fillRect'; style: string; x: number; y: number; w: number; h: number }
  | { op: 'stroke'; style: string; width: number; path: number }
  | { op: 'fill'; style: string; path: number; arcs: number }
  | { op: 'text'; text: string; style: string };

export class FakeCtx implements Ctx2D {
  fillStyle = '';
  strokeStyle = '';
  lineWidth = 1;
  font = '';
  ops: Op[] = [];

  private pathPoints = 0;
  private pathArcs = 0;

  beginPath() {
    this.pathPoints = 0;
    this.pathArcs = 0;
  }
  moveTo() {
    this.pathPoints += 1;
  }
  lineTo() {
    this.pathPoints += 1;
  }
  arc() {
    this.pathArcs += 1;
  }
  closePath() {}
  stroke() {
    this.ops.push({
      op: 'stroke',
      style: this.strokeStyle,
      width: this.lineWidth,
      path: this.pathPoints + this.pathArcs,
    });
  }
  fill() {
    this.ops.push({ op: 'fill', style: this.fillStyle, path: this.pathPoints, arcs: this.pathArcs });
  }
  fillRect(x: number, y: number, w: number, h: number) {
    this.ops.push({ op: 'fillRect', style: this.fillStyle, x, y, w, h });
  }
  fillText(text: string) {
    this.ops.push({ op: 'text', text, style: this.fillStyle });
  }

  strokes(style?: string) {
    const all = this.ops.filter((o) => o.op === 'stroke') as Extract<Op, { op: 'stroke' }>[];
    return style === undefined ? all : all.filter((o) => o.style === style);
  }
  fills(style?: string) {
    const all = this.ops.filter((o) => o.op === 'fill') as Extract<Op, { op: 'fill' }>[];
    return style === undefined ? all : all.filter((o) => o.style === style);
  }
  texts(): string[] {
    return this.ops.filter((o) => o.op === 'text').map((o) => (o as { text: string }).text);
  }
  clear() {
    this.ops = [];
  }
}

export function ringPolygon(cx: number, cy: number, r: number, k = 20): [number, number][] {
  const pts: [number, number][] = [];
  for (let i = 0; i < k; i++) {
    const a = (2 * Math.PI * i) / k;
    pts.push([cx + r * Math.cos(a), cy + r * Math.sin(a)]);
  }
  return pts;
}

export function sceneMsg(over: Record<string, unknown> = {}): Record<string, unknown> {
  return {
    type: 'scene',
    version: 1,
    mode: 'live',
    name: 'fixture',
    scenario_hash: 'abc123',
    rate_hz: 33.0,
    n: 8,
    m_obstacles: 0,
    delta: 1e-3,
    rho: 2.5e-4,
    max_input_speed: 0.01,
    workspace: [
      [-0.02, -0.02],
      [0.02, 0.02],
    ],
    obstacles: [],
    ...over,
  };
}

export function stateMsg(over: Record<string, unknown> = {}): Record<string, unknown> {
  const n = (over.nodes as unknown[] | undefined)?.length ?? 8;
  const nodes: [number, number][] = [];
  for (let i = 0; i < n; i++) nodes.push([-(i + 1) * 4.5e-4, 0]);
  return {
    type: 'state',
    t: 0.0,
    needle: [0, 0],
    nodes,
    colors: new Array(n).fill('green'),
    intensity: 0.0,
    min_h_obs: [],
    stats: {
      tick_ms: 1.0,
      qp_iterations: 12,
      input_seq: null,
      slack: { con: 0.0, enh: 0.0, stiff: 0.0 },
    },
    ...over,
  };
}

export const sceneJson = (over: Record<string, unknown> = {}) => JSON.stringify(sceneMsg(over));
export const stateJson = (over: Record<string, unknown> = {}) => JSON.stringify(stateMsg(over));

export const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));
