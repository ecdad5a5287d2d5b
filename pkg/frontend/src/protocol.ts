// Wire protocol for the /session websocket endpoint.
//
// The server speaks JSON text frames. The first message on a connection is
// a scene banner, then state frames (one per simulation tick, plus one
// snapshot immediately on join), and finally {type:"end"}. The client sends
// input frames; everything is SI units (meters, m/s, seconds).

export const PROTOCOL_VERSION = 1;
export const ENDPOINT = '/session';

export type Vec2 = [number, number];

export type ColorToken = 'green' | 'orange' | 'blue';

export interface SceneMsg {
  type: 'scene';
  version: number;
  mode: 'live' | 'replay';
  name: string;
  scenario_hash: string;
  rate_hz: number;
  n: number;
  m_obstacles: number;
  delta: number;
  rho: number | null;
  max_input_speed: number;
  workspace: [Vec2, Vec2] | null;
  obstacles: Vec2[][];
}

export interface SlackNorms {
  con: number;
  enh: number;
  stiff: number;
}

export interface FrameStats {
  tick_ms: number;
  qp_iterations: number;
  input_seq: number | null;
  slack: SlackNorms;
}

export interface StateMsg {
  type: 'state';
  t: number;
  needle: Vec2;
  nodes: Vec2[];
  colors: ColorToken[];
  intensity: number;
  min_h_obs: number[];
  stats: FrameStats;
}

export interface EndMsg {
  type: 'end';
  frames: number;
}

export type ServerMsg = SceneMsg | StateMsg | EndMsg;

export function encodeInput(vx: number, vy: number, seq: number): string {
  return JSON.stringify({ type: 'input', vx, vy, seq });
}

const TOKENS = new Set(['green', 'orange', 'blue']);

function num(v: unknown): v is number {
  return typeof v === 'number' && Number.isFinite(v);
}

function vec2(v: unknown): v is Vec2 {
  return Array.isArray(v) && v.length === 2 && num(v[0]) && num(v[1]);
}

function vec2List(v: unknown): v is Vec2[] {
  return Array.isArray(v) && v.every(vec2);
}

function numList(v: unknown): v is number[] {
  return Array.isArray(v) && v.every(num);
}

function isScene(m: Record<string, unknown>): m is SceneMsg & Record<string, unknown> {
  if (m.version !== PROTOCOL_VERSION) return false;
  if (m.mode !== 'live' && m.mode !== 'replay') return false;
  if (typeof m.name !== 'string' || typeof m.scenario_hash !== 'string') return false;
  if (!num(m.rate_hz) || m.rate_hz <= 0) return false;
  if (!num(m.n) || !Number.isInteger(m.n) || m.n < 1) return false;
  if (!num(m.m_obstacles) || !Number.isInteger(m.m_obstacles) || m.m_obstacles < 0) return false;
  if (!num(m.delta) || !num(m.max_input_speed)) return false;
  if (m.rho !== null && !num(m.rho)) return false;
  if (m.workspace !== null && !(vec2List(m.workspace) && m.workspace.length === 2)) return false;
  if (!Array.isArray(m.obstacles) || !m.obstacles.every(vec2List)) return false;
  return true;
}

function isStats(v: unknown): v is FrameStats {
  if (typeof v !== 'object' || v === null) return false;
  const s = v as Record<string, unknown>;
  if (!num(s.tick_ms) || !num(s.qp_iterations)) return false;
  if (s.input_seq !== null && !(num(s.input_seq) && Number.isInteger(s.input_seq))) return false;
  const sl = s.slack as Record<string, unknown> | null;
  if (typeof sl !== 'object' || sl === null) return false;
  return num(sl.con) && num(sl.enh) && num(sl.stiff);
}

function isState(m: Record<string, unknown>): m is StateMsg & Record<string, unknown> {
  if (!num(m.t) || !vec2(m.needle)) return false;
  if (!vec2List(m.nodes)) return false;
  const colors = m.colors;
  if (!Array.isArray(colors) || colors.length !== m.nodes.length) return false;
  if (!colors.every((c) => typeof c === 'string' && TOKENS.has(c))) return false;
  if (!num(m.intensity) || m.intensity < 0 || m.intensity > 1) return false;
  if (!numList(m.min_h_obs)) return false;
  return isStats(m.stats);
}

/** Parse and validate one server message; null means drop it. */
export function parseServerMessage(raw: string): ServerMsg | null {
  let m: unknown;
  try {
    m = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof m !== 'object' || m === null) return null;
  const msg = m as Record<string, unknown>;
  switch (msg.type) {
    case 'scene':
      return isScene(msg) ? (msg as unknown as SceneMsg) : null;
    case 'state':
      return isState(msg) ? (msg as unknown as StateMsg) : null;
    case 'end':
      return num(msg.frames) ? ({ type: 'end', frames: msg.frames } as EndMsg) : null;
    default:
      return null;
  }
}
