import { encodeInput } from './protocol.js';

export interface InputSink {
  /** Deliver one encoded input frame; false means suppressed (not connected). */
  send(text: string): boolean;
}

const DIRS: Record<string, [number, number]> = {
  ArrowUp: [0, 1],
  ArrowDown: [0, -1],
  ArrowLeft: [-1, 0],
  ArrowRight: [1, 0],
};

export class HeldKeys {
  private held = new Set<string>();

  down(code: string): boolean {
    if (!(code in DIRS)) return false;
    this.held.add(code);
    return true;
  }

  up(code: string): boolean {
    if (!(code in DIRS)) return false;
    this.held.delete(code);
    return true;
  }

  /** Unit direction of the held arrows (diagonals normalized), or zero. */
  direction(): [number, number] {
    let x = 0;
    let y = 0;
    for (const code of this.held) {
      x += DIRS[code][0];
      y += DIRS[code][1];
    }
    const norm = Math.hypot(x, y);
    return norm > 0 ? [x / norm, y / norm] : [0, 0];
  }
}

/**
 * Turns held-key direction into input frames: at most maxHz frames per
 * second, strictly increasing seq, one zero-velocity frame on release and
 * then silence. seq restarts from 0 on reset() (fresh connection).
 */
export class InputPump {
  seq = 0;

  private wasMoving = false;
  private lastSendAt = -Infinity;
  private readonly minGapMs: number;

  constructor(
    private sink: InputSink,
    private speedOf: () => number,
    maxHz = 60,
    private now: () => number = () => performance.now(),
  ) {
    // small epsilon so a timer firing at exactly 1000/maxHz is not dropped
    this.minGapMs = 1000 / maxHz - 0.5;
  }

  reset() {
    this.seq = 0;
    this.wasMoving = false;
    this.lastSendAt = -Infinity;
  }

  /** Called on the input timer. Returns true when a frame went out. */
  tick(dir: [number, number]): boolean {
    const moving = dir[0] !== 0 || dir[1] !== 0;
    if (!moving && !this.wasMoving) return false;
    const t = this.now();
    if (t - this.lastSendAt < this.minGapMs) return false;
    const speed = this.speedOf();
    if (!this.sink.send(encodeInput(dir[0] * speed, dir[1] * speed, this.seq))) return false;
    this.seq += 1;
    this.lastSendAt = t;
    this.wasMoving = moving;
    return true;
  }
}
