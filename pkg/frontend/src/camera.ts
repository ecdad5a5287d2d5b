import type { Vec2 } from './protocol.js';

// px = sx * wx + tx ; py = sy * wy + ty, with sy = -sx so world y points up
// and the aspect ratio is preserved.
export interface Camera {
  sx: number;
  sy: number;
  tx: number;
  ty: number;
}

export interface Bounds {
  min: Vec2;
  max: Vec2;
}

export function fitCamera(b: Bounds, width: number, height: number, margin = 24): Camera {
  const w = Math.max(b.max[0] - b.min[0], 1e-12);
  const h = Math.max(b.max[1] - b.min[1], 1e-12);
  const s = Math.min((width - 2 * margin) / w, (height - 2 * margin) / h);
  const cx = 0.5 * (b.min[0] + b.max[0]);
  const cy = 0.5 * (b.min[1] + b.max[1]);
  return { sx: s, sy: -s, tx: width / 2 - s * cx, ty: height / 2 + s * cy };
}

export function toScreen(cam: Camera, p: Vec2): Vec2 {
  return [cam.sx * p[0] + cam.tx, cam.sy * p[1] + cam.ty];
}

/** Grow-only bounds tracker, used when the scene carries no workspace box. */
export class GrowBounds implements Bounds {
  min: Vec2;
  max: Vec2;

  constructor(seed: Vec2) {
    this.min = [seed[0], seed[1]];
    this.max = [seed[0], seed[1]];
  }

  include(p: Vec2) {
    if (p[0] < this.min[0]) this.min[0] = p[0];
    if (p[1] < this.min[1]) this.min[1] = p[1];
    if (p[0] > this.max[0]) this.max[0] = p[0];
    if (p[1] > this.max[1]) this.max[1] = p[1];
  }
}
