import { ViewModel, type Ctx2D } from './viewmodel.js';
import { HeldKeys, InputPump } from './input.js';
import { SessionClient } from './net.js';
import { ENDPOINT } from './protocol.js';

const canvas = document.getElementById('view') as HTMLCanvasElement;
const raw = canvas.getContext('2d');
if (raw === null) throw new Error('canvas 2d context unavailable');
const ctx = raw;

const params = new URLSearchParams(location.search);
const url = params.get('ws') ?? `ws://${location.hostname || '127.0.0.1'}:8765${ENDPOINT}`;

const vm = new ViewModel();
const keys = new HeldKeys();
let client: SessionClient;
const pump = new InputPump({ send: (t) => client.send(t) }, () => vm.inputSpeed());
client = new SessionClient(url, vm, pump);

window.addEventListener('keydown', (e) => {
  if (keys.down(e.code)) e.preventDefault();
});
window.addEventListener('keyup', (e) => {
  if (keys.up(e.code)) e.preventDefault();
});
window.addEventListener('blur', () => {
  // dropping the keys on focus loss sends the release frame next tick
  for (const code of ['ArrowUp', 'ArrowDown', 'ArrowLeft', 'ArrowRight']) keys.up(code);
});

setInterval(() => pump.tick(keys.direction()), 1000 / 60);

function resize() {
  const dpr = window.devicePixelRatio || 1;
  canvas.width = Math.round(canvas.clientWidth * dpr);
  canvas.height = Math.round(canvas.clientHeight * dpr);
}
window.addEventListener('resize', resize);
resize();

function paint() {
  const dpr = window.devicePixelRatio || 1;
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  vm.render(ctx as Ctx2D, canvas.clientWidth, canvas.clientHeight);
  requestAnimationFrame(paint);
}
requestAnimationFrame(paint);

client.connect();
