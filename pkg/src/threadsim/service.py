"""Websocket host for live steering sessions and trajectory replay.

One asyncio loop owns everything: the tick task advances the engine and
broadcasts a state frame after every tick, connection readers only write
the shared input mailbox, and each client drains its own bounded send
queue (oldest frame dropped when full, so a stalled client never blocks
the loop).  All wire quantities are SI (meters, seconds); the host
converts to the normalized simulation units at the sampling point.

Wire protocol, version 1, text frames on endpoint ``/session``:

    scene   {"type": "scene", "version": 1, "mode": "live"|"replay", ...}
            sent once on join: rates, thread size, workspace box,
            smoothed obstacle boundaries, speed limit.
    state   {"type": "state", "t": s, "needle": [x, y], "nodes": [...],
             "colors": [...], "intensity": f, "min_h_obs": [...],
             "stats": {"tick_ms", "qp_iterations", "input_seq"}}
            one per tick (live) or per recorded frame (replay).
    end     {"type": "end", "frames": N}  end of a bounded stream.
    input   {"type": "input", "vx": m/s, "vy": m/s, "seq": int}
            client -> host.  Per-client stale seq values are discarded,
            the latest surviving frame wins, and the command magnitude is
            clamped to the scenario's speed limit when applied.

A malformed client message closes that client's connection (code 1008)
and nothing else.  Replay sessions parse inputs the same way but ignore
their content.

The host records the input it sampled at each tick in ``applied_inputs``
(m/s, pre-clamp).  Feeding that log back through ``run_scripted`` repeats
the served trajectory bit for bit, because both paths divide by the same
length scale and clamp with the same code.
"""

from __future__ import annotations

import asyncio
import json
import math

import numpy as np
from websockets.asyncio.server import serve as _ws_serve
from websockets.exceptions import ConnectionClosed

from .scenario_io import RuntimeScene, TrajectoryRecord, clamp_speed
from .sim import Engine, family_minima

__all__ = [
    "PROTOCOL_VERSION",
    "ENDPOINT",
    "SessionHost",
    "ReplayHost",
    "serve",
    "replay_serve",
]

PROTOCOL_VERSION = 1
ENDPOINT = "/session"
_QUEUE_FRAMES = 8


def _parse_input(raw):
    """Validated (vx, vy, seq) in m/s, or None for a protocol violation."""
    try:
        msg = json.loads(raw)
    except (ValueError, TypeError):
        return None
    if not isinstance(msg, dict) or msg.get("type") != "input":
        return None
    out = []
    for key in ("vx", "vy"):
        v = msg.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            return None
        out.append(float(v))
    seq = msg.get("seq")
    if isinstance(seq, bool) or not isinstance(seq, int) or seq < 0:
        return None
    return out[0], out[1], seq


class _Client:
    __slots__ = ("queue", "last_seq")

    def __init__(self):
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=_QUEUE_FRAMES)
        self.last_seq = -1

    def push(self, text: str):
        if self.queue.full():
            try:
                self.queue.get_nowait()
            except asyncio.QueueEmpty:
                pass
        self.queue.put_nowait(text)


class _HostBase:
    """Connection plumbing shared by live and replay hosts."""

    def __init__(self):
        self._clients: dict = {}
        self.done = asyncio.Event()
        self.first_client = asyncio.Event()

    # subclasses fill these in
    def scene_message(self) -> str:
        raise NotImplementedError

    def join_frames(self) -> list:
        return []

    def accept_input(self, client: _Client, vx: float, vy: float, seq: int):
        pass

    def broadcast(self, text: str):
        for client in self._clients.values():
            client.push(text)

    async def _sender(self, ws, client: _Client):
        try:
            while True:
                await ws.send(await client.queue.get())
        except (ConnectionClosed, asyncio.CancelledError):
            pass

    async def handle(self, ws):
        if ws.request.path != ENDPOINT:
            await ws.close(1008, "unknown endpoint")
            return
        client = _Client()
        client.push(self.scene_message())
        for frame in self.join_frames():
            client.push(frame)
        self._clients[ws] = client
        self.first_client.set()
        sender = asyncio.create_task(self._sender(ws, client))
        try:
            async for raw in ws:
                parsed = _parse_input(raw)
                if parsed is None:
                    await ws.close(1008, "malformed input frame")
                    break
                self.accept_input(client, *parsed)
        except ConnectionClosed:
            pass
        finally:
            self._clients.pop(ws, None)
            sender.cancel()

    async def run(self, host: str = "127.0.0.1", port: int = 8765, started=None):
        """Serve until the stream task finishes (forever when unbounded)."""
        async with _ws_serve(self.handle, host, port) as server:
            if started is not None and not started.done():
                bound = server.sockets[0].getsockname()[1]
                started.set_result(bound)
            await self.stream()
            await asyncio.sleep(0.05)  # let senders drain
        self.done.set()

    async def stream(self):
        raise NotImplementedError


class SessionHost(_HostBase):
    """Live interactive session: tick the engine, broadcast, sample inputs.

    ticks=None runs until cancelled.  realtime=False skips the pacing
    sleeps (still yielding between ticks) for deterministic tests.
    """

    def __init__(
        self,
        scene: RuntimeScene,
        ticks: int | None = None,
        qp_tol: float = 1e-6,
        realtime: bool = True,
        start_gate: asyncio.Event | None = None,
    ):
        super().__init__()
        if scene.mode != "interactive":
            raise ValueError("live sessions need a scenario in interactive mode")
        self.scene = scene
        self.engine = Engine(
            scene.params, scene.state0, scene.obstacles, scene.config, qp_tol=qp_tol
        )
        self.ticks = ticks
        self.realtime = realtime
        self.start_gate = start_gate
        self._mailbox: tuple[float, float, int] | None = None
        self.applied_inputs: list = []  # (vx, vy) m/s sampled at each tick
        self.applied_seqs: list = []  # matching seq, None when no input yet
        self.latest_frame = self._initial_frame()

    def scene_message(self) -> str:
        scene = self.scene
        c = scene.scale
        return json.dumps(
            {
                "type": "scene",
                "version": PROTOCOL_VERSION,
                "mode": "live",
                "name": scene.name,
                "scenario_hash": scene.scenario_hash,
                "rate_hz": scene.config.rate_hz,
                "n": scene.params.n,
                "m_obstacles": len(scene.obstacles),
                "delta": scene.params.delta * c,
                "rho": scene.params.rho * c,
                "max_input_speed": scene.max_input_speed * c,
                "workspace": (c * scene.workspace).tolist(),
                "obstacles": [(c * ob.boundary).tolist() for ob in scene.obstacles],
            },
            separators=(",", ":"),
        )

    def join_frames(self) -> list:
        return [self.latest_frame]

    def accept_input(self, client: _Client, vx: float, vy: float, seq: int):
        if seq <= client.last_seq:
            return
        client.last_seq = seq
        self._mailbox = (vx, vy, seq)

    def _frame(self, minima, tokens, intensity, tick_ms, iterations, seq, slack) -> str:
        state = self.engine.state
        c = self.scene.scale
        h_obs = np.asarray(minima["min_h_obs"], dtype=float)
        return json.dumps(
            {
                "type": "state",
                "t": state.time,
                "needle": (c * state.needle_pos).tolist(),
                "nodes": (c * state.node_pos).tolist(),
                "colors": list(tokens),
                "intensity": intensity,
                "min_h_obs": (c * c * h_obs).tolist(),
                "stats": {
                    "tick_ms": tick_ms,
                    "qp_iterations": iterations,
                    "input_seq": seq,
                    "slack": {
                        "con": c**2 * slack["con"],
                        "enh": c**2 * slack["enh"],
                        "stiff": c**4 * slack["stiff"],
                    },
                },
            },
            separators=(",", ":"),
        )

    def _initial_frame(self) -> str:
        scene = self.scene
        minima = family_minima(scene.state0, scene.params, scene.obstacles)
        zero = {"con": 0.0, "enh": 0.0, "stiff": 0.0}
        return self._frame(minima, ["green"] * scene.params.n, 0.0, 0.0, 0, None, zero)

    async def stream(self):
        if self.start_gate is not None:
            await self.start_gate.wait()
        scene = self.scene
        dt = scene.config.dt
        loop = asyncio.get_running_loop()
        next_t = loop.time() + dt
        k = 0
        while self.ticks is None or k < self.ticks:
            if self.realtime:
                delay = next_t - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                next_t += dt
                if next_t < loop.time():  # running late: no burst catch-up
                    next_t = loop.time()
            else:
                await asyncio.sleep(0)  # let readers run between ticks

            if self._mailbox is None:
                vx = vy = 0.0
                seq = None
            else:
                vx, vy, seq = self._mailbox
            self.applied_inputs.append((vx, vy))
            self.applied_seqs.append(seq)
            cmd = clamp_speed(
                np.array([[vx, vy]]) / scene.scale, scene.max_input_speed
            )[0]
            res = self.engine.tick(cmd)
            frame = self._frame(
                res.minima,
                res.colors.tokens,
                res.colors.intensity,
                res.tick_ms,
                res.qp_iterations,
                seq,
                res.slack_norms,
            )
            self.latest_frame = frame
            self.broadcast(frame)
            k += 1
        self.broadcast(json.dumps({"type": "end", "frames": k + 1}, separators=(",", ":")))


class ReplayHost(_HostBase):
    """Paces a recorded trajectory to clients at its recorded rate.

    Inputs are parsed (so protocol violations still disconnect) but their
    content is ignored.  ``scene`` optionally supplies obstacle geometry
    for rendering; the record itself carries none.
    """

    def __init__(self, record: TrajectoryRecord, scene: RuntimeScene | None = None):
        super().__init__()
        if scene is not None and scene.scenario_hash != record.scenario_hash:
            raise ValueError("record and scenario describe different runs")
        self.record = record
        self.scene = scene
        self.frames = [self._frame(k) for k in range(record.n_frames)]

    def scene_message(self) -> str:
        rec = self.record
        scene = self.scene
        c = scene.scale if scene is not None else rec.length_scale
        return json.dumps(
            {
                "type": "scene",
                "version": PROTOCOL_VERSION,
                "mode": "replay",
                "name": rec.scenario_name,
                "scenario_hash": rec.scenario_hash,
                "rate_hz": rec.rate_hz,
                "n": rec.n,
                "m_obstacles": rec.m_obstacles,
                "delta": rec.length_scale,
                "rho": scene.params.rho * c if scene is not None else None,
                "max_input_speed": 0.0,
                "workspace": (c * scene.workspace).tolist() if scene is not None else None,
                "obstacles": (
                    [(c * ob.boundary).tolist() for ob in scene.obstacles]
                    if scene is not None
                    else []
                ),
            },
            separators=(",", ":"),
        )

    def _frame(self, k: int) -> str:
        rec = self.record
        return json.dumps(
            {
                "type": "state",
                "t": rec.times[k],
                "needle": rec.needle[k].tolist(),
                "nodes": rec.nodes[k].tolist(),
                "colors": list(rec.colors[k]),
                "intensity": float(rec.intensity[k]),
                "min_h_obs": rec.min_h_obs[k].tolist(),
                "stats": {
                    "tick_ms": 0.0,
                    "qp_iterations": int(rec.qp_iterations[k]),
                    "input_seq": None,
                    "slack": {
                        "con": float(rec.slack_con[k]),
                        "enh": float(rec.slack_enh[k]),
                        "stiff": float(rec.slack_stiff[k]),
                    },
                },
            },
            separators=(",", ":"),
        )

    async def stream(self):
        # pacing starts when somebody is watching, so a client connected
        # from the start receives every recorded frame
        await self.first_client.wait()
        dt = 1.0 / self.record.rate_hz
        loop = asyncio.get_running_loop()
        t0 = loop.time()
        for k, frame in enumerate(self.frames):
            delay = t0 + k * dt - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            self.broadcast(frame)
        self.broadcast(
            json.dumps({"type": "end", "frames": len(self.frames)}, separators=(",", ":"))
        )


def _run_host(host_obj, host: str, port: int, on_bound=None):
    async def main():
        started = asyncio.get_running_loop().create_future()
        if on_bound is not None:
            started.add_done_callback(lambda fut: on_bound(fut.result()))
        await host_obj.run(host=host, port=port, started=started)

    asyncio.run(main())
    return host_obj


def serve(
    scene: RuntimeScene,
    port: int = 8765,
    host: str = "127.0.0.1",
    ticks: int | None = None,
    on_bound=None,
):
    """Run a live session until the tick budget ends (or forever).

    on_bound, when given, is called with the actual bound port once the
    listener is up (useful with port=0).
    """
    return _run_host(SessionHost(scene, ticks=ticks), host, port, on_bound)


def replay_serve(
    record: TrajectoryRecord,
    port: int = 8765,
    host: str = "127.0.0.1",
    scene: RuntimeScene | None = None,
    on_bound=None,
):
    """Stream a recorded trajectory once, then close."""
    return _run_host(ReplayHost(record, scene=scene), host, port, on_bound)
