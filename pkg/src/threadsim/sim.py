"""Tick loop: friction handling, damped velocity tracking and integration.

Each tick runs the same sequence the interactive tool uses:

    1. closest-point queries and per-(point, obstacle) clearance barriers
    2. friction detection: a node squeezed below the clearance threshold
       against at least two obstacles is in friction
    3. the needle command is attenuated by beta per friction node
    4. desired node velocities are the damped previous velocities
    5. the constraint QP filters [needle, nodes, slacks] velocities
    6. explicit Euler integration at the configured rate

State and parameters are unit-agnostic; callers that load scenarios get a
normalized scene where the connectivity bound is 1.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    NODE_DIM,
    ThreadParams,
    ThreadState,
    _second_diffs,
    assemble,
    hessian_diagonal,
    stack_desired,
)
from .geometry import Obstacle, batch_closest_points
from .qp import QPProblem, QPSolution, solve_dense_reference, solve_sparse

__all__ = [
    "SimulationError",
    "SimConfig",
    "FrictionReport",
    "ColorState",
    "TickResult",
    "Engine",
    "detect_friction",
    "friction_threshold",
    "scale_needle_speed",
    "update_colors",
    "family_minima",
    "BenchResult",
    "bench",
]


class SimulationError(RuntimeError):
    """Raised when a tick cannot produce a valid next state."""


@dataclass(frozen=True)
class SimConfig:
    rate_hz: float = 66.0
    kappa: float = 0.95
    beta: float = 0.9
    friction_clearance: float = 5.0e-4
    color_saturation: int = 8
    command_eps: float = 1e-9

    def __post_init__(self):
        if not (self.rate_hz > 0.0):
            raise ValueError("rate_hz must be positive")
        if not (0.0 < self.kappa <= 1.0):
            raise ValueError("kappa must lie in (0, 1]")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")
        if self.friction_clearance < 0.0:
            raise ValueError("friction_clearance must be non-negative")
        if self.color_saturation < 1:
            raise ValueError("color_saturation must be at least 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz


@dataclass(frozen=True)
class FrictionReport:
    """Nodes pinched against two or more obstacles below the threshold."""

    indices: np.ndarray  # ascending node numbers, 1-based
    per_node_h: np.ndarray  # (n, M) clearance barrier values
    threshold: float

    @property
    def count(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class ColorState:
    tokens: list  # per node: "green" | "orange" | "blue"
    intensity: float  # shared orange intensity in [0, 1]


def friction_threshold(rho: float, clearance: float) -> float:
    """Barrier value of a point sitting ``clearance`` outside the radius."""
    return 0.5 * ((rho + clearance) ** 2 - rho * rho)


def detect_friction(h_matrix, threshold: float) -> FrictionReport:
    """h_matrix holds per-(node, obstacle) barrier values, shape (n, M)."""
    h = np.atleast_2d(np.asarray(h_matrix, dtype=float))
    close = h < threshold
    hits = np.sum(close, axis=1)
    idx = np.flatnonzero(hits >= 2) + 1
    return FrictionReport(indices=idx, per_node_h=h, threshold=threshold)


def scale_needle_speed(command, friction_count: int, beta: float) -> np.ndarray:
    """Attenuate the commanded needle velocity by beta per friction node."""
    return np.asarray(command, dtype=float) * beta**friction_count


def update_colors(report: FrictionReport, needle_moving: bool, saturation: int = 8) -> ColorState:
    n = report.per_node_h.shape[0]
    tokens = ["green"] * n
    intensity = 0.0
    if report.count > 0:
        label = "orange" if needle_moving else "blue"
        if needle_moving:
            intensity = min(1.0, report.count / float(saturation))
        for i in report.indices:
            tokens[i - 1] = label
    return ColorState(tokens=tokens, intensity=intensity)


def family_minima(
    state: ThreadState,
    params: ThreadParams,
    obstacles: list[Obstacle],
    closest=None,
) -> dict:
    """Per-family diagnostics at a state: worst barriers and total stiffness."""
    adj, sec = _second_diffs(state)
    h_con = 0.5 * (params.delta**2 - np.sum(adj * adj, axis=1))
    h_enh = 0.5 * (params.delta**2 - np.sum(sec * sec, axis=1))
    q = np.sum(sec * sec, axis=1) - params.natural_distances**2
    v_sum = float(np.sum(0.5 * q * q))
    if obstacles:
        if closest is None:
            closest = batch_closest_points(state.all_points(), obstacles)
        h_obs = 0.5 * (closest.distance**2 - params.rho**2)
        min_h_obs = np.min(h_obs, axis=0)  # per obstacle over all points
    else:
        min_h_obs = np.zeros(0)
    return {
        "min_h_con": float(np.min(h_con)),
        "min_h_enh": float(np.min(h_enh)),
        "stiffness_sum": v_sum,
        "min_h_obs": min_h_obs,
    }


@dataclass
class TickResult:
    time: float
    applied_command: np.ndarray
    friction: FrictionReport
    colors: ColorState
    qp_status: str
    qp_iterations: int
    slack_norms: dict
    minima: dict
    tick_ms: float


class Engine:
    """Owns the mutable thread state and advances it one tick at a time.

    solver "sparse" is the real-time path; "dense" swaps in the reference
    solver for cross-checking runs.  Warm starts carry across ticks, and all
    arithmetic is deterministic for fixed inputs.
    """

    def __init__(
        self,
        params: ThreadParams,
        initial_state: ThreadState,
        obstacles: list[Obstacle],
        config: SimConfig,
        solver: str = "sparse",
        qp_tol: float = 1e-6,
        qp_max_iters: int = 4000,
    ):
        if solver not in ("sparse", "dense"):
            raise ValueError("solver must be 'sparse' or 'dense'")
        if initial_state.n != params.n:
            raise ValueError("initial state node count mismatch")
        self.params = params
        self.state = initial_state.copy()
        self.obstacles = list(obstacles)
        self.config = config
        self.solver = solver
        self.qp_tol = qp_tol
        self.qp_max_iters = qp_max_iters
        self.threshold = friction_threshold(params.rho, config.friction_clearance)
        self._hessian = hessian_diagonal(params)
        self._warm: QPSolution | None = None
        self.ticks_run = 0

    def tick(self, command) -> TickResult:
        t_start = time.perf_counter()
        params, state, config = self.params, self.state, self.config
        n = params.n
        cmd = np.asarray(command, dtype=float).reshape(NODE_DIM)
        if not np.all(np.isfinite(cmd)):
            raise SimulationError("needle command must be finite")

        closest = batch_closest_points(state.all_points(), self.obstacles)
        h_mat = 0.5 * (closest.distance**2 - params.rho**2)
        report = detect_friction(h_mat[1:], self.threshold)

        moving = bool(np.max(np.abs(cmd), initial=0.0) > config.command_eps)
        v0_ref = scale_needle_speed(cmd, report.count, config.beta) if moving else cmd
        v_des = config.kappa * state.node_vel

        system = assemble(state, params, self.obstacles, v0_ref, closest=closest)
        problem = QPProblem.from_desired(
            self._hessian, stack_desired(v0_ref, v_des, n), system.A, system.b
        )
        if self.solver == "sparse":
            sol = solve_sparse(
                problem,
                tol=self.qp_tol,
                max_iters=self.qp_max_iters,
                warm_start=self._warm,
            )
        else:
            sol = solve_dense_reference(problem)
        if sol.status == "infeasible":
            raise SimulationError("constraint QP reported infeasible")
        self._warm = sol

        vel_end = (n + 1) * NODE_DIM
        u0 = sol.primal[:NODE_DIM]
        u_nodes = sol.primal[NODE_DIM:vel_end].reshape(n, NODE_DIM)
        slacks = np.maximum(sol.primal[vel_end:], 0.0)

        dt = config.dt
        state.needle_pos = state.needle_pos + dt * u0
        state.node_pos = state.node_pos + dt * u_nodes
        state.needle_vel = u0.copy()
        state.node_vel = u_nodes.copy()
        state.time += dt
        if not (
            np.all(np.isfinite(state.needle_pos)) and np.all(np.isfinite(state.node_pos))
        ):
            raise SimulationError("state diverged to non-finite values")
        self.ticks_run += 1

        colors = update_colors(report, moving, config.color_saturation)
        slack_norms = {
            "con": float(np.linalg.norm(slacks[:n])),
            "enh": float(np.linalg.norm(slacks[n : 2 * n - 1])),
            "stiff": float(np.linalg.norm(slacks[2 * n - 1 :])),
        }
        minima = {
            "min_h_con": float(np.min(system.h_values[system.family_rows("con")])),
            "min_h_enh": float(np.min(system.h_values[system.family_rows("enh")])),
            "stiffness_sum": float(np.sum(system.h_values[system.family_rows("stiff")])),
            "min_h_obs": (
                np.min(h_mat, axis=0) if self.obstacles else np.zeros(0)
            ),
        }
        return TickResult(
            time=state.time,
            applied_command=v0_ref,
            friction=report,
            colors=colors,
            qp_status=sol.status,
            qp_iterations=sol.iterations,
            slack_norms=slack_norms,
            minima=minima,
            tick_ms=(time.perf_counter() - t_start) * 1e3,
        )


def expand_script(events, ticks: int, dt: float) -> np.ndarray:
    """Expand [(t, vx, vy), ...] events into a per-tick command array.

    Each event's velocity holds from its start time until the next event.
    An ndarray input of shape (ticks, 2) passes through (padded with zeros
    if short).
    """
    out = np.zeros((ticks, NODE_DIM))
    if events is None:
        return out
    arr = np.asarray(events, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == NODE_DIM:
        k = min(ticks, arr.shape[0])
        out[:k] = arr[:k]
        return out
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("script must be (t, vx, vy) rows or a per-tick array")
    if np.any(np.diff(arr[:, 0]) < 0.0):
        raise ValueError("script times must be non-decreasing")
    for k in range(ticks):
        t_tick = k * dt
        live = arr[arr[:, 0] <= t_tick + 1e-12]
        if live.shape[0]:
            out[k] = live[-1, 1:]
    return out


@dataclass
class BenchResult:
    ticks: int
    mean_ms: float
    p99_ms: float
    max_ms: float
    qp_iter_mean: float
    qp_iter_max: int
    achieved_hz: float
    solver: str = "sparse"

    def summary(self) -> str:
        return (
            f"{self.ticks} ticks: mean {self.mean_ms:.2f} ms, "
            f"p99 {self.p99_ms:.2f} ms, max {self.max_ms:.2f} ms, "
            f"qp iters mean {self.qp_iter_mean:.0f} max {self.qp_iter_max}, "
            f"sustainable {self.achieved_hz:.0f} Hz"
        )


def bench(engine: Engine, commands: np.ndarray) -> BenchResult:
    """Run the engine over the command array and collect timing statistics."""
    times = np.zeros(commands.shape[0])
    iters = np.zeros(commands.shape[0], dtype=int)
    for k in range(commands.shape[0]):
        res = engine.tick(commands[k])
        times[k] = res.tick_ms
        iters[k] = res.qp_iterations
    return BenchResult(
        ticks=commands.shape[0],
        mean_ms=float(np.mean(times)),
        p99_ms=float(np.percentile(times, 99)),
        max_ms=float(np.max(times)),
        qp_iter_mean=float(np.mean(iters)),
        qp_iter_max=int(np.max(iters)),
        achieved_hz=float(1000.0 / np.mean(times)),
        solver=engine.solver,
    )
