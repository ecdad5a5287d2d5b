"""Scenario files, unit normalization and trajectory records.

Scenarios are YAML documents in SI units (meters, seconds).  The loader
validates the schema, the obstacle geometry and the initial state, then
``build_runtime`` rescales everything so the connectivity bound delta
becomes 1: the solver tolerances and slack weights are tuned at that scale,
and a scenario's physical size stops mattering.  Positions written back out
(trajectory records, wire frames) are always in meters.

Trajectory records are JSON text with shortest round-trip float formatting,
so a loaded record compares bit-identical to the written one.  Scenario
identity is a SHA-256 over the canonical JSON encoding of the parsed
document, which makes it stable under key reordering and comments.

Schema (scenario, version 1)::

    format: threadsim-scenario
    version: 1
    name: <str>
    thread:
      nodes: <int >= 3>
      delta: <m>                 # adjacent-pair hard bound
      rho: <m>                   # obstacle clearance radius
      alpha_gain: <1/s>          # barrier decay gain
      gamma_gain: <1/s>          # stiffness decay gain
      weights: {connectivity: 1e5, enhanced: 1e-3, stiffness: 1.0}
      natural_distances: measured | <m> | [<m>, ...]   # n-1 values
      needle: [x, y]             # m
      nodes_xy: [[x, y], ...]    # n rows, m
    obstacles:                   # optional
      smoothing: {fillet_radius: <m>, angle_threshold: <rad>, arc_samples: <int>}
      polygons: [[[x, y], ...], ...]
    sim:
      rate_hz: 66.0
      kappa: 0.95
      beta: 0.9
      friction_clearance: 5.0e-4   # m
      color_saturation: 8
    run:
      mode: scripted | interactive
      ticks: <int>
      max_input_speed: <m/s>
      script: [[t, vx, vy], ...]   # s, m/s; velocity holds until next row
    workspace: {min: [x, y], max: [x, y]}   # m

The weights are dimensionless at the normalized scale and are applied
there unchanged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .constraints import (
    ThreadParams,
    ThreadState,
    _second_diffs,
    default_natural_distances,
)
from .geometry import (
    GeometryError,
    Obstacle,
    SmoothingConfig,
    batch_closest_points,
    build_obstacle,
    is_ccw,
    validate_polygon,
)
from .sim import Engine, SimConfig, expand_script, family_minima

__all__ = [
    "ScenarioError",
    "SafetyError",
    "Scenario",
    "RuntimeScene",
    "canonical_hash",
    "load_scenario",
    "load_scenario_file",
    "build_runtime",
    "TrajectoryRecord",
    "save_trajectory",
    "load_trajectory",
    "records_equal",
    "run_scripted",
    "mean_error",
]

SCENARIO_FORMAT = "threadsim-scenario"
RECORD_FORMAT = "threadsim-trajectory"


class ScenarioError(ValueError):
    """Raised for malformed or unsafe scenario documents."""


class SafetyError(ScenarioError):
    """A well-formed scenario whose initial state already violates a barrier."""


def canonical_hash(document) -> str:
    """SHA-256 of the canonical JSON encoding of a parsed document."""
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class Scenario:
    """Validated scenario in SI units plus the raw parsed document."""

    name: str
    n: int
    delta_m: float
    rho_m: float
    alpha_gain: float
    gamma_gain: float
    w_con: float
    w_enh: float
    w_stiff: float
    needle_m: np.ndarray
    nodes_m: np.ndarray
    natural_m: np.ndarray
    polygons_m: list
    smoothing_m: SmoothingConfig
    rate_hz: float
    kappa: float
    beta: float
    friction_clearance_m: float
    color_saturation: int
    mode: str
    ticks: int
    max_input_speed_m: float
    script_m: np.ndarray | None
    workspace_m: np.ndarray
    scenario_hash: str
    raw: dict = field(repr=False)


@dataclass
class RuntimeScene:
    """Scenario rescaled to the normalized unit (delta == 1)."""

    params: ThreadParams
    state0: ThreadState
    obstacles: list
    config: SimConfig
    scale: float  # meters per internal unit
    name: str
    scenario_hash: str
    mode: str
    ticks: int
    max_input_speed: float
    script: np.ndarray | None
    workspace: np.ndarray


def _need(mapping, key, path, kind=None):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ScenarioError(f"missing required field {path}.{key}")
    val = mapping[key]
    if kind is not None and not isinstance(val, kind):
        raise ScenarioError(f"{path}.{key} has wrong type")
    return val


def _pos_float(mapping, key, path, default=None):
    if default is not None and key not in mapping:
        return float(default)
    val = _need(mapping, key, path)
    try:
        out = float(val)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}.{key} must be a number") from None
    if not (out > 0.0) or not np.isfinite(out):
        raise ScenarioError(f"{path}.{key} must be positive and finite")
    return out


def load_scenario(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    if doc.get("format") != SCENARIO_FORMAT:
        raise ScenarioError(f"format must be {SCENARIO_FORMAT!r}")
    if doc.get("version") != 1:
        raise ScenarioError("unsupported scenario version")
    known = {"format", "version", "name", "thread", "obstacles", "sim", "run", "workspace"}
    extra = set(doc) - known
    if extra:
        raise ScenarioError(f"unknown top-level fields: {sorted(extra)}")
    name = _need(doc, "name", "scenario", str)

    thread = _need(doc, "thread", "scenario", dict)
    n = _need(thread, "nodes", "thread")
    if not isinstance(n, int) or n < 3:
        raise ScenarioError("thread.nodes must be an integer >= 3")
    delta = _pos_float(thread, "delta", "thread")
    rho = _pos_float(thread, "rho", "thread")
    alpha = _pos_float(thread, "alpha_gain", "thread", default=10.0)
    gamma = _pos_float(thread, "gamma_gain", "thread", default=5.0)
    weights = thread.get("weights", {}) or {}
    w_con = _pos_float(weights, "connectivity", "thread.weights", default=1.0e5)
    w_enh = _pos_float(weights, "enhanced", "thread.weights", default=1.0e-3)
    w_stiff = _pos_float(weights, "stiffness", "thread.weights", default=1.0)

    needle = np.asarray(_need(thread, "needle", "thread"), dtype=float)
    if needle.shape != (2,) or not np.all(np.isfinite(needle)):
        raise ScenarioError("thread.needle must be a finite [x, y] pair")
    nodes = np.asarray(_need(thread, "nodes_xy", "thread"), dtype=float)
    if nodes.shape != (n, 2) or not np.all(np.isfinite(nodes)):
        raise ScenarioError("thread.nodes_xy must be n finite [x, y] rows")

    nat_spec = thread.get("natural_distances", "measured")
    if isinstance(nat_spec, str):
        if nat_spec != "measured":
            raise ScenarioError("thread.natural_distances string must be 'measured'")
        natural = default_natural_distances(nodes, needle)
    elif isinstance(nat_spec, (int, float)):
        natural = np.full(n - 1, float(nat_spec))
    else:
        natural = np.asarray(nat_spec, dtype=float)
        if natural.shape != (n - 1,):
            raise ScenarioError("thread.natural_distances needs n-1 entries")
    if np.any(natural <= 0.0) or np.any(natural > 2.0 * delta):
        raise ScenarioError("thread.natural_distances must lie in (0, 2*delta]")

    obstacles_doc = doc.get("obstacles") or {}
    smoothing_doc = obstacles_doc.get("smoothing", {}) or {}
    smoothing = SmoothingConfig(
        fillet_radius=_pos_float(smoothing_doc, "fillet_radius", "obstacles.smoothing", default=5.0e-4),
        angle_threshold=float(smoothing_doc.get("angle_threshold", 0.35)),
        arc_samples=int(smoothing_doc.get("arc_samples", 4)),
    )
    polygons = []
    for k, poly in enumerate(obstacles_doc.get("polygons", []) or []):
        arr = np.asarray(poly, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ScenarioError(f"obstacles.polygons[{k}] must be [[x, y], ...]")
        if arr.shape[0] >= 3 and not is_ccw(arr):
            arr = arr[::-1].copy()  # accept clockwise input
        try:
            arr = validate_polygon(arr)
        except GeometryError as exc:
            raise ScenarioError(f"obstacles.polygons[{k}]: {exc}") from None
        polygons.append(arr)

    sim_doc = doc.get("sim", {}) or {}
    rate_hz = _pos_float(sim_doc, "rate_hz", "sim", default=66.0)
    kappa = float(sim_doc.get("kappa", 0.95))
    beta = float(sim_doc.get("beta", 0.9))
    clearance = float(sim_doc.get("friction_clearance", 5.0e-4))
    saturation = int(sim_doc.get("color_saturation", 8))

    run_doc = doc.get("run", {}) or {}
    mode = run_doc.get("mode", "interactive")
    if mode not in ("scripted", "interactive"):
        raise ScenarioError("run.mode must be 'scripted' or 'interactive'")
    ticks = int(run_doc.get("ticks", 660))
    if ticks < 0:
        raise ScenarioError("run.ticks must be non-negative")
    max_speed = _pos_float(run_doc, "max_input_speed", "run", default=0.02)
    script = None
    if run_doc.get("script") is not None:
        script = np.asarray(run_doc["script"], dtype=float)
        if script.ndim != 2 or script.shape[1] != 3:
            raise ScenarioError("run.script rows must be [t, vx, vy]")
        if np.any(np.diff(script[:, 0]) < 0.0):
            raise ScenarioError("run.script times must be non-decreasing")

    ws_doc = _need(doc, "workspace", "scenario", dict)
    ws = np.array(
        [np.asarray(_need(ws_doc, "min", "workspace"), float),
         np.asarray(_need(ws_doc, "max", "workspace"), float)]
    )
    if ws.shape != (2, 2) or not np.all(ws[1] > ws[0]):
        raise ScenarioError("workspace.max must exceed workspace.min")

    points = np.vstack([needle[None, :], nodes] + polygons)
    if np.any(points < ws[0] - 1e-12) or np.any(points > ws[1] + 1e-12):
        raise ScenarioError("thread or obstacle geometry lies outside the workspace")

    scenario = Scenario(
        name=name,
        n=n,
        delta_m=delta,
        rho_m=rho,
        alpha_gain=alpha,
        gamma_gain=gamma,
        w_con=w_con,
        w_enh=w_enh,
        w_stiff=w_stiff,
        needle_m=needle,
        nodes_m=nodes,
        natural_m=natural,
        polygons_m=polygons,
        smoothing_m=smoothing,
        rate_hz=rate_hz,
        kappa=kappa,
        beta=beta,
        friction_clearance_m=clearance,
        color_saturation=saturation,
        mode=mode,
        ticks=ticks,
        max_input_speed_m=max_speed,
        script_m=script,
        workspace_m=ws,
        scenario_hash=canonical_hash(doc),
        raw=doc,
    )
    _check_initial_safety(scenario)
    return scenario


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def build_runtime(scenario: Scenario) -> RuntimeScene:
    s = scenario
    c = s.delta_m  # meters per normalized unit
    try:
        params = ThreadParams(
            n=s.n,
            delta=1.0,
            rho=s.rho_m / c,
            natural_distances=s.natural_m / c,
            alpha_gain=s.alpha_gain,
            gamma_gain=s.gamma_gain,
            w_con=s.w_con,
            w_enh=s.w_enh,
            w_stiff=s.w_stiff,
        )
    except ValueError as exc:
        raise ScenarioError(f"thread parameters rejected: {exc}") from None
    state0 = ThreadState(
        s.needle_m / c, s.nodes_m / c, np.zeros(2), np.zeros((s.n, 2))
    )
    smoothing = SmoothingConfig(
        fillet_radius=s.smoothing_m.fillet_radius / c,
        angle_threshold=s.smoothing_m.angle_threshold,
        arc_samples=s.smoothing_m.arc_samples,
    )
    try:
        obstacles = [
            build_obstacle(k, poly / c, smoothing) for k, poly in enumerate(s.polygons_m)
        ]
    except GeometryError as exc:
        raise ScenarioError(f"obstacle rejected during preprocessing: {exc}") from None
    config = SimConfig(
        rate_hz=s.rate_hz,
        kappa=s.kappa,
        beta=s.beta,
        friction_clearance=s.friction_clearance_m / c,
        color_saturation=s.color_saturation,
    )
    script = None
    if s.script_m is not None:
        script = s.script_m.copy()
        script[:, 1:] /= c
    return RuntimeScene(
        params=params,
        state0=state0,
        obstacles=obstacles,
        config=config,
        scale=c,
        name=s.name,
        scenario_hash=s.scenario_hash,
        mode=s.mode,
        ticks=s.ticks,
        max_input_speed=s.max_input_speed_m / c,
        script=script,
        workspace=s.workspace_m / c,
    )


def _check_initial_safety(scenario: Scenario):
    """Every barrier must start non-negative; errors name the failing row."""
    scene = None
    try:
        scene = build_runtime(scenario)
    except ScenarioError:
        raise
    params, state = scene.params, scene.state0
    adj, sec = _second_diffs(state)
    h_con = 0.5 * (params.delta**2 - np.sum(adj * adj, axis=1))
    h_enh = 0.5 * (params.delta**2 - np.sum(sec * sec, axis=1))
    tol = -1e-9
    bad = np.flatnonzero(h_con < tol)
    if bad.size:
        i = int(bad[0])
        raise SafetyError(
            f"initial state violates connectivity: h_con[{i + 1}] = {h_con[i]:.3e}"
        )
    bad = np.flatnonzero(h_enh < tol)
    if bad.size:
        i = int(bad[0])
        raise SafetyError(
            f"initial state violates second-neighbour bound: h_enh[{i + 1}] = {h_enh[i]:.3e}"
        )
    if scene.obstacles:
        closest = batch_closest_points(state.all_points(), scene.obstacles)
        h_obs = 0.5 * (closest.distance**2 - params.rho**2)
        if np.min(h_obs) < tol:
            pt, ob = np.unravel_index(int(np.argmin(h_obs)), h_obs.shape)
            what = "needle" if pt == 0 else f"node {pt}"
            raise SafetyError(
                f"initial state violates clearance: h_obs[{what}, obstacle {ob}]"
                f" = {h_obs[pt, ob]:.3e}"
            )


# ---------------------------------------------------------------------------
# trajectory records


@dataclass
class TrajectoryRecord:
    """Per-frame simulation output in SI units.

    Frame 0 is the initial state; frame k >= 1 is the state after tick k.
    Barrier diagnostics are in m^2 (m^4 for the quartic stiffness sums) and
    slack norms carry the per-tick QP slacks, zero in frame 0.
    """

    scenario_name: str
    scenario_hash: str
    rate_hz: float
    n: int
    m_obstacles: int
    length_scale: float
    times: np.ndarray
    needle: np.ndarray  # (T, 2)
    nodes: np.ndarray  # (T, n, 2)
    colors: list  # (T, n) tokens
    intensity: np.ndarray
    min_h_con: np.ndarray
    min_h_enh: np.ndarray
    stiffness_sum: np.ndarray
    min_h_obs: np.ndarray  # (T, M)
    slack_con: np.ndarray
    slack_enh: np.ndarray
    slack_stiff: np.ndarray
    qp_iterations: np.ndarray
    version: int = 1

    @property
    def n_frames(self) -> int:
        return self.times.shape[0]


_RECORD_ARRAYS = [
    "times",
    "needle",
    "nodes",
    "intensity",
    "min_h_con",
    "min_h_enh",
    "stiffness_sum",
    "min_h_obs",
    "slack_con",
    "slack_enh",
    "slack_stiff",
    "qp_iterations",
]


def record_to_document(record: TrajectoryRecord) -> dict:
    doc = {
        "format": RECORD_FORMAT,
        "version": record.version,
        "scenario": record.scenario_name,
        "scenario_hash": record.scenario_hash,
        "rate_hz": record.rate_hz,
        "n": record.n,
        "m_obstacles": record.m_obstacles,
        "length_scale": record.length_scale,
        "colors": record.colors,
    }
    for key in _RECORD_ARRAYS:
        doc[key] = getattr(record, key).tolist()
    return doc


def save_trajectory(record: TrajectoryRecord, path):
    doc = record_to_document(record)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_trajectory(path) -> TrajectoryRecord:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != RECORD_FORMAT:
        raise ScenarioError(f"record format must be {RECORD_FORMAT!r}")
    if doc.get("version") != 1:
        raise ScenarioError("unsupported record version")
    t = len(doc["times"])
    n = doc["n"]
    m = doc["m_obstacles"]
    return TrajectoryRecord(
        scenario_name=doc["scenario"],
        scenario_hash=doc["scenario_hash"],
        rate_hz=float(doc["rate_hz"]),
        n=n,
        m_obstacles=m,
        length_scale=float(doc["length_scale"]),
        times=np.asarray(doc["times"], dtype=float),
        needle=np.asarray(doc["needle"], dtype=float).reshape(t, 2),
        nodes=np.asarray(doc["nodes"], dtype=float).reshape(t, n, 2),
        colors=doc["colors"],
        intensity=np.asarray(doc["intensity"], dtype=float),
        min_h_con=np.asarray(doc["min_h_con"], dtype=float),
        min_h_enh=np.asarray(doc["min_h_enh"], dtype=float),
        stiffness_sum=np.asarray(doc["stiffness_sum"], dtype=float),
        min_h_obs=np.asarray(doc["min_h_obs"], dtype=float).reshape(t, m),
        slack_con=np.asarray(doc["slack_con"], dtype=float),
        slack_enh=np.asarray(doc["slack_enh"], dtype=float),
        slack_stiff=np.asarray(doc["slack_stiff"], dtype=float),
        qp_iterations=np.asarray(doc["qp_iterations"], dtype=int),
    )


def records_equal(a: TrajectoryRecord, b: TrajectoryRecord) -> bool:
    """Bitwise equality over every field, arrays included."""
    scalar = (
        a.scenario_name == b.scenario_name
        and a.scenario_hash == b.scenario_hash
        and a.rate_hz == b.rate_hz
        and a.n == b.n
        and a.m_obstacles == b.m_obstacles
        and a.length_scale == b.length_scale
        and a.version == b.version
        and a.colors == b.colors
    )
    if not scalar:
        return False
    return all(
        np.array_equal(getattr(a, key), getattr(b, key)) for key in _RECORD_ARRAYS
    )


def run_scripted(
    scene: RuntimeScene,
    ticks: int | None = None,
    solver: str = "sparse",
    qp_tol: float = 1e-6,
    commands: np.ndarray | None = None,
) -> TrajectoryRecord:
    """Run a scenario open loop and return its trajectory record.

    ``commands`` overrides the scenario script with a per-tick (T, 2) array
    in normalized units; either way inputs are clamped to the scenario's
    speed limit before entering the engine, mirroring the live service.
    """
    total = scene.ticks if ticks is None else int(ticks)
    engine = Engine(
        scene.params,
        scene.state0,
        scene.obstacles,
        scene.config,
        solver=solver,
        qp_tol=qp_tol,
    )
    if commands is None:
        commands = expand_script(scene.script, total, scene.config.dt)
    else:
        commands = np.asarray(commands, dtype=float).reshape(total, 2)
    commands = clamp_speed(commands, scene.max_input_speed)

    n, m = scene.params.n, len(scene.obstacles)
    c = scene.scale
    t_frames = total + 1
    times = np.zeros(t_frames)
    needle = np.zeros((t_frames, 2))
    nodes = np.zeros((t_frames, n, 2))
    colors = [["green"] * n]
    intensity = np.zeros(t_frames)
    min_h_con = np.zeros(t_frames)
    min_h_enh = np.zeros(t_frames)
    stiffness_sum = np.zeros(t_frames)
    min_h_obs = np.zeros((t_frames, m))
    slack_con = np.zeros(t_frames)
    slack_enh = np.zeros(t_frames)
    slack_stiff = np.zeros(t_frames)
    qp_iterations = np.zeros(t_frames, dtype=int)

    def capture(k, minima, slack_norms):
        state = engine.state
        times[k] = state.time
        needle[k] = c * state.needle_pos
        nodes[k] = c * state.node_pos
        min_h_con[k] = c**2 * minima["min_h_con"]
        min_h_enh[k] = c**2 * minima["min_h_enh"]
        stiffness_sum[k] = c**4 * minima["stiffness_sum"]
        if m:
            min_h_obs[k] = c**2 * minima["min_h_obs"]
        slack_con[k] = c**2 * slack_norms["con"]
        slack_enh[k] = c**2 * slack_norms["enh"]
        slack_stiff[k] = c**4 * slack_norms["stiff"]

    zero_slacks = {"con": 0.0, "enh": 0.0, "stiff": 0.0}
    capture(0, family_minima(scene.state0, scene.params, scene.obstacles), zero_slacks)
    for k in range(total):
        res = engine.tick(commands[k])
        capture(k + 1, res.minima, res.slack_norms)
        colors.append(list(res.colors.tokens))
        intensity[k + 1] = res.colors.intensity
        qp_iterations[k + 1] = res.qp_iterations

    return TrajectoryRecord(
        scenario_name=scene.name,
        scenario_hash=scene.scenario_hash,
        rate_hz=scene.config.rate_hz,
        n=n,
        m_obstacles=m,
        length_scale=c,
        times=times,
        needle=needle,
        nodes=nodes,
        colors=colors,
        intensity=intensity,
        min_h_con=min_h_con,
        min_h_enh=min_h_enh,
        stiffness_sum=stiffness_sum,
        min_h_obs=min_h_obs,
        slack_con=slack_con,
        slack_enh=slack_enh,
        slack_stiff=slack_stiff,
        qp_iterations=qp_iterations,
    )


def clamp_speed(commands: np.ndarray, limit: float) -> np.ndarray:
    """Scale any command whose magnitude exceeds the limit back onto it."""
    out = np.array(commands, dtype=float)
    speed = np.linalg.norm(out, axis=-1)
    hot = speed > limit
    if np.any(hot):
        out[hot] *= (limit / speed[hot])[..., None]
    return out


def mean_error(
    sim: TrajectoryRecord, ref: TrajectoryRecord, thread_length: float | None = None
) -> float:
    """Mean node-position error between records, percent of thread length.

    The reference is linearly resampled onto the simulated frame times, so
    records captured at different rates compare directly.  The needle point
    participates like any node.
    """
    if sim.n != ref.n:
        raise ValueError("records describe different thread sizes")
    if thread_length is None:
        pts = np.vstack([ref.needle[0:1], ref.nodes[0]])
        thread_length = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    sim_pts = np.concatenate([sim.needle[:, None, :], sim.nodes], axis=1)
    ref_pts = np.concatenate([ref.needle[:, None, :], ref.nodes], axis=1)
    t_sim, t_ref = sim.times, ref.times
    flat = ref_pts.reshape(t_ref.shape[0], -1)
    resampled = np.stack(
        [np.interp(t_sim, t_ref, flat[:, j]) for j in range(flat.shape[1])], axis=1
    ).reshape(t_sim.shape[0], sim.n + 1, 2)
    err = np.linalg.norm(sim_pts - resampled, axis=2)
    return float(np.mean(err) / thread_length * 100.0)
