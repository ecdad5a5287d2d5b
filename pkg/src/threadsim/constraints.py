"""Barrier and Lyapunov constraint assembly for the thread QP.

The decision vector is U = [u0, u1..un, s] where u0 is the needle (lead)
velocity, ui are node velocities and s are slack variables, one per
connectivity, enhanced-connectivity and stiffness row.  All rows are linear
in U and stacked as A U + b >= 0 in a fixed order:

    1. obstacle clearance rows, point-major (needle first), then obstacle
    2. adjacent-pair connectivity rows, i = 1..n
    3. second-neighbour connectivity rows (enhanced), j = 1..n-1
    4. stiffness (shape-memory) rows, j = 1..n-1
    5. slack positivity rows

The needle is not a free agent of rows 2-4's leading pair: its commanded
velocity enters those rows' constant term, so the QP only shapes the nodes'
response to it.  Obstacle rows carry no slack; they are hard constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .geometry import BatchClosestPoints, Obstacle, batch_closest_points

NODE_DIM = 2  # planar nodes; assembly is written against this constant

__all__ = [
    "NODE_DIM",
    "ThreadParams",
    "ThreadState",
    "RowTag",
    "ConstraintSystem",
    "h_connectivity",
    "h_obstacle",
    "v_stiffness",
    "default_natural_distances",
    "row_count",
    "col_count",
    "nnz_count",
    "hessian_diagonal",
    "stack_desired",
    "assemble",
    "check_gradients",
]


@dataclass(frozen=True)
class ThreadParams:
    """Thread geometry and controller gains.

    natural_distances holds the n-1 rest separations of second-neighbour
    pairs, leading pair (node2, needle) first.  delta is the hard upper bound
    on adjacent separations, rho the obstacle clearance radius.
    """

    n: int
    delta: float
    rho: float
    natural_distances: np.ndarray
    alpha_gain: float = 10.0
    gamma_gain: float = 5.0
    w_con: float = 1.0e5
    w_enh: float = 1.0e-3
    w_stiff: float = 1.0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("thread needs at least 3 nodes")
        if not (self.delta > 0.0):
            raise ValueError("delta must be positive")
        if self.rho < 0.0:
            raise ValueError("rho must be non-negative")
        nat = np.asarray(self.natural_distances, dtype=float)
        if nat.shape != (self.n - 1,):
            raise ValueError("natural_distances must have n-1 entries")
        if np.any(nat <= 0.0) or np.any(nat > 2.0 * self.delta):
            raise ValueError("natural distances must lie in (0, 2*delta]")
        if not (self.alpha_gain > 0.0 and self.gamma_gain > 0.0):
            raise ValueError("gains must be positive")
        if not (self.w_stiff > 0.0 and self.w_enh >= 0.0):
            raise ValueError("slack weights must be positive")
        # the two weights differ by four length powers; compare scale-free
        if self.w_con < 10.0 * self.w_stiff * self.delta**4:
            raise ValueError("w_con must dominate w_stiff by at least 10x")
        object.__setattr__(self, "natural_distances", nat)

    def with_scale(self, factor: float) -> "ThreadParams":
        """Same thread expressed in a length unit scaled by ``factor``."""
        return replace(
            self,
            delta=self.delta * factor,
            rho=self.rho * factor,
            natural_distances=self.natural_distances * factor,
            w_con=self.w_con / factor**2,
            w_enh=self.w_enh / factor**2,
            w_stiff=self.w_stiff / factor**6,
        )


@dataclass
class ThreadState:
    """Positions and last applied velocities of needle and nodes."""

    needle_pos: np.ndarray
    node_pos: np.ndarray
    needle_vel: np.ndarray
    node_vel: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.needle_pos = np.asarray(self.needle_pos, dtype=float).reshape(NODE_DIM)
        self.node_pos = np.asarray(self.node_pos, dtype=float)
        self.needle_vel = np.asarray(self.needle_vel, dtype=float).reshape(NODE_DIM)
        self.node_vel = np.asarray(self.node_vel, dtype=float)
        if self.node_pos.ndim != 2 or self.node_pos.shape[1] != NODE_DIM:
            raise ValueError("node_pos must be (n, 2)")
        if self.node_vel.shape != self.node_pos.shape:
            raise ValueError("node_vel must match node_pos shape")
        for arr in (self.needle_pos, self.node_pos, self.needle_vel, self.node_vel):
            if not np.all(np.isfinite(arr)):
                raise ValueError("state must be finite")

    @property
    def n(self) -> int:
        return self.node_pos.shape[0]

    def copy(self) -> "ThreadState":
        return ThreadState(
            self.needle_pos.copy(),
            self.node_pos.copy(),
            self.needle_vel.copy(),
            self.node_vel.copy(),
            self.time,
        )

    def all_points(self) -> np.ndarray:
        """Needle plus nodes, needle first: shape (n+1, 2)."""
        return np.vstack([self.needle_pos[None, :], self.node_pos])


def h_connectivity(separation, delta: float) -> float:
    """Pair barrier: positive while the pair is closer than delta."""
    s = np.asarray(separation, dtype=float)
    return 0.5 * (delta * delta - float(s @ s))


def h_obstacle(distance: float, rho: float) -> float:
    """Clearance barrier: positive while the point is farther than rho."""
    return 0.5 * (distance * distance - rho * rho)


def v_stiffness(separation, natural: float) -> float:
    """Shape-memory Lyapunov value, zero exactly at the rest separation."""
    s = np.asarray(separation, dtype=float)
    q = float(s @ s) - natural * natural
    return 0.5 * q * q


def default_natural_distances(node_pos, needle_pos) -> np.ndarray:
    """Rest separations measured from the given configuration."""
    pts = np.vstack([np.asarray(needle_pos, float)[None, :], np.asarray(node_pos, float)])
    sec = pts[2:] - pts[:-2]
    return np.hypot(sec[:, 0], sec[:, 1])


def row_count(n: int, m_obstacles: int) -> int:
    return (3 * n - 2) + m_obstacles * (n + 1) + (3 * n - 2)


def col_count(n: int) -> int:
    return (n + 1) * NODE_DIM + (3 * n - 2)


def nnz_count(n: int, m_obstacles: int) -> int:
    d = NODE_DIM
    con = (n - 1) * (2 * d + 1) + (d + 1)
    enh = (n - 2) * (2 * d + 1) + (d + 1)
    return con + 2 * enh + m_obstacles * (n + 1) * d + (3 * n - 2)


@dataclass(frozen=True)
class RowTag:
    """Identifies what a constraint row encodes.

    kind is one of "obs", "con", "enh", "stiff", "slack".  index is the
    point index for "obs" (0 = needle), the pair index i for "con", the pair
    index j for "enh"/"stiff" and the slack column offset for "slack".
    """

    kind: str
    index: int
    obstacle: int = -1


@dataclass
class ConstraintSystem:
    """Assembled sparse constraint block A U + b >= 0 plus diagnostics."""

    A: sp.csr_matrix
    b: np.ndarray
    h_values: np.ndarray
    tags: list = field(repr=False)
    n: int = 0
    m_obstacles: int = 0

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    @property
    def vel_cols(self) -> int:
        return (self.n + 1) * NODE_DIM

    @property
    def slack_cols(self) -> int:
        return 3 * self.n - 2

    def family_rows(self, kind: str) -> slice:
        n, m = self.n, self.m_obstacles
        obs_end = m * (n + 1)
        blocks = {
            "obs": slice(0, obs_end),
            "con": slice(obs_end, obs_end + n),
            "enh": slice(obs_end + n, obs_end + 2 * n - 1),
            "stiff": slice(obs_end + 2 * n - 1, obs_end + 3 * n - 2),
            "slack": slice(obs_end + 3 * n - 2, obs_end + 2 * (3 * n - 2)),
        }
        return blocks[kind]


def _second_diffs(state: ThreadState):
    """(adjacent diffs (n,2), second-neighbour diffs (n-1,2)) with the
    needle standing in as the -1st and 0th anchor."""
    x0 = state.needle_pos
    X = state.node_pos
    n = X.shape[0]
    adj = np.empty((n, NODE_DIM))
    adj[0] = X[0] - x0
    adj[1:] = X[1:] - X[:-1]
    sec = np.empty((n - 1, NODE_DIM))
    sec[0] = X[1] - x0
    sec[1:] = X[2:] - X[:-2]
    return adj, sec


def assemble(
    state: ThreadState,
    params: ThreadParams,
    obstacles: list[Obstacle],
    needle_ref_vel,
    closest: BatchClosestPoints | None = None,
) -> ConstraintSystem:
    """Build the fixed-pattern sparse constraint block at the given state.

    The sparsity pattern depends only on (n, len(obstacles)); entries that
    happen to be zero are stored explicitly so A.nnz always equals
    nnz_count(n, m).  needle_ref_vel is the already-scaled needle command
    folded into the leading rows' constant terms.
    """
    n, d = params.n, NODE_DIM
    if state.n != n:
        raise ValueError("state/params node count mismatch")
    m = len(obstacles)
    v0 = np.asarray(needle_ref_vel, dtype=float).reshape(d)
    alpha = params.alpha_gain
    gamma = params.gamma_gain

    adj, sec = _second_diffs(state)
    h_con = 0.5 * (params.delta**2 - np.sum(adj * adj, axis=1))
    h_enh = 0.5 * (params.delta**2 - np.sum(sec * sec, axis=1))
    q = np.sum(sec * sec, axis=1) - params.natural_distances**2
    v_st = 0.5 * q * q
    grad_st = 2.0 * q[:, None] * sec  # dV/dx of the higher-index node

    pts = state.all_points()
    if closest is None:
        closest = batch_closest_points(pts, obstacles)
    diff_obs = pts[:, None, :] - closest.point  # (n+1, m, 2)
    h_obs = 0.5 * (closest.distance**2 - params.rho**2)

    slack0 = (n + 1) * d
    rows_parts, cols_parts, data_parts = [], [], []
    ar = np.arange(d)

    # --- obstacle rows: row i*m + o, gradient on point i's velocity block
    if m > 0:
        pt_idx = np.repeat(np.arange(n + 1), m)
        rows_parts.append(np.repeat(np.arange((n + 1) * m), d))
        cols_parts.append((pt_idx[:, None] * d + ar).ravel())
        data_parts.append(diff_obs.reshape(-1, d).ravel())
    base_con = (n + 1) * m

    # --- connectivity rows
    rows_parts.append(np.full(d, base_con))
    cols_parts.append(1 * d + ar)
    data_parts.append(-adj[0])
    i_arr = np.arange(2, n + 1)
    r_arr = base_con + i_arr - 1
    rows_parts.append(np.repeat(r_arr, d))
    cols_parts.append((i_arr[:, None] * d + ar).ravel())
    data_parts.append((-adj[1:]).ravel())
    rows_parts.append(np.repeat(r_arr, d))
    cols_parts.append(((i_arr - 1)[:, None] * d + ar).ravel())
    data_parts.append(adj[1:].ravel())
    rows_parts.append(base_con + np.arange(n))
    cols_parts.append(slack0 + np.arange(n))
    data_parts.append(np.ones(n))

    # --- enhanced connectivity rows
    base_enh = base_con + n
    rows_parts.append(np.full(d, base_enh))
    cols_parts.append(2 * d + ar)
    data_parts.append(-sec[0])
    j_arr = np.arange(2, n)
    re_arr = base_enh + j_arr - 1
    rows_parts.append(np.repeat(re_arr, d))
    cols_parts.append(((j_arr + 1)[:, None] * d + ar).ravel())
    data_parts.append((-sec[1:]).ravel())
    rows_parts.append(np.repeat(re_arr, d))
    cols_parts.append(((j_arr - 1)[:, None] * d + ar).ravel())
    data_parts.append(sec[1:].ravel())
    rows_parts.append(base_enh + np.arange(n - 1))
    cols_parts.append(slack0 + n + np.arange(n - 1))
    data_parts.append(np.ones(n - 1))

    # --- stiffness rows
    base_st = base_enh + (n - 1)
    rows_parts.append(np.full(d, base_st))
    cols_parts.append(2 * d + ar)
    data_parts.append(-grad_st[0])
    rs_arr = base_st + j_arr - 1
    rows_parts.append(np.repeat(rs_arr, d))
    cols_parts.append(((j_arr + 1)[:, None] * d + ar).ravel())
    data_parts.append((-grad_st[1:]).ravel())
    rows_parts.append(np.repeat(rs_arr, d))
    cols_parts.append(((j_arr - 1)[:, None] * d + ar).ravel())
    data_parts.append(grad_st[1:].ravel())
    rows_parts.append(base_st + np.arange(n - 1))
    cols_parts.append(slack0 + (2 * n - 1) + np.arange(n - 1))
    data_parts.append(np.ones(n - 1))

    # --- slack positivity rows
    base_sp = base_st + (n - 1)
    n_slack = 3 * n - 2
    rows_parts.append(base_sp + np.arange(n_slack))
    cols_parts.append(slack0 + np.arange(n_slack))
    data_parts.append(np.ones(n_slack))

    rows = np.concatenate([np.asarray(p, dtype=np.int64) for p in rows_parts])
    cols = np.concatenate([np.asarray(p, dtype=np.int64) for p in cols_parts])
    data = np.concatenate([np.asarray(p, dtype=float) for p in data_parts])
    shape = (row_count(n, m), col_count(n))
    A = sp.coo_matrix((data, (rows, cols)), shape=shape).tocsr()

    b = np.zeros(shape[0])
    h_values = np.zeros(shape[0])
    if m > 0:
        b[:base_con] = alpha * h_obs.ravel()
        h_values[:base_con] = h_obs.ravel()
    b[base_con] = alpha * h_con[0] + adj[0] @ v0
    b[base_con + 1 : base_con + n] = alpha * h_con[1:]
    h_values[base_con : base_con + n] = h_con
    b[base_enh] = alpha * h_enh[0] + sec[0] @ v0
    b[base_enh + 1 : base_enh + n - 1] = alpha * h_enh[1:]
    h_values[base_enh : base_enh + n - 1] = h_enh
    b[base_st] = -gamma * v_st[0] + grad_st[0] @ v0
    b[base_st + 1 : base_st + n - 1] = -gamma * v_st[1:]
    h_values[base_st : base_st + n - 1] = v_st

    tags = []
    for i in range(n + 1):
        for o in range(m):
            tags.append(RowTag("obs", i, obstacles[o].index))
    tags.extend(RowTag("con", i) for i in range(1, n + 1))
    tags.extend(RowTag("enh", j) for j in range(1, n))
    tags.extend(RowTag("stiff", j) for j in range(1, n))
    tags.extend(RowTag("slack", k) for k in range(n_slack))

    return ConstraintSystem(A=A, b=b, h_values=h_values, tags=tags, n=n, m_obstacles=m)


def hessian_diagonal(params: ThreadParams) -> np.ndarray:
    """QP Hessian diagonal over [u0, u, s]: unit velocity tracking weights
    followed by the per-family slack weights."""
    n = params.n
    return np.concatenate(
        [
            np.ones((n + 1) * NODE_DIM),
            np.full(n, params.w_con),
            np.full(n - 1, params.w_enh if params.w_enh > 0.0 else 1e-12),
            np.full(n - 1, params.w_stiff),
        ]
    )


def stack_desired(needle_des, node_des, n: int) -> np.ndarray:
    """Desired-velocity stack aligned with the QP columns (slacks want 0)."""
    out = np.zeros(col_count(n))
    out[:NODE_DIM] = np.asarray(needle_des, dtype=float).reshape(NODE_DIM)
    out[NODE_DIM : (n + 1) * NODE_DIM] = np.asarray(node_des, dtype=float).reshape(
        n * NODE_DIM
    )
    return out


def check_gradients(
    state: ThreadState,
    params: ThreadParams,
    obstacles: list[Obstacle],
    step: float = 1e-7,
) -> float:
    """Compare every constraint row's position gradient against central
    finite differences of its scalar function.

    Obstacle rows hold the closest point fixed during differentiation.
    Returns the worst relative error over all rows.
    """
    n, d = params.n, NODE_DIM
    system = assemble(state, params, obstacles, np.zeros(d))
    closest = batch_closest_points(state.all_points(), obstacles)
    dense = system.A.toarray()
    delta2 = params.delta**2

    def pair_fun(hi: int, lo: int, fun):
        # hi/lo index into the needle-first point stack
        def f(pts):
            return fun(pts[hi] - pts[lo])

        return f

    worst = 0.0
    pts0 = state.all_points()
    vel = system.vel_cols
    for r, tag in enumerate(system.tags):
        if tag.kind == "slack":
            continue
        # the claim under test is A's own row; FD of the scalar is the oracle
        analytic = dense[r, :vel].copy()
        if tag.kind == "obs":
            p_fix = closest.point[tag.index, _obstacle_slot(obstacles, tag.obstacle)]
            fun = lambda pts, i=tag.index, p=p_fix: 0.5 * (
                float((pts[i] - p) @ (pts[i] - p)) - params.rho**2
            )
        elif tag.kind == "con":
            hi, lo = tag.index, tag.index - 1
            fun = pair_fun(hi, lo, lambda s: 0.5 * (delta2 - float(s @ s)))
        elif tag.kind == "enh":
            hi, lo = tag.index + 1, tag.index - 1
            fun = pair_fun(hi, lo, lambda s: 0.5 * (delta2 - float(s @ s)))
        else:  # stiff rows carry -dV/dx
            hi, lo = tag.index + 1, tag.index - 1
            nat = params.natural_distances[tag.index - 1]
            fun = pair_fun(hi, lo, lambda s, nn=nat: -v_stiffness(s, nn))
        if tag.kind != "obs" and tag.index == 1:
            # leading pair: the needle part of the gradient was folded into b
            analytic[:d] = -analytic[hi * d : hi * d + d]

        involved = np.flatnonzero(np.abs(analytic) + _support_mask(tag, n, d))
        fd = np.zeros_like(analytic)
        for c in involved:
            pt, axis = divmod(c, d)
            bump = np.zeros((n + 1, d))
            bump[pt, axis] = step
            fd[c] = (fun(pts0 + bump) - fun(pts0 - bump)) / (2.0 * step)
        # floor at the thread scale so exactly-zero rows compare absolutely
        denom = max(float(np.max(np.abs(analytic))), params.delta)
        err = float(np.max(np.abs(fd - analytic))) / denom
        worst = max(worst, err)
    return worst


def _obstacle_slot(obstacles: list[Obstacle], obstacle_index: int) -> int:
    for slot, obs in enumerate(obstacles):
        if obs.index == obstacle_index:
            return slot
    raise KeyError(obstacle_index)


def _support_mask(tag: RowTag, n: int, d: int) -> np.ndarray:
    """Coordinates a row structurally involves even when its gradient is 0."""
    mask = np.zeros((n + 1) * d)
    if tag.kind == "obs":
        mask[tag.index * d : tag.index * d + d] = 1.0
    elif tag.kind == "con":
        for pt in (tag.index, tag.index - 1):
            mask[pt * d : pt * d + d] = 1.0
    else:
        for pt in (tag.index + 1, tag.index - 1):
            mask[pt * d : pt * d + d] = 1.0
    return mask
