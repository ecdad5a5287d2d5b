import numpy as np

from threadsim.constraints import (
    ThreadParams,
    ThreadState,
    assemble,
    default_natural_distances,
    hessian_diagonal,
    stack_desired,
)
from threadsim.geometry import SmoothingConfig, batch_closest_points, build_obstacle
from threadsim.qp import QPProblem

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_walk_state(rng, n, spacing=0.45, origin=(0.0, 0.0)):
    pts = [np.asarray(origin, float)]
    heading = rng.uniform(0, 2 * np.pi)
    for _ in range(n):
        heading += rng.uniform(-0.6, 0.6)
        step = spacing * rng.uniform(0.8, 1.1)
        pts.append(pts[-1] + step * np.array([np.cos(heading), np.sin(heading)]))
    pts = np.asarray(pts)
    return ThreadState(pts[0], pts[1:], np.zeros(2), np.zeros((n, 2)))


def random_thread_instance(rng, n=None, m=None, vel_scale=1.0):
    """A thread-shaped QP at a random state with random desired velocities."""
    n = int(rng.integers(3, 41)) if n is None else n
    m = int(rng.integers(0, 4)) if m is None else m
    state = random_walk_state(rng, n)
    smoothing = SmoothingConfig(0.2, 0.3, 3)
    obstacles = []
    rho = 0.25
    for k in range(m):
        # keep every thread point outside the clearance radius so the
        # instance stays in the simulator's operating envelope
        for _ in range(50):
            center = state.node_pos[int(rng.integers(0, n))]
            offset = rng.uniform(1.5, 6.0) * np.array(
                [np.cos(rng.uniform(0, 6.28)), np.sin(rng.uniform(0, 6.28))]
            )
            poly = SQUARE * rng.uniform(1.0, 3.0) + center + offset
            cand = build_obstacle(k, poly, smoothing)
            dists = batch_closest_points(state.all_points(), [cand]).distance
            if np.min(dists) > 1.2 * rho:
                obstacles.append(cand)
                break
    nat = np.clip(
        default_natural_distances(state.node_pos, state.needle_pos)
        * rng.uniform(0.9, 1.1, size=n - 1),
        1e-3,
        2.0,
    )
    params = ThreadParams(n=n, delta=1.0, rho=rho, natural_distances=nat)
    v0 = vel_scale * rng.standard_normal(2)
    system = assemble(state, params, obstacles, v0)
    desired = stack_desired(v0, vel_scale * rng.standard_normal((n, 2)), n)
    problem = QPProblem.from_desired(hessian_diagonal(params), desired, system.A, system.b)
    return problem, system, params, state
