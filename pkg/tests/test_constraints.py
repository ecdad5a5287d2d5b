import numpy as np
import pytest

from threadsim.constraints import (
    NODE_DIM,
    ConstraintSystem,
    ThreadParams,
    ThreadState,
    assemble,
    check_gradients,
    col_count,
    default_natural_distances,
    h_connectivity,
    h_obstacle,
    hessian_diagonal,
    nnz_count,
    row_count,
    stack_desired,
    v_stiffness,
)
from threadsim.geometry import SmoothingConfig, build_obstacle

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def make_params(n, delta=1.0, rho=0.25, natural=None, **kw):
    if natural is None:
        natural = np.full(n - 1, 0.9 * delta)
    return ThreadParams(n=n, delta=delta, rho=rho, natural_distances=natural, **kw)


def chain_state(n, spacing, start=(0.0, 0.0), direction=(1.0, 0.0)):
    """Needle at start, nodes trailing along -direction at fixed spacing."""
    d = np.asarray(direction, float)
    d = d / np.hypot(*d)
    needle = np.asarray(start, float)
    nodes = needle[None, :] - spacing * np.arange(1, n + 1)[:, None] * d[None, :]
    return ThreadState(needle, nodes, np.zeros(2), np.zeros((n, 2)))


def random_state(rng, n, spacing=0.45, origin=(0.0, 0.0)):
    """Random-walk thread with bounded turn per segment."""
    pts = [np.asarray(origin, float)]
    heading = rng.uniform(0, 2 * np.pi)
    for _ in range(n):
        heading += rng.uniform(-0.6, 0.6)
        step = spacing * rng.uniform(0.8, 1.1)
        pts.append(pts[-1] + step * np.array([np.cos(heading), np.sin(heading)]))
    pts = np.asarray(pts)
    return ThreadState(pts[0], pts[1:], np.zeros(2), np.zeros((n, 2)))


class TestScalarFunctions:
    def test_h_connectivity_values(self):
        delta = 1.0e-3
        assert h_connectivity([2.0e-3, 0.0], delta) == pytest.approx(-1.5e-6)
        assert h_connectivity([0.5e-3, 0.0], delta) == pytest.approx(3.75e-7)
        assert h_connectivity([0.0, 1.0e-3], delta) == pytest.approx(0.0, abs=1e-20)

    def test_h_obstacle_values(self):
        rho = 5.0e-4
        assert h_obstacle(1.0e-3, rho) == pytest.approx(3.75e-7)
        assert h_obstacle(rho, rho) == pytest.approx(0.0, abs=1e-20)
        assert h_obstacle(0.0, rho) == pytest.approx(-1.25e-7)

    def test_v_stiffness_values(self):
        nat = 2.0e-3
        assert v_stiffness([1.0e-3, 0.0], nat) == pytest.approx(4.5e-12)
        assert v_stiffness([0.0, 2.0e-3], nat) == pytest.approx(0.0, abs=1e-30)
        assert v_stiffness([3.0e-3, 0.0], nat) == pytest.approx(0.5 * (5.0e-6) ** 2)

    def test_taut_chain_enhanced_barrier_is_negative(self):
        # adjacent pairs exactly at delta leave second neighbours at 2*delta
        delta = 1.0
        state = chain_state(5, spacing=delta)
        params = make_params(5, delta=delta, natural=np.full(4, 2.0 * delta))
        system = assemble(state, params, [], np.zeros(2))
        h_enh = system.h_values[system.family_rows("enh")]
        assert np.allclose(h_enh, -1.5 * delta**2)

    def test_default_natural_distances(self):
        state = chain_state(6, spacing=0.4)
        nat = default_natural_distances(state.node_pos, state.needle_pos)
        assert nat.shape == (5,)
        assert np.allclose(nat, 0.8)


class TestAssembly:
    def test_dimensions_small(self):
        n = 5
        params = make_params(n)
        state = random_state(np.random.default_rng(0), n)
        obs = build_obstacle(0, SQUARE + np.array([5.0, 5.0]), SmoothingConfig(0.1, 0.35, 3))
        system = assemble(state, params, [obs], np.zeros(2))
        assert system.A.shape == (32, 25)
        assert system.A.nnz == 84
        assert nnz_count(5, 1) == 84
        assert row_count(5, 1) == 32
        assert col_count(5) == 25

    def test_counts_closed_form(self):
        rng = np.random.default_rng(1)
        smoothing = SmoothingConfig(0.05, 0.35, 3)
        for _ in range(8):
            n = int(rng.integers(3, 30))
            m = int(rng.integers(0, 4))
            obstacles = [
                build_obstacle(k, SQUARE + np.array([40.0 + 3 * k, 40.0]), smoothing)
                for k in range(m)
            ]
            params = make_params(n)
            state = random_state(rng, n)
            system = assemble(state, params, obstacles, np.zeros(2))
            assert system.A.shape == (row_count(n, m), col_count(n))
            assert system.A.nnz == nnz_count(n, m)

    def test_explicit_zeros_kept(self):
        # axis-aligned chain makes half the gradient entries exactly zero
        n = 4
        state = chain_state(n, spacing=0.5)
        params = make_params(n, natural=np.full(n - 1, 1.0))
        system = assemble(state, params, [], np.zeros(2))
        assert system.A.nnz == nnz_count(n, 0)
        assert np.count_nonzero(system.A.data == 0.0) > 0

    def test_rest_state_is_feasible_with_zero_velocity(self):
        rng = np.random.default_rng(2)
        n = 8
        state = random_state(rng, n, spacing=0.45)
        nat = default_natural_distances(state.node_pos, state.needle_pos)
        params = make_params(n, natural=np.clip(nat, 1e-6, 2.0))
        obs = build_obstacle(0, SQUARE + np.array([30.0, 0.0]), SmoothingConfig(0.1, 0.35, 3))
        system = assemble(state, params, [obs], np.zeros(2))
        assert np.all(system.b >= -1e-12)

    def test_obstacle_rows_carry_no_slack(self):
        n = 6
        params = make_params(n)
        state = random_state(np.random.default_rng(3), n)
        obs = build_obstacle(0, SQUARE + np.array([20.0, 0.0]), SmoothingConfig(0.1, 0.35, 3))
        system = assemble(state, params, [obs], np.zeros(2))
        dense = system.A.toarray()
        slack_block = dense[system.family_rows("obs"), system.vel_cols :]
        assert np.all(slack_block == 0.0)

    def test_constraint_rows_have_one_slack_entry(self):
        n = 6
        params = make_params(n)
        state = random_state(np.random.default_rng(4), n)
        system = assemble(state, params, [], np.zeros(2))
        dense = system.A.toarray()
        for kind in ("con", "enh", "stiff"):
            block = dense[system.family_rows(kind), system.vel_cols :]
            assert np.all(np.sum(block != 0.0, axis=1) == 1)
            assert np.all(block[block != 0.0] == 1.0)

    def test_needle_command_folds_into_lead_rows_only(self):
        n = 7
        params = make_params(n)
        state = random_state(np.random.default_rng(5), n)
        v0 = np.array([0.3, -0.2])
        sys0 = assemble(state, params, [], np.zeros(2))
        sys1 = assemble(state, params, [], v0)
        db = sys1.b - sys0.b
        adj0 = state.node_pos[0] - state.needle_pos
        sec0 = state.node_pos[1] - state.needle_pos
        q0 = sec0 @ sec0 - params.natural_distances[0] ** 2
        con = sys0.family_rows("con").start
        enh = sys0.family_rows("enh").start
        stf = sys0.family_rows("stiff").start
        expected = np.zeros_like(db)
        expected[con] = adj0 @ v0
        expected[enh] = sec0 @ v0
        expected[stf] = 2.0 * q0 * sec0 @ v0
        assert np.allclose(db, expected, atol=1e-15)
        assert np.array_equal(sys0.A.toarray(), sys1.A.toarray())

    def test_pair_h_values_translation_invariant(self):
        rng = np.random.default_rng(6)
        n = 9
        state = random_state(rng, n)
        shifted = ThreadState(
            state.needle_pos + 13.7,
            state.node_pos + 13.7,
            np.zeros(2),
            np.zeros((n, 2)),
        )
        params = make_params(n)
        sa = assemble(state, params, [], np.zeros(2))
        sb = assemble(shifted, params, [], np.zeros(2))
        for kind in ("con", "enh", "stiff"):
            assert np.allclose(
                sa.h_values[sa.family_rows(kind)], sb.h_values[sb.family_rows(kind)]
            )

    def test_state_params_mismatch(self):
        params = make_params(5)
        state = chain_state(4, 0.4)
        with pytest.raises(ValueError):
            assemble(state, params, [], np.zeros(2))

    def test_hessian_and_desired_stack_layout(self):
        n = 5
        params = make_params(n, w_con=1e5, w_stiff=1.0, w_enh=1e-3)
        hd = hessian_diagonal(params)
        assert hd.shape == (col_count(n),)
        assert np.all(hd[: (n + 1) * NODE_DIM] == 1.0)
        assert np.all(hd[(n + 1) * NODE_DIM : (n + 1) * NODE_DIM + n] == 1e5)
        assert np.all(hd[-(n - 1) :] == 1.0)
        des = stack_desired([1.0, 2.0], np.arange(2 * n).reshape(n, 2), n)
        assert des[0] == 1.0 and des[1] == 2.0
        assert des[2] == 0.0 and des[3] == 1.0
        assert np.all(des[(n + 1) * NODE_DIM :] == 0.0)


class TestParamValidation:
    def test_minimum_nodes(self):
        with pytest.raises(ValueError):
            make_params(2)

    def test_natural_distance_bounds(self):
        with pytest.raises(ValueError):
            make_params(4, natural=np.array([0.5, 2.5, 0.5]))
        with pytest.raises(ValueError):
            make_params(4, natural=np.array([0.5, 0.0, 0.5]))

    def test_weight_hierarchy(self):
        with pytest.raises(ValueError):
            make_params(4, w_con=5.0, w_stiff=1.0)

    def test_scale_transform_round_trip(self):
        p = make_params(6, delta=1.0)
        q = p.with_scale(5e-4).with_scale(1.0 / 5e-4)
        assert q.delta == pytest.approx(p.delta)
        assert q.w_con == pytest.approx(p.w_con)
        assert q.w_stiff == pytest.approx(p.w_stiff)

    def test_state_rejects_nan(self):
        with pytest.raises(ValueError):
            ThreadState(
                np.array([np.nan, 0.0]), np.zeros((3, 2)), np.zeros(2), np.zeros((3, 2))
            )


class TestGradients:
    def test_random_states(self):
        rng = np.random.default_rng(7)
        smoothing = SmoothingConfig(0.1, 0.35, 3)
        for _ in range(5):
            n = int(rng.integers(4, 12))
            m = int(rng.integers(0, 3))
            obstacles = [
                build_obstacle(k, SQUARE * 2.0 + np.array([4.0 + 3.5 * k, -1.0]), smoothing)
                for k in range(m)
            ]
            state = random_state(rng, n)
            params = make_params(n)
            err = check_gradients(state, params, obstacles, step=1e-7)
            assert err < 1e-5

    def test_equilibrium_stiffness_rows_vanish(self):
        n = 6
        state = chain_state(n, spacing=0.45)
        nat = default_natural_distances(state.node_pos, state.needle_pos)
        params = make_params(n, natural=nat)
        system = assemble(state, params, [], np.zeros(2))
        dense = system.A.toarray()
        stiff = dense[system.family_rows("stiff"), : system.vel_cols]
        assert np.all(stiff == 0.0)
        assert check_gradients(state, params, [], step=1e-7) < 1e-5

    def test_obstacle_gradient_is_offset_from_closest_point(self):
        from threadsim.geometry import closest_point_on_obstacle

        obs = build_obstacle(0, SQUARE, SmoothingConfig(0.05, 0.35, 3))
        n = 3
        state = chain_state(n, spacing=0.4, start=(0.5, 1.25), direction=(0.0, -1.0))
        params = make_params(n, rho=0.25)
        system = assemble(state, params, [obs], np.zeros(2))
        dense = system.A.toarray()
        res = closest_point_on_obstacle(state.needle_pos, obs)
        assert np.allclose(dense[0, :2], state.needle_pos - res.point)
