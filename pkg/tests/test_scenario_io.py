"""Scenario parsing, unit normalization, records and determinism."""

import copy

import numpy as np
import pytest
import yaml

from threadsim.scenario_io import (
    RECORD_FORMAT,
    ScenarioError,
    TrajectoryRecord,
    build_runtime,
    canonical_hash,
    clamp_speed,
    load_scenario,
    load_trajectory,
    mean_error,
    records_equal,
    run_scripted,
    save_trajectory,
)


def base_doc(n=4, with_obstacle=False):
    spacing = 4.5e-4
    doc = {
        "format": "threadsim-scenario",
        "version": 1,
        "name": "unit-fixture",
        "thread": {
            "nodes": n,
            "delta": 1.0e-3,
            "rho": 2.5e-4,
            "needle": [0.0, 0.0],
            "nodes_xy": [[-spacing * (k + 1), 0.0] for k in range(n)],
        },
        "workspace": {"min": [-0.02, -0.02], "max": [0.02, 0.02]},
        "run": {"ticks": 12, "mode": "scripted", "script": [[0.0, 2.0e-3, 0.0]]},
    }
    if with_obstacle:
        half = 1.0e-3
        cx, cy = 2.0e-3, -3.0e-3
        doc["obstacles"] = {
            "smoothing": {"fillet_radius": 2.0e-4},
            "polygons": [
                [
                    [cx - half, cy - half],
                    [cx + half, cy - half],
                    [cx + half, cy + half],
                    [cx - half, cy + half],
                ]
            ],
        }
    return doc


def load_doc(doc):
    return load_scenario(yaml.safe_dump(doc))


def test_load_scenario_basics():
    scn = load_doc(base_doc(with_obstacle=True))
    assert scn.name == "unit-fixture"
    assert scn.n == 4
    assert scn.delta_m == pytest.approx(1e-3)
    assert scn.rho_m == pytest.approx(2.5e-4)
    # natural distances default to the measured second-neighbour spacing
    assert scn.natural_m == pytest.approx(np.full(3, 9.0e-4))
    assert len(scn.polygons_m) == 1
    assert scn.mode == "scripted"
    assert scn.ticks == 12
    assert scn.script_m.shape == (1, 3)
    assert len(scn.scenario_hash) == 64


def test_hand_written_yaml_parses():
    text = """
format: threadsim-scenario
version: 1
name: literal
thread:
  nodes: 3
  delta: 1.0e-3
  rho: 2.5e-4
  needle: [0.0, 0.0]
  nodes_xy:
    - [-4.5e-4, 0.0]
    - [-9.0e-4, 0.0]
    - [-1.35e-3, 0.0]
workspace:
  min: [-0.01, -0.01]
  max: [0.01, 0.01]
"""
    scn = load_scenario(text)
    assert scn.n == 3
    assert scn.rho_m == pytest.approx(2.5e-4)


def test_hash_stable_under_key_order():
    doc = base_doc()
    reordered = dict(reversed(list(doc.items())))
    assert canonical_hash(doc) == canonical_hash(reordered)
    assert load_doc(doc).scenario_hash == load_doc(reordered).scenario_hash
    changed = copy.deepcopy(doc)
    changed["thread"]["rho"] = 3.0e-4
    assert canonical_hash(changed) != canonical_hash(doc)


@pytest.mark.parametrize(
    "mutate,match",
    [
        (lambda d: d.pop("workspace"), "workspace"),
        (lambda d: d.update(format="nope"), "format"),
        (lambda d: d.update(version=2), "version"),
        (lambda d: d.update(bogus=1), "unknown"),
        (lambda d: d["thread"].update(nodes=2), "nodes"),
        (lambda d: d["thread"].update(delta=-1.0), "delta"),
        (lambda d: d["thread"]["nodes_xy"].pop(), "nodes_xy"),
        (lambda d: d["thread"].update(natural_distances=[1.0, 1.0]), "natural"),
        (lambda d: d["thread"].update(natural_distances=5.0e-3), "natural"),
        (lambda d: d["run"].update(mode="weird"), "mode"),
        (lambda d: d["run"].update(script=[[1.0, 0, 0], [0.5, 0, 0]]), "script"),
        (lambda d: d["workspace"].update(max=[-0.03, 0.02]), "workspace"),
    ],
)
def test_schema_rejections(mutate, match):
    doc = base_doc()
    mutate(doc)
    with pytest.raises(ScenarioError, match=match):
        load_doc(doc)


def test_geometry_outside_workspace_rejected():
    doc = base_doc()
    doc["thread"]["needle"] = [0.05, 0.0]
    doc["thread"]["nodes_xy"] = [[0.05 - 4.5e-4 * (k + 1), 0.0] for k in range(4)]
    with pytest.raises(ScenarioError, match="workspace"):
        load_doc(doc)


def test_clockwise_polygon_accepted():
    doc = base_doc(with_obstacle=True)
    doc["obstacles"]["polygons"][0] = doc["obstacles"]["polygons"][0][::-1]
    scn = load_doc(doc)
    assert len(scn.polygons_m) == 1


def test_self_intersecting_polygon_rejected():
    doc = base_doc(with_obstacle=True)
    p = doc["obstacles"]["polygons"][0]
    p[2], p[3] = p[3], p[2]  # bowtie
    with pytest.raises(ScenarioError, match="polygons"):
        load_doc(doc)


def test_initial_connectivity_violation_named():
    doc = base_doc()
    doc["thread"]["nodes_xy"][1] = [-1.6e-3, 0.0]  # gap 1.15e-3 > delta
    with pytest.raises(ScenarioError, match="h_con"):
        load_doc(doc)


def test_initial_clearance_violation_named():
    doc = base_doc(with_obstacle=True)
    # slide the square up so its face sits inside the clearance radius of
    # the chain (0.2 mm < rho = 0.25 mm) while the chain itself stays valid
    half, cx, cy = 1.0e-3, -9.0e-4, -1.2e-3
    doc["obstacles"]["polygons"] = [
        [
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ]
    ]
    with pytest.raises(ScenarioError, match="h_obs"):
        load_doc(doc)


def test_build_runtime_normalizes_units():
    scn = load_doc(base_doc(with_obstacle=True))
    scene = build_runtime(scn)
    assert scene.scale == pytest.approx(1e-3)
    assert scene.params.delta == 1.0
    assert scene.params.rho == pytest.approx(0.25)
    assert scene.params.natural_distances == pytest.approx(np.full(3, 0.9))
    assert scene.state0.node_pos[0, 0] == pytest.approx(-0.45)
    assert scene.config.friction_clearance == pytest.approx(0.5)
    assert scene.script[0, 1] == pytest.approx(2.0)  # 2 mm/s over 1 mm scale
    assert scene.max_input_speed == pytest.approx(20.0)
    assert len(scene.obstacles) == 1
    # smoothing radius rescaled before preprocessing
    assert scene.obstacles[0].boundary.shape[0] > 4


def test_clamp_speed():
    cmds = np.array([[3.0, 4.0], [0.1, 0.0], [0.0, 0.0]])
    out = clamp_speed(cmds, 1.0)
    assert np.linalg.norm(out[0]) == pytest.approx(1.0)
    assert out[0] == pytest.approx([0.6, 0.8])
    assert np.array_equal(out[1:], cmds[1:])
    assert np.array_equal(cmds[0], [3.0, 4.0])  # input untouched


def test_run_scripted_record_shape_and_units():
    scn = load_doc(base_doc())
    scene = build_runtime(scn)
    rec = run_scripted(scene)
    assert rec.n_frames == 13
    assert rec.nodes.shape == (13, 4, 2)
    assert rec.min_h_obs.shape == (13, 0)
    assert rec.times[0] == 0.0
    assert rec.times[1] == pytest.approx(1 / 66)
    # frame 0 is the file's initial state, in meters
    assert rec.needle[0] == pytest.approx([0.0, 0.0])
    assert rec.nodes[0, 0] == pytest.approx([-4.5e-4, 0.0])
    # h diagnostics return in m^2: h_con = (delta^2 - gap^2)/2 at the start
    expected_h = 0.5 * ((1e-3) ** 2 - (4.5e-4) ** 2)
    assert rec.min_h_con[0] == pytest.approx(expected_h, rel=1e-12)
    assert rec.colors[0] == ["green"] * 4
    # the needle really travelled: 12 ticks at 2 mm/s
    assert rec.needle[-1, 0] == pytest.approx(12 / 66 * 2e-3, rel=1e-9)


def test_record_round_trip_bitwise(tmp_path):
    scene = build_runtime(load_doc(base_doc(with_obstacle=True)))
    rec = run_scripted(scene)
    path = tmp_path / "run.json"
    save_trajectory(rec, path)
    back = load_trajectory(path)
    assert records_equal(rec, back)
    # serialization is stable: saving the loaded record reproduces the bytes
    path2 = tmp_path / "again.json"
    save_trajectory(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_two_runs_identical_files(tmp_path):
    doc = base_doc(with_obstacle=True)
    paths = []
    for tag in ("a", "b"):
        scene = build_runtime(load_doc(doc))
        rec = run_scripted(scene)
        p = tmp_path / f"{tag}.json"
        save_trajectory(rec, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_record_format_guard(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ScenarioError, match=RECORD_FORMAT):
        load_trajectory(p)


def synthetic_record(times, drift=0.0, rate=66.0):
    t = len(times)
    n = 3
    needle = np.stack([np.asarray(times) * 1e-3, np.zeros(t)], axis=1)
    nodes = np.zeros((t, n, 2))
    for k in range(n):
        nodes[:, k, 0] = needle[:, 0] - 4.5e-4 * (k + 1)
    nodes[:, :, 1] += drift
    needle[:, 1] += drift
    zeros = np.zeros(t)
    return TrajectoryRecord(
        scenario_name="synthetic",
        scenario_hash="0" * 64,
        rate_hz=rate,
        n=n,
        m_obstacles=0,
        length_scale=1e-3,
        times=np.asarray(times, float),
        needle=needle,
        nodes=nodes,
        colors=[["green"] * n] * t,
        intensity=zeros.copy(),
        min_h_con=zeros.copy(),
        min_h_enh=zeros.copy(),
        stiffness_sum=zeros.copy(),
        min_h_obs=np.zeros((t, 0)),
        slack_con=zeros.copy(),
        slack_enh=zeros.copy(),
        slack_stiff=zeros.copy(),
        qp_iterations=np.zeros(t, dtype=int),
    )


def test_mean_error_zero_for_identical():
    rec = synthetic_record(np.linspace(0, 1, 30))
    assert mean_error(rec, rec) == 0.0


def test_mean_error_known_offset():
    times = np.linspace(0, 1, 30)
    ref = synthetic_record(times)
    sim = synthetic_record(times, drift=1.35e-4)
    # thread length is 3 spacings of 4.5e-4; uniform offset -> exact percent
    expected = 1.35e-4 / (3 * 4.5e-4) * 100.0
    assert mean_error(sim, ref) == pytest.approx(expected, rel=1e-12)


def test_mean_error_resamples_other_rate():
    ref = synthetic_record(np.linspace(0, 1, 61), rate=60.0)
    sim = synthetic_record(np.linspace(0, 1, 31), drift=1.35e-4, rate=30.0)
    # the reference motion is linear in time, so interpolation is exact
    expected = 1.35e-4 / (3 * 4.5e-4) * 100.0
    assert mean_error(sim, ref) == pytest.approx(expected, rel=1e-9)
