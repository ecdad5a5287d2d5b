"""Regenerate the bundled scenario files in scenarios/.

Each fixture targets one behaviour:

* rest.yaml          - small idle thread, the default for interactive serving
* drag_n25.yaml      - 25-node thread dragged in open space, the baseline
                       timing workload
* block_approach.yaml- needle driven straight into a square block, pressed,
                       slid along the face and pulled away: a clearance
                       stress test
* hernia_ring.yaml   - 40-node thread threaded through a narrow gap in a
                       three-segment ring at 33 Hz: friction colors, gap
                       contact on both sides, pull-back
* bench_n81.yaml     - long 81-node thread for scaling measurements

Run from the repository root:

    python3 demos/make_scenarios.py
"""

import math
import pathlib

import numpy as np
import yaml

from threadsim.scenario_io import build_runtime, load_scenario

OUT_DIR = pathlib.Path(__file__).resolve().parents[1] / "scenarios"


def straight_chain(n, spacing, needle=(0.0, 0.0)):
    x0, y0 = needle
    nodes = [[round(x0 - spacing * (k + 1), 12), y0] for k in range(n)]
    return list(needle), nodes


def rest_doc():
    needle, nodes = straight_chain(8, 4.5e-4)
    return {
        "format": "threadsim-scenario",
        "version": 1,
        "name": "rest",
        "thread": {
            "nodes": 8,
            "delta": 1.0e-3,
            "rho": 2.5e-4,
            "needle": needle,
            "nodes_xy": nodes,
        },
        "sim": {"rate_hz": 66.0},
        "run": {"mode": "interactive", "ticks": 660, "max_input_speed": 2.0e-2},
        "workspace": {"min": [-0.02, -0.02], "max": [0.02, 0.02]},
    }


def drag_n25_doc():
    needle, nodes = straight_chain(25, 4.5e-4)
    return {
        "format": "threadsim-scenario",
        "version": 1,
        "name": "drag-n25",
        "thread": {
            "nodes": 25,
            "delta": 1.0e-3,
            "rho": 2.5e-4,
            "needle": needle,
            "nodes_xy": nodes,
        },
        "sim": {"rate_hz": 66.0},
        "run": {
            "mode": "scripted",
            "ticks": 660,
            "max_input_speed": 2.0e-2,
            "script": [
                [0.0, 6.0e-3, 0.0],
                [4.0, 0.0, 5.0e-3],
                [8.0, -6.0e-3, -3.0e-3],
            ],
        },
        "workspace": {"min": [-0.04, -0.04], "max": [0.04, 0.04]},
    }


def block_approach_doc():
    needle, nodes = straight_chain(25, 4.5e-4, needle=(-6.0e-3, 0.0))
    half = 2.0e-3
    square = [[-half, -half], [half, -half], [half, half], [-half, half]]
    return {
        "format": "threadsim-scenario",
        "version": 1,
        "name": "block-approach",
        "thread": {
            "nodes": 25,
            "delta": 1.0e-3,
            "rho": 2.5e-4,
            "needle": needle,
            "nodes_xy": nodes,
        },
        "obstacles": {
            "smoothing": {"fillet_radius": 3.0e-4, "angle_threshold": 0.35, "arc_samples": 4},
            "polygons": [square],
        },
        "sim": {"rate_hz": 66.0},
        "run": {
            "mode": "scripted",
            "ticks": 2000,
            "max_input_speed": 2.0e-2,
            "script": [
                [0.0, 8.0e-3, 0.0],   # drive straight at the block and press
                [15.0, 0.0, 4.0e-3],  # slide up along the face, round the corner
                [21.0, -8.0e-3, -2.0e-3],  # pull away dragging the chain across
            ],
        },
        "workspace": {"min": [-0.03, -0.03], "max": [0.03, 0.03]},
    }


def ring_segments(r_outer, r_inner, gap_centers_deg, gap_width_deg, step_deg=8.0):
    """Annulus split into segments by angular gaps, sampled along both arcs."""
    polys = []
    m = len(gap_centers_deg)
    for k in range(m):
        a0 = gap_centers_deg[k] + gap_width_deg / 2.0
        a1 = gap_centers_deg[(k + 1) % m] - gap_width_deg / 2.0
        while a1 <= a0:
            a1 += 360.0
        samples = max(2, int(math.ceil((a1 - a0) / step_deg)) + 1)
        ang = np.radians(np.linspace(a0, a1, samples))
        outer = np.stack([r_outer * np.cos(ang), r_outer * np.sin(ang)], axis=1)
        inner = np.stack([r_inner * np.cos(ang), r_inner * np.sin(ang)], axis=1)[::-1]
        poly = np.vstack([outer, inner])
        polys.append([[round(float(x), 12), round(float(y), 12)] for x, y in poly])
    return polys


def hernia_ring_doc():
    needle, nodes = straight_chain(40, 2.25e-4, needle=(0.0, -7.5e-3))
    polys = ring_segments(6.0e-3, 4.5e-3, gap_centers_deg=[270.0, 30.0, 150.0], gap_width_deg=14.0)
    return {
        "format": "threadsim-scenario",
        "version": 1,
        "name": "hernia-ring",
        "thread": {
            "nodes": 40,
            "delta": 5.0e-4,
            "rho": 2.0e-4,
            "needle": needle,
            "nodes_xy": nodes,
        },
        "obstacles": {
            "smoothing": {"fillet_radius": 1.5e-4, "angle_threshold": 0.35, "arc_samples": 4},
            "polygons": polys,
        },
        "sim": {"rate_hz": 33.0, "friction_clearance": 5.0e-4},
        "run": {
            "mode": "scripted",
            "ticks": 400,
            "max_input_speed": 1.0e-2,
            "script": [
                [0.0, 0.0, 2.0e-3],    # up through the bottom gap
                [5.0, 8.0e-4, 8.0e-4], # lean into the upper segment
                [8.0, 0.0, -1.8e-3],   # pull back out
            ],
        },
        "workspace": {"min": [-0.0175, -0.0175], "max": [0.0175, 0.0175]},
    }


def bench_n81_doc():
    needle, nodes = straight_chain(81, 9.0e-4)
    return {
        "format": "threadsim-scenario",
        "version": 1,
        "name": "bench-n81",
        "thread": {
            "nodes": 81,
            "delta": 2.0e-3,
            "rho": 5.0e-4,
            "needle": needle,
            "nodes_xy": nodes,
        },
        "sim": {"rate_hz": 66.0},
        "run": {
            "mode": "scripted",
            "ticks": 660,
            "max_input_speed": 4.0e-2,
            "script": [
                [0.0, 5.0e-3, 0.0],
                [3.0, 0.0, 5.0e-3],
                [6.0, -5.0e-3, 0.0],
                [9.0, 0.0, -5.0e-3],
            ],
        },
        "workspace": {"min": [-0.09, -0.09], "max": [0.09, 0.09]},
    }


def main():
    OUT_DIR.mkdir(exist_ok=True)
    docs = [
        ("rest.yaml", rest_doc()),
        ("drag_n25.yaml", drag_n25_doc()),
        ("block_approach.yaml", block_approach_doc()),
        ("hernia_ring.yaml", hernia_ring_doc()),
        ("bench_n81.yaml", bench_n81_doc()),
    ]
    for fname, doc in docs:
        text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)
        scenario = load_scenario(text)  # reject anything inconsistent up front
        scene = build_runtime(scenario)
        path = OUT_DIR / fname
        path.write_text(text, encoding="utf-8")
        print(
            f"{fname}: n={scenario.n} obstacles={len(scene.obstacles)} "
            f"rate={scenario.rate_hz:g} Hz ticks={scenario.ticks} "
            f"boundary points={sum(o.boundary.shape[0] for o in scene.obstacles)}"
        )


if __name__ == "__main__":
    main()
