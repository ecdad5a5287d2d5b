"""Drag a 25-node thread around open space and read the diagnostics.

The bundled drag scenario scripts the needle through three legs (right, up,
back down-left) at 66 Hz for ten seconds. This run shows the bookkeeping a
trajectory record carries: per-family barrier minima, slack norms, solver
iteration counts, and the exact byte-for-byte reproducibility that makes
records comparable across machines.

Run from the repository root:

    python3 demos/drag_run.py

Writes demos/out/drag_run.png with thread snapshots and the needle path.
"""

import pathlib
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from threadsim.scenario_io import (
    build_runtime,
    load_scenario,
    load_trajectory,
    records_equal,
    run_scripted,
    save_trajectory,
)

ROOT = pathlib.Path(__file__).resolve().parents[1]
OUT = pathlib.Path(__file__).resolve().parent / "out"


def main():
    OUT.mkdir(exist_ok=True)
    scene = build_runtime(load_scenario((ROOT / "scenarios/drag_n25.yaml").read_text()))
    rec = run_scripted(scene)

    mm = 1e3
    print(f"{rec.scenario_name}: {rec.n_frames - 1} ticks at {rec.rate_hz:g} Hz, n={rec.n}")
    print(f"needle travels {np.sum(np.linalg.norm(np.diff(rec.needle, axis=0), axis=1)) * mm:.1f} mm")
    print(f"worst adjacent-pair barrier   {np.min(rec.min_h_con):+.3e} m^2")
    print(f"worst second-neighbour barrier {np.min(rec.min_h_enh):+.3e} m^2")
    print("(both families are slack-relaxed; brief sub-zero dips are the slack working)")
    print(f"stiffness potential: start {rec.stiffness_sum[0]:.2e}, "
          f"peak {np.max(rec.stiffness_sum):.2e}, end {rec.stiffness_sum[-1]:.2e} m^4")
    print(f"solver iterations per tick: median {int(np.median(rec.qp_iterations[1:]))}, "
          f"max {int(np.max(rec.qp_iterations))}")

    # records serialize deterministically: two saves, identical bytes
    with tempfile.TemporaryDirectory() as tmp:
        p1, p2 = pathlib.Path(tmp) / "a.json", pathlib.Path(tmp) / "b.json"
        save_trajectory(rec, p1)
        save_trajectory(run_scripted(scene), p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert records_equal(rec, load_trajectory(p1))
    print("re-run and round-trip: bit-identical")

    fig, ax = plt.subplots(figsize=(8, 6))
    idx = np.linspace(0, rec.n_frames - 1, 9, dtype=int)
    cmap = plt.get_cmap("viridis")
    for j, k in enumerate(idx):
        pts = np.vstack([rec.needle[k : k + 1], rec.nodes[k]]) * mm
        ax.plot(pts[:, 0], pts[:, 1], "o-", ms=2, lw=1, color=cmap(j / (len(idx) - 1)))
    ax.plot(rec.needle[:, 0] * mm, rec.needle[:, 1] * mm, "-", lw=0.7, color="0.4")
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("y [mm]")
    ax.set_aspect("equal")
    ax.set_title("thread snapshots, early (dark) to late (light); grey = needle path")
    path = OUT / "drag_run.png"
    fig.savefig(path, dpi=110, bbox_inches="tight")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()