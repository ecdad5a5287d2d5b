"""Walk a polygon through the obstacle preprocessing pipeline.

A raw obstacle outline usually has sharp corners. Sharp corners make the
closest-point field discontinuous: a point sweeping past a corner sees its
nearest boundary point jump, and anything steering off that field jitters.
The pipeline therefore: (1) fillets every corner sharper than a threshold
with a small arc, (2) triangulates the smoothed outline so closest-point
queries can scan a flat edge table, (3) serves batched distance queries.

Run from the repository root:

    python3 demos/obstacle_geometry.py

Writes demos/out/obstacle_geometry.png and prints a few spot checks.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from threadsim.geometry import (
    SmoothingConfig,
    batch_closest_points,
    build_obstacle,
    polygon_area,
)

OUT = pathlib.Path(__file__).resolve().parent / "out"

# an L-shaped block: one reflex corner, several sharp convex ones
L_SHAPE = np.array(
    [
        [0.0, 0.0],
        [3.0, 0.0],
        [3.0, 1.2],
        [1.4, 1.2],
        [1.4, 2.6],
        [0.0, 2.6],
    ]
)


def main():
    OUT.mkdir(exist_ok=True)
    smoothing = SmoothingConfig(fillet_radius=0.25, angle_threshold=0.35, arc_samples=6)
    obstacle = build_obstacle(0, L_SHAPE, smoothing)

    print(f"raw outline:      {len(L_SHAPE)} vertices, area {polygon_area(L_SHAPE):.3f}")
    print(
        f"smoothed outline: {len(obstacle.boundary)} vertices, "
        f"area {polygon_area(obstacle.boundary):.3f} (fillets shave the corners)"
    )
    print(f"triangulation:    {obstacle.n_triangles} triangles == V-2 exactly")

    # probe the closest-point field on a ring around the block
    angles = np.linspace(0, 2 * np.pi, 28, endpoint=False)
    center = np.array([1.5, 1.3])
    probes = center + 2.4 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    closest = batch_closest_points(probes, [obstacle])
    dist = closest.distance[:, 0]
    feet = closest.point[:, 0]

    print(f"ring probes:      distance range {dist.min():.3f} .. {dist.max():.3f}")
    # the foot of each query must itself sit on the boundary (within fp noise)
    foot_check = batch_closest_points(feet, [obstacle]).distance[:, 0]
    print(f"feet re-queried:  max residual distance {foot_check.max():.2e}")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 5))
    ax1.plot(*np.vstack([L_SHAPE, L_SHAPE[:1]]).T, "r--", lw=1, label="raw")
    ax1.plot(*np.vstack([obstacle.boundary, obstacle.boundary[:1]]).T, "k-", lw=1.5, label="smoothed")
    for tri in obstacle.triangles:
        ax1.fill(*np.vstack([tri, tri[:1]]).T, alpha=0.12, color="tab:blue")
    ax1.legend()
    ax1.set_title("fillets + triangulation")

    ax2.plot(*np.vstack([obstacle.boundary, obstacle.boundary[:1]]).T, "k-", lw=1.5)
    ax2.scatter(*probes.T, s=14, color="tab:orange", zorder=3)
    for p, f in zip(probes, feet):
        ax2.plot([p[0], f[0]], [p[1], f[1]], color="tab:orange", lw=0.6, alpha=0.7)
    ax2.set_title("closest-point queries")
    for ax in (ax1, ax2):
        ax.set_aspect("equal")

    path = OUT / "obstacle_geometry.png"
    fig.savefig(path, dpi=110, bbox_inches="tight")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()