"""Planar obstacle geometry: polygon validation, corner smoothing,
triangulation and closest-point queries.

Obstacles are simple CCW polygons.  Sharp corners are replaced by circular
fillets so that barrier gradients stay continuous while the thread slides
along a wall.  The smoothed polygon is triangulated once at build time and
closest-point queries run against the triangle edge set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely

__all__ = [
    "GeometryError",
    "SmoothingConfig",
    "Obstacle",
    "ClosestPointResult",
    "BatchClosestPoints",
    "polygon_area",
    "is_ccw",
    "is_simple_polygon",
    "point_in_polygon",
    "validate_polygon",
    "smooth_polygon",
    "triangulate",
    "build_obstacle",
    "closest_point_on_segment",
    "closest_point_on_obstacle",
    "batch_closest_points",
]


class GeometryError(ValueError):
    """Raised for degenerate or non-simple input geometry."""


@dataclass(frozen=True)
class SmoothingConfig:
    """Corner-fillet parameters, in the same length unit as the polygons."""

    fillet_radius: float = 5.0e-4
    angle_threshold: float = 0.35
    arc_samples: int = 4

    def __post_init__(self):
        if not (self.fillet_radius > 0.0):
            raise GeometryError("fillet_radius must be positive")
        if not (0.0 <= self.angle_threshold < np.pi):
            raise GeometryError("angle_threshold must lie in [0, pi)")
        if self.arc_samples < 2:
            raise GeometryError("arc_samples must be at least 2")


def _as_vertex_array(polygon) -> np.ndarray:
    arr = np.asarray(polygon, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError("polygon must be an (V, 2) array of vertices")
    if arr.shape[0] >= 2 and np.allclose(arr[0], arr[-1]):
        arr = arr[:-1]  # accept an explicitly closed ring
    if arr.shape[0] < 3:
        raise GeometryError("polygon needs at least 3 distinct vertices")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("polygon vertices must be finite")
    return arr


def polygon_area(polygon) -> float:
    """Signed area; positive for counter-clockwise vertex order."""
    p = np.asarray(polygon, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_ccw(polygon) -> bool:
    return polygon_area(polygon) > 0.0


def is_simple_polygon(polygon) -> bool:
    """True when no two non-adjacent edges intersect or touch."""
    p = _as_vertex_array(polygon)
    v = p.shape[0]
    a = p
    b = np.roll(p, -1, axis=0)

    def cross(o, d, q):
        # orientation of q relative to the segment o -> o+d, broadcast
        return d[..., 0] * (q[..., 1] - o[..., 1]) - d[..., 1] * (q[..., 0] - o[..., 0])

    d_ij = b - a
    # pairwise orientation tests on an (V, V) grid
    o1 = cross(a[:, None], d_ij[:, None], a[None, :])
    o2 = cross(a[:, None], d_ij[:, None], b[None, :])
    o3 = cross(a[None, :], d_ij[None, :], a[:, None])
    o4 = cross(a[None, :], d_ij[None, :], b[:, None])

    proper = (o1 * o2 < 0.0) & (o3 * o4 < 0.0)

    # collinear or endpoint contact: a zero orientation with bounding-box overlap
    def on_box(o, e, q):
        lo = np.minimum(o, e)
        hi = np.maximum(o, e)
        return np.all((q >= lo) & (q <= hi), axis=-1)

    touch = (
        ((o1 == 0.0) & on_box(a[:, None], b[:, None], a[None, :]))
        | ((o2 == 0.0) & on_box(a[:, None], b[:, None], b[None, :]))
        | ((o3 == 0.0) & on_box(a[None, :], b[None, :], a[:, None]))
        | ((o4 == 0.0) & on_box(a[None, :], b[None, :], b[:, None]))
    )

    bad = proper | touch
    idx = np.arange(v)
    adjacent = (
        (idx[:, None] == idx[None, :])
        | ((idx[:, None] + 1) % v == idx[None, :])
        | ((idx[None, :] + 1) % v == idx[:, None])
    )
    bad &= ~adjacent
    return not bool(np.any(bad))


def point_in_polygon(point, polygon) -> bool:
    """Ray-cast containment test; boundary points count as inside."""
    p = np.asarray(point, dtype=float)
    poly = _as_vertex_array(polygon)
    a = poly
    b = np.roll(poly, -1, axis=0)
    inside = False
    for (ax, ay), (bx, by) in zip(a, b):
        if (ay > p[1]) != (by > p[1]):
            t = (p[1] - ay) / (by - ay)
            xc = ax + t * (bx - ax)
            if p[0] < xc:
                inside = not inside
            elif p[0] == xc:
                return True
        # horizontal or touching edges: explicit on-segment check
        d = np.array([bx - ax, by - ay])
        len2 = d @ d
        if len2 > 0.0:
            t = np.clip(((p - [ax, ay]) @ d) / len2, 0.0, 1.0)
            cp = np.array([ax, ay]) + t * d
            if np.hypot(*(p - cp)) == 0.0:
                return True
    return inside


def validate_polygon(polygon) -> np.ndarray:
    """Return the vertex array, raising GeometryError unless the polygon is
    simple, counter-clockwise and free of zero-length edges."""
    arr = _as_vertex_array(polygon)
    edges = np.roll(arr, -1, axis=0) - arr
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    if np.any(lengths == 0.0):
        raise GeometryError("polygon has a zero-length edge (duplicate vertex)")
    if not is_ccw(arr):
        raise GeometryError("polygon must be counter-clockwise")
    if not is_simple_polygon(arr):
        raise GeometryError("polygon must be simple (no self-intersection)")
    return arr


def smooth_polygon(
    polygon,
    fillet_radius: float,
    angle_threshold: float = 0.35,
    arc_samples: int = 4,
) -> np.ndarray:
    """Replace sharp corners by circular-arc fillets.

    A corner whose absolute turn angle exceeds ``angle_threshold`` is cut at
    tangent points on its two edges and bridged by ``arc_samples`` points on a
    circle of radius at most ``fillet_radius``.  The radius shrinks as needed
    so a tangent point never passes an edge midpoint, which keeps the output
    simple.  Corners at or below the threshold are kept verbatim.
    """
    cfg = SmoothingConfig(fillet_radius, angle_threshold, arc_samples)
    arr = validate_polygon(polygon)
    v = arr.shape[0]
    out: list[np.ndarray] = []
    for k in range(v):
        a = arr[k - 1]
        b = arr[k]
        c = arr[(k + 1) % v]
        e_in = b - a
        e_out = c - b
        cross = e_in[0] * e_out[1] - e_in[1] * e_out[0]
        turn = float(np.arctan2(cross, np.dot(e_in, e_out)))
        if abs(turn) <= cfg.angle_threshold:
            out.append(b)
            continue
        len_in = float(np.hypot(*e_in))
        len_out = float(np.hypot(*e_out))
        t_max = 0.5 * min(len_in, len_out)
        phi = np.pi - abs(turn)  # interior wedge angle at the corner
        tan_half = np.tan(0.5 * phi)
        r = min(cfg.fillet_radius, t_max)
        t = r / tan_half
        if t > t_max:
            # acute corner: shrink the radius so the tangent offset fits
            t = t_max
            r = t_max * tan_half
        d1 = (a - b) / len_in
        d2 = (c - b) / len_out
        bis = d1 + d2
        bis_norm = float(np.hypot(*bis))
        if bis_norm == 0.0:
            raise GeometryError("degenerate corner (edges fold back exactly)")
        center = b + bis / bis_norm * (r / np.sin(0.5 * phi))
        start = b + d1 * t
        a0 = float(np.arctan2(start[1] - center[1], start[0] - center[0]))
        angles = a0 + turn * np.linspace(0.0, 1.0, cfg.arc_samples)
        arc = center + r * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        out.extend(arc)
    res = np.asarray(out)

    # clamped fillets on a shared edge can meet exactly at the midpoint
    scale = float(np.max(np.abs(res)) + 1.0)
    keep = np.ones(res.shape[0], dtype=bool)
    prev = res[-1]
    for i, pt in enumerate(res):
        if np.hypot(*(pt - prev)) < 1e-12 * scale:
            keep[i] = False
        else:
            prev = pt
    res = res[keep]
    return validate_polygon(res)


def triangulate(polygon, degeneracy_eps: float = 1e-12) -> np.ndarray:
    """Constrained Delaunay triangulation of a simple CCW polygon.

    Returns an (T, 3, 2) array of CCW triangles on the polygon's own
    vertices, T == V - 2.  The triangles tile the interior exactly; total
    area is checked against the polygon area as a guard.
    """
    arr = validate_polygon(polygon)
    shape = shapely.Polygon(arr)
    if not shape.is_valid:
        raise GeometryError("polygon rejected by triangulation backend")
    pieces = shapely.constrained_delaunay_triangles(shape)
    tris = []
    for geom in pieces.geoms:
        coords = np.asarray(geom.exterior.coords, dtype=float)[:3]
        if polygon_area(coords) < 0.0:
            coords = coords[::-1]
        tris.append(coords)
    if not tris:
        raise GeometryError("triangulation produced no triangles")
    result = np.asarray(tris)
    areas = np.array([polygon_area(t) for t in result])
    if np.any(areas <= degeneracy_eps):
        raise GeometryError("triangulation produced a degenerate triangle")
    total = polygon_area(arr)
    if abs(float(np.sum(areas)) - total) > 1e-9 * total:
        raise GeometryError("triangulation does not cover the polygon")
    if result.shape[0] != arr.shape[0] - 2:
        raise GeometryError("unexpected triangle count (interior vertex added)")
    return result


@dataclass(frozen=True)
class Obstacle:
    """Preprocessed obstacle: smoothed boundary, triangle tiling and a flat
    edge table (triangle-major, 3 edges per triangle) for distance queries."""

    index: int
    raw: np.ndarray
    boundary: np.ndarray
    triangles: np.ndarray
    edge_start: np.ndarray
    edge_dir: np.ndarray
    edge_len2: np.ndarray

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def build_obstacle(index: int, polygon, smoothing: SmoothingConfig | None = None) -> Obstacle:
    smoothing = smoothing or SmoothingConfig()
    raw = validate_polygon(polygon)
    boundary = smooth_polygon(
        raw, smoothing.fillet_radius, smoothing.angle_threshold, smoothing.arc_samples
    )
    tris = triangulate(boundary)
    start = tris.reshape(-1, 2)  # vertices 0,1,2 per triangle
    nxt = tris[:, [1, 2, 0], :].reshape(-1, 2)
    edge_dir = nxt - start
    edge_len2 = np.sum(edge_dir * edge_dir, axis=1)
    return Obstacle(
        index=index,
        raw=raw,
        boundary=boundary,
        triangles=tris,
        edge_start=start,
        edge_dir=edge_dir,
        edge_len2=edge_len2,
    )


@dataclass(frozen=True)
class ClosestPointResult:
    point: np.ndarray
    distance: float
    triangle_index: int


@dataclass(frozen=True)
class BatchClosestPoints:
    """Closest boundary points for P query points against M obstacles.

    point has shape (P, M, 2), distance (P, M), triangle_index (P, M).
    """

    point: np.ndarray
    distance: np.ndarray
    triangle_index: np.ndarray


def closest_point_on_segment(point, seg_a, seg_b) -> tuple[np.ndarray, float]:
    """Closest point on the segment [seg_a, seg_b] and its distance."""
    p = np.asarray(point, dtype=float)
    a = np.asarray(seg_a, dtype=float)
    b = np.asarray(seg_b, dtype=float)
    d = b - a
    len2 = float(d @ d)
    if len2 == 0.0:
        cp = a.copy()
    else:
        t = float(np.clip(((p - a) @ d) / len2, 0.0, 1.0))
        cp = a + t * d
    return cp, float(np.hypot(*(p - cp)))


def _closest_on_edge_table(points: np.ndarray, obstacle: Obstacle):
    """Vectorized closest point over one obstacle's edge table.

    Both the scalar and the batch query run through here so their results are
    bit-identical.  Ties resolve to the lowest edge index, i.e. lowest
    triangle index first.
    """
    rel = points[:, None, :] - obstacle.edge_start[None, :, :]
    len2 = obstacle.edge_len2[None, :]
    dots = np.sum(rel * obstacle.edge_dir[None, :, :], axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(len2 > 0.0, dots / len2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = obstacle.edge_start[None, :, :] + t[:, :, None] * obstacle.edge_dir[None, :, :]
    diff = points[:, None, :] - proj
    d2 = np.sum(diff * diff, axis=2)
    pick = np.argmin(d2, axis=1)  # first minimum wins the tie
    rows = np.arange(points.shape[0])
    cp = proj[rows, pick]
    dist = np.sqrt(d2[rows, pick])
    tri = pick // 3
    return cp, dist, tri


def closest_point_on_obstacle(point, obstacle: Obstacle) -> ClosestPointResult:
    p = np.asarray(point, dtype=float).reshape(1, 2)
    cp, dist, tri = _closest_on_edge_table(p, obstacle)
    return ClosestPointResult(point=cp[0], distance=float(dist[0]), triangle_index=int(tri[0]))


def batch_closest_points(points, obstacles: list[Obstacle]) -> BatchClosestPoints:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError("points must be an (P, 2) array")
    n_pts = pts.shape[0]
    n_obs = len(obstacles)
    cp = np.zeros((n_pts, n_obs, 2))
    dist = np.zeros((n_pts, n_obs))
    tri = np.zeros((n_pts, n_obs), dtype=int)
    for j, obs in enumerate(obstacles):
        cp[:, j], dist[:, j], tri[:, j] = _closest_on_edge_table(pts, obs)
    return BatchClosestPoints(point=cp, distance=dist, triangle_index=tri)
