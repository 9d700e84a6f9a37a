"""Jittered triangular meshes of the unit square.

Triangulation uses incremental Bowyer-Watson insertion with a scaled
in-circle predicate. Points lying on a circumcircle (within tolerance) are
treated as outside, so for co-circular input the edge already present when
the fourth point arrives is kept: ties are broken by insertion order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshError

INCIRCLE_TOL = 1e-10
AREA_MIN_FRACTION = 1e-6
SUPER_TRIANGLE_SCALE = 1.0e3


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray       # (n, 2)
    triangles: np.ndarray      # (t, 3), counterclockwise
    boundary_mask: np.ndarray  # (n,) bool

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)


def signed_areas(points, triangles) -> np.ndarray:
    a, b, c = (points[triangles[:, k]] for k in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def incircle(a, b, c, d):
    """In-circle determinant of ``d`` against CCW triangles ``(a, b, c)``.

    Returns ``(det, scale)``: ``det > 0`` means ``d`` is strictly inside, and
    ``scale`` is the sum of absolute expansion terms, used to make the
    tolerance relative.
    """
    adx, ady = a[..., 0] - d[..., 0], a[..., 1] - d[..., 1]
    bdx, bdy = b[..., 0] - d[..., 0], b[..., 1] - d[..., 1]
    cdx, cdy = c[..., 0] - d[..., 0], c[..., 1] - d[..., 1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    bc = bdx * cdy - cdx * bdy
    ca = cdx * ady - adx * cdy
    ab = adx * bdy - bdx * ady
    det = alift * bc + blift * ca + clift * ab
    scale = (alift * (np.abs(bdx * cdy) + np.abs(cdx * bdy))
             + blift * (np.abs(cdx * ady) + np.abs(adx * cdy))
             + clift * (np.abs(adx * bdy) + np.abs(bdx * ady)))
    return det, scale


def delaunay(points, tol: float = INCIRCLE_TOL) -> np.ndarray:
    """Bowyer-Watson triangulation; returns CCW vertex-index triples."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if pts.ndim != 2 or pts.shape[1] != 2 or n < 3:
        raise MeshError("delaunay needs at least 3 points in the plane")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float(max(hi - lo))
    centred = pts - pts.mean(axis=0)
    if extent == 0 or np.linalg.matrix_rank(centred, tol=1e-12 * extent) < 2:
        raise MeshError("all input points are collinear")
    if np.unique(pts, axis=0).shape[0] != n:
        raise MeshError("duplicate input points")

    cx, cy = (lo + hi) / 2.0
    big = SUPER_TRIANGLE_SCALE * extent
    super_pts = np.array([[cx - big, cy - big], [cx + big, cy - big], [cx, cy + big]])
    allpts = np.vstack([pts, super_pts])

    cap = 2 * n + 16
    tris = np.zeros((cap, 3), dtype=np.int64)
    alive = np.zeros(cap, dtype=bool)
    tris[0] = (n, n + 1, n + 2)
    alive[0] = True
    count = 1

    for i in range(n):
        p = allpts[i]
        live = np.flatnonzero(alive[:count])
        t = tris[live]
        det, scale = incircle(allpts[t[:, 0]], allpts[t[:, 1]], allpts[t[:, 2]], p)
        bad = live[det > tol * scale]
        if bad.size == 0:
            raise MeshError(f"point {i} is not inside any circumcircle")
        edges = set()
        for a, b, c in tris[bad]:
            for e in ((a, b), (b, c), (c, a)):
                edges.add((int(e[0]), int(e[1])))
        rim = [e for e in edges if (e[1], e[0]) not in edges]
        alive[bad] = False
        if count + len(rim) > cap:
            keep = np.flatnonzero(alive[:count])
            cap = max(2 * cap, count + len(rim) + 16)
            new_tris = np.zeros((cap, 3), dtype=np.int64)
            new_tris[:keep.size] = tris[keep]
            tris = new_tris
            alive = np.zeros(cap, dtype=bool)
            alive[:keep.size] = True
            count = keep.size
        new = np.array([(a, b, i) for a, b in rim], dtype=np.int64)
        if np.any(signed_areas(allpts, new) <= 0):
            raise MeshError(f"cavity for point {i} is not star-shaped (round-off)")
        tris[count:count + len(rim)] = new
        alive[count:count + len(rim)] = True
        count += len(rim)

    out = tris[:count][alive[:count]]
    out = out[np.all(out < n, axis=1)]
    # canonical order: rotate so the smallest index leads, then sort rows
    shift = np.argmin(out, axis=1)
    out = np.stack([np.roll(row, -s) for row, s in zip(out, shift)]) if out.size else out
    return out[np.lexsort(out.T[::-1])]


def delaunay_violations(points, triangles, tol: float = INCIRCLE_TOL) -> int:
    """Brute force count of (vertex, triangle) pairs breaking the empty-circle rule."""
    pts = np.asarray(points, dtype=np.float64)
    tri = np.asarray(triangles)
    a, b, c = (pts[tri[:, k]][:, None, :] for k in range(3))
    det, scale = incircle(a, b, c, pts[None, :, :])
    inside = det > tol * scale
    inside[np.arange(tri.shape[0])[:, None], tri] = False
    return int(inside.sum())


def grid_points(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Regular ``(N+1)^2`` grid on the unit square and its boundary mask."""
    ticks = np.arange(N + 1) / N
    x, y = np.meshgrid(ticks, ticks, indexing="xy")
    pts = np.column_stack([x.ravel(), y.ravel()])
    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="xy")
    boundary = ((i == 0) | (i == N) | (j == 0) | (j == N)).ravel()
    return pts, boundary


def _jitter(rng, count: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=count))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def build_mesh(N: int, jitter_amplitude: float = 0.25, seed=0, max_retries: int = 100) -> TriMesh:
    """Jitter interior grid nodes by at most ``jitter_amplitude / N`` and triangulate.

    Boundary nodes stay fixed. Vertices of triangles thinner than
    ``1e-6`` of the mean element area are re-jittered, up to ``max_retries``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if not 0.0 <= jitter_amplitude < 0.5:
        raise ValueError("jitter_amplitude must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    base, boundary = grid_points(N)
    interior = np.flatnonzero(~boundary)
    radius = jitter_amplitude / N
    pts = base.copy()
    pts[interior] += _jitter(rng, interior.size, radius)

    for _ in range(max_retries + 1):
        try:
            tris = delaunay(pts)
        except MeshError:
            tris = None
        if tris is not None:
            areas = signed_areas(pts, tris)
            thin = areas <= AREA_MIN_FRACTION * (1.0 / tris.shape[0])
            if not thin.any() and np.isclose(areas.sum(), 1.0, rtol=1e-9, atol=0):
                return TriMesh(pts, tris, boundary)
            redo = np.unique(tris[thin])
            redo = redo[~boundary[redo]]
            if redo.size == 0:
                redo = interior
        else:
            redo = interior
        pts[redo] = base[redo] + _jitter(rng, redo.size, radius)
    raise MeshError(f"no non-degenerate mesh after {max_retries} retries (seed={seed!r})")
