"""Point configurations, windows, configuration distances and Delaunay features.

All distances operate on finite planar (or d-dimensional) point
configurations.  The Delaunay tessellation is 2-D only and is built by
incremental insertion; it backs the ``max_cell_area`` feature and the
area-weighted birth kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

__all__ = [
    "GeometryError",
    "PointConfig",
    "Window",
    "Tessellation",
    "hausdorff",
    "optimal_matching",
    "cardinality_distance",
    "delaunay",
    "max_cell_area",
    "max_nn_distance",
]


class GeometryError(ValueError):
    """Domain error for geometric operations (empty inputs, degenerate sets)."""


@dataclass(frozen=True)
class PointConfig:
    """A finite multiset of points with stable internal indices.

    Parameters
    ----------
    points : (n, d) float array
        Point coordinates.  ``n = 0`` represents the empty configuration.
    ids : (n,) int array, optional
        Stable point identities, used to recover births/deaths between
        discrete frames.  ``None`` when identities are unknown.
    """

    points: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(0, 2) if pts.size == 0 else pts.reshape(1, -1)
        if pts.ndim != 2:
            raise GeometryError("points must be an (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.ids is not None:
            ids = np.asarray(self.ids, dtype=np.int64)
            if ids.shape != (pts.shape[0],):
                raise GeometryError("ids must have one entry per point")
            object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1] if self.n else 2

    def is_empty(self) -> bool:
        return self.n == 0

    def same_point_set(self, other: "PointConfig") -> bool:
        """Equality as point multisets, invariant under ordering."""
        if self.n != other.n:
            return False
        if self.n == 0:
            return True
        a = self.points[np.lexsort(self.points.T[::-1])]
        b = other.points[np.lexsort(other.points.T[::-1])]
        return bool(np.array_equal(a, b))

    @staticmethod
    def empty(dim: int = 2) -> "PointConfig":
        return PointConfig(np.empty((0, dim)))


@dataclass(frozen=True)
class Window:
    """An axis-aligned bounded box, the carrier of all configurations."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GeometryError("window corners must be vectors of equal length")
        if not np.all(hi > lo):
            raise GeometryError("window upper corner must exceed lower corner")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def corners(self) -> np.ndarray:
        """The four corners (2-D only), in a fixed deterministic order."""
        if self.dim != 2:
            raise GeometryError("corners are defined for 2-D windows only")
        (x0, y0), (x1, y1) = self.lower, self.upper
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    @staticmethod
    def unit_square() -> "Window":
        return Window(np.zeros(2), np.ones(2))


@dataclass(frozen=True)
class Tessellation:
    """A triangulation: vertices, vertex-index triples and per-triangle areas."""

    vertices: np.ndarray
    triangles: np.ndarray
    areas: np.ndarray = field(default=None)  # type: ignore[assignment]
    had_duplicates: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.areas is None:
            object.__setattr__(self, "areas", triangle_areas(v, t))
        else:
            object.__setattr__(self, "areas", np.asarray(self.areas, dtype=float))

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    ab = b - a
    ac = c - a
    return 0.5 * np.abs(ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])


# ---------------------------------------------------------------------------
# Configuration distances
# ---------------------------------------------------------------------------

def hausdorff(x: PointConfig, y: PointConfig) -> float:
    """Hausdorff distance between two nonempty configurations.

    Raises
    ------
    GeometryError
        If either configuration is empty; the estimation layer handles the
        empty case through its kernel convention.
    """
    if x.is_empty() or y.is_empty():
        raise GeometryError("hausdorff distance requires nonempty configurations")
    d = cdist(x.points, y.points)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def optimal_matching(x: PointConfig, y: PointConfig, kappa: float) -> float:
    """Optimal matching distance with truncation/penalty ``kappa``.

    The smaller configuration is optimally injected into the larger one
    under the truncated cost ``min(||u - v||, kappa)``; each unmatched point
    of the larger configuration contributes ``kappa``; the total is divided
    by the larger cardinality.  Returns 0 when both configurations are empty.
    """
    if kappa <= 0:
        raise GeometryError("kappa must be positive")
    nx, ny = x.n, y.n
    m, big = min(nx, ny), max(nx, ny)
    if big == 0:
        return 0.0
    if m == 0:
        return float(kappa)
    small_pts, big_pts = (x.points, y.points) if nx <= ny else (y.points, x.points)
    cost = np.minimum(cdist(small_pts, big_pts), kappa)
    rows, cols = linear_sum_assignment(cost)
    return float((cost[rows, cols].sum() + kappa * (big - m)) / big)


def matching_cost_matrix(small_pts: np.ndarray, big_pts: np.ndarray,
                         kappa: float) -> np.ndarray:
    """Truncated cost matrix used by the assignment formulation (test hook)."""
    return np.minimum(cdist(small_pts, big_pts), kappa)


def cardinality_distance(x: PointConfig, y: PointConfig) -> float:
    """Absolute difference of cardinalities."""
    return float(abs(x.n - y.n))


def max_nn_distance(x: PointConfig) -> float:
    """Maximal nearest-neighbour distance over the points of ``x``."""
    if x.n < 2:
        raise GeometryError("max_nn_distance requires at least two points")
    d = cdist(x.points, x.points)
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).max())


# ---------------------------------------------------------------------------
# Delaunay triangulation (incremental insertion, 2-D)
# ---------------------------------------------------------------------------

# Relative tolerance band for the in-circle predicate.
_INCIRCLE_RTOL = 1e-12


def _circumcircle(a, b, c):
    """Circumcenter and squared radius of triangle (a, b, c).

    Degenerate (collinear) triangles get an infinite circle, so they attract
    every point and are always replaced during insertion.
    """
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    if d == 0.0:
        return np.array([np.inf, np.inf]), np.inf
    a2 = a[0] * a[0] + a[1] * a[1]
    b2 = b[0] * b[0] + b[1] * b[1]
    c2 = c[0] * c[0] + c[1] * c[1]
    ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d
    uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d
    center = np.array([ux, uy])
    r2 = (a[0] - ux) ** 2 + (a[1] - uy) ** 2
    return center, r2


def _incircle_det(a, b, c, p):
    """Signed in-circle determinant, normalized so positive means inside.

    Evaluated in extended precision on translated coordinates; returns the
    determinant together with a magnitude-based tolerance band.  The sign is
    normalized by the triangle orientation, so it is independent of the
    vertex order; a degenerate (collinear) triangle returns (nan, band).
    """
    L = np.longdouble
    ax, ay = L(a[0]) - L(p[0]), L(a[1]) - L(p[1])
    bx, by = L(b[0]) - L(p[0]), L(b[1]) - L(p[1])
    cx, cy = L(c[0]) - L(p[0]), L(c[1]) - L(p[1])
    al, bl, cl = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    det = ax * (by * cl - cy * bl) - ay * (bx * cl - cx * bl) \
        + al * (bx * cy - cx * by)
    band = _INCIRCLE_RTOL * (abs(ax) * (abs(by * cl) + abs(cy * bl))
                             + abs(ay) * (abs(bx * cl) + abs(cx * bl))
                             + abs(al) * (abs(bx * cy) + abs(cx * by)))
    orient = (L(b[0]) - L(a[0])) * (L(c[1]) - L(a[1])) \
        - (L(b[1]) - L(a[1])) * (L(c[0]) - L(a[0]))
    if orient == 0:
        return float("nan"), float(band)
    return float(det if orient > 0 else -det), float(band)


def in_circumcircle(a, b, c, p, strict: bool = True) -> bool:
    """Whether ``p`` lies strictly inside the circumcircle of (a, b, c).

    Evaluated with a relative tolerance band; points on the circle (within
    the band) are not considered inside under the strict test.
    """
    det, band = _incircle_det(a, b, c, p)
    if math.isnan(det):
        return False
    return bool(det > band) if strict else bool(det > -band)


def _on_circumcircle(a, b, c, p) -> bool:
    det, band = _incircle_det(a, b, c, p)
    if math.isnan(det):
        return False
    return bool(abs(det) <= band)


def delaunay(x: PointConfig, window: Window, add_corners: bool = True) -> Tessellation:
    """Delaunay triangulation of ``x``, optionally augmented with window corners.

    Cocircular degeneracies are resolved deterministically: within each
    cocircular quadrilateral the retained diagonal is the one incident to
    the lowest vertex index.  Duplicate points are removed before
    triangulation and flagged on the result.
    """
    pts = x.points if x.n else np.empty((0, 2))
    if pts.shape[0] and pts.shape[1] != 2:
        raise GeometryError("delaunay triangulation supports 2-D points only")
    if add_corners:
        pts = np.vstack([pts, window.corners]) if pts.size else window.corners.copy()
    uniq, first = np.unique(pts, axis=0, return_index=True)
    had_duplicates = uniq.shape[0] < pts.shape[0]
    # keep the original insertion order of the first occurrences
    keep = np.sort(first)
    verts = pts[keep]
    if verts.shape[0] < 3:
        raise GeometryError("need at least 3 distinct vertices to triangulate")
    triangles = _bowyer_watson(verts)
    triangles = _resolve_cocircular(verts, triangles)
    return Tessellation(vertices=verts, triangles=triangles,
                        areas=None, had_duplicates=had_duplicates)


def _incircle_raw(pts: np.ndarray, tris: np.ndarray, q):
    """Determinant and tolerance band per triangle, in the dtype of ``pts``."""
    a = pts[tris[:, 0]] - q
    b = pts[tris[:, 1]] - q
    c = pts[tris[:, 2]] - q
    al = (a * a).sum(axis=1)
    bl = (b * b).sum(axis=1)
    cl = (c * c).sum(axis=1)
    det = a[:, 0] * (b[:, 1] * cl - c[:, 1] * bl) \
        - a[:, 1] * (b[:, 0] * cl - c[:, 0] * bl) \
        + al * (b[:, 0] * c[:, 1] - c[:, 0] * b[:, 1])
    perm = (np.abs(a[:, 0]) * (np.abs(b[:, 1] * cl) + np.abs(c[:, 1] * bl))
            + np.abs(a[:, 1]) * (np.abs(b[:, 0] * cl) + np.abs(c[:, 0] * bl))
            + al * (np.abs(b[:, 0] * c[:, 1]) + np.abs(c[:, 0] * b[:, 1])))
    return det, perm


def _incircle_dets(pts: np.ndarray, tris: np.ndarray, p) -> np.ndarray:
    """Vectorized in-circle determinants for CCW triangles against ``p``.

    Positive (beyond the relative tolerance band) means strictly inside;
    the band is subtracted so the result can be thresholded at zero.
    Degenerate triangles yield +inf so they are always replaced.  Decisions
    within float64 roundoff of the band are refined in extended precision.
    """
    q = np.asarray(p, dtype=float)
    det, perm = _incircle_raw(pts, tris, q)
    out = det - _INCIRCLE_RTOL * perm
    close = np.abs(out) <= 1e-9 * perm
    if close.any():
        det_l, perm_l = _incircle_raw(pts.astype(np.longdouble), tris[close],
                                      q.astype(np.longdouble))
        out[close] = (det_l - _INCIRCLE_RTOL * perm_l).astype(float)
    ab = pts[tris[:, 1]] - pts[tris[:, 0]]
    ac = pts[tris[:, 2]] - pts[tris[:, 0]]
    cr = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
    out[cr == 0.0] = np.inf
    return out


def _ccw(pts: np.ndarray, tri) -> tuple:
    a, b, c = tri
    cr = (pts[b, 0] - pts[a, 0]) * (pts[c, 1] - pts[a, 1]) \
        - (pts[b, 1] - pts[a, 1]) * (pts[c, 0] - pts[a, 0])
    return (a, c, b) if cr < 0 else (a, b, c)


def _bowyer_watson(verts: np.ndarray) -> np.ndarray:
    n = verts.shape[0]
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    span = max(float((hi - lo).max()), 1.0)
    mid = (lo + hi) / 2.0
    # far enough that hull slivers' circumcircles cannot reach the super
    # vertices; the in-circle test then degenerates to a half-plane test
    s = 1e9 * span
    super_pts = np.array([
        [mid[0] - 2.0 * s, mid[1] - s],
        [mid[0] + 2.0 * s, mid[1] - s],
        [mid[0], mid[1] + 2.0 * s],
    ])
    all_pts = np.vstack([verts, super_pts])

    cap = max(4 * n + 16, 64)
    tris = np.empty((cap, 3), dtype=np.int64)
    alive = np.zeros(cap, dtype=bool)
    tris[0] = _ccw(all_pts, (n, n + 1, n + 2))
    alive[0] = True
    m = 1  # rows 0..m-1 are in use (alive or retired)

    for pi in range(n):
        p = all_pts[pi]
        live = np.flatnonzero(alive[:m])
        score = _incircle_dets(all_pts, tris[live], p)
        bad = live[score > 0.0]
        if bad.size == 0:
            # numerically on-circle everywhere; take the closest call
            bad = live[[int(np.argmax(score))]]
        # cavity boundary: edges of bad triangles that are not shared
        edge_count: dict[tuple[int, int], tuple[int, int]] = {}
        for ti in bad:
            a, b, c = tris[ti]
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                if key in edge_count:
                    edge_count.pop(key)
                else:
                    edge_count[key] = (u, v)
        alive[bad] = False
        new = np.array([_ccw(all_pts, (u, v, pi))
                        for (u, v) in edge_count.values()], dtype=np.int64)
        k = new.shape[0]
        if m + k > cap:
            grow = max(cap, m + k)
            tris = np.vstack([tris, np.empty((grow, 3), dtype=np.int64)])
            alive = np.concatenate([alive, np.zeros(grow, dtype=bool)])
            cap += grow
        tris[m:m + k] = new
        alive[m:m + k] = True
        m += k

    out = tris[:m][alive[:m]]
    return out[(out < n).all(axis=1)].reshape(-1, 3)


def _on_circle_mask(verts: np.ndarray, quads: np.ndarray) -> np.ndarray:
    """Which quads (u, v, c1, c2) have all four vertices cocircular."""
    if quads.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    q = verts[quads[:, 3]]
    a = verts[quads[:, 0]] - q
    b = verts[quads[:, 1]] - q
    c = verts[quads[:, 2]] - q
    al = (a * a).sum(axis=1)
    bl = (b * b).sum(axis=1)
    cl = (c * c).sum(axis=1)
    det = a[:, 0] * (b[:, 1] * cl - c[:, 1] * bl) \
        - a[:, 1] * (b[:, 0] * cl - c[:, 0] * bl) \
        + al * (b[:, 0] * c[:, 1] - c[:, 0] * b[:, 1])
    perm = (np.abs(a[:, 0]) * (np.abs(b[:, 1] * cl) + np.abs(c[:, 1] * bl))
            + np.abs(a[:, 1]) * (np.abs(b[:, 0] * cl) + np.abs(c[:, 0] * bl))
            + al * (np.abs(b[:, 0] * c[:, 1]) + np.abs(c[:, 0] * b[:, 1])))
    maybe = np.abs(det) <= 1e-9 * perm
    if not maybe.any():
        return maybe
    out = np.zeros(len(quads), dtype=bool)
    for i in np.flatnonzero(maybe):
        u, v, c1, c2 = quads[i]
        out[i] = _on_circumcircle(verts[u], verts[v], verts[c1], verts[c2])
    return out


def _resolve_cocircular(verts: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flip cocircular quads so the kept diagonal touches the lowest index."""
    tris = [tuple(t) for t in triangles]
    changed = True
    sweeps = 0
    max_sweeps = 8 * max(len(tris), 1)  # one flip per sweep
    while changed and sweeps < max_sweeps:
        changed = False
        sweeps += 1
        edge_map: dict[tuple[int, int], list[int]] = {}
        for ti, (a, b, c) in enumerate(tris):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                edge_map.setdefault(key, []).append(ti)
        interior = []
        for (u, v), owners in edge_map.items():
            if len(owners) != 2:
                continue
            t1, t2 = owners
            c1 = next(w for w in tris[t1] if w not in (u, v))
            c2 = next(w for w in tris[t2] if w not in (u, v))
            interior.append((u, v, c1, c2, t1, t2))
        quads = np.asarray([q[:4] for q in interior], dtype=np.int64).reshape(-1, 4)
        on = _on_circle_mask(verts, quads)
        for i in np.flatnonzero(on):
            u, v, c1, c2, t1, t2 = interior[i]
            quad_min = min(u, v, c1, c2)
            if quad_min in (u, v):
                continue  # current diagonal already touches the lowest index
            # flip (u,v) -> (c1,c2); skip if the flipped quad is not convex
            if not _is_convex_quad(verts, u, c1, v, c2):
                continue
            tris[t1] = (c1, c2, u)
            tris[t2] = (c1, c2, v)
            changed = True
            break  # edge map is stale after a flip; rebuild
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _is_convex_quad(verts, a, b, c, d) -> bool:
    ring = [verts[a], verts[b], verts[c], verts[d]]
    signs = []
    for i in range(4):
        p, q, r = ring[i], ring[(i + 1) % 4], ring[(i + 2) % 4]
        signs.append((q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0]))
    signs = np.asarray(signs)
    return bool(np.all(signs > 0) or np.all(signs < 0))


def max_cell_area(t: Tessellation) -> float:
    """Maximum triangle area of a tessellation."""
    if t.n_triangles == 0:
        raise GeometryError("max_cell_area of an empty tessellation")
    return float(t.areas.max())
