"""Small geometry helpers shared across modules.

Polygon routines operate on (n, 2) float arrays describing simple polygons
(used for room boundaries); the triangle intersection test is the exact
collision primitive behind furniture rearrangement and scene generation.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# Proper-penetration margin: projection overlaps at or below this count as
# touching, not collision, so furniture resting flush against a neighbor or
# placed exactly side by side is legal.
CONTACT_EPS = 1e-9


def polygon_area(boundary: np.ndarray) -> float:
    """Signed area; positive for counter-clockwise winding."""
    x = boundary[:, 0]
    y = boundary[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_in_polygon(point, boundary: np.ndarray) -> bool:
    """Even-odd rule containment test for a simple polygon."""
    px, py = float(point[0]), float(point[1])
    inside = False
    n = len(boundary)
    for i in range(n):
        x0, y0 = boundary[i]
        x1, y1 = boundary[(i + 1) % n]
        if (y0 > py) != (y1 > py):
            t = (py - y0) / (y1 - y0)
            if px < x0 + t * (x1 - x0):
                inside = not inside
    return inside


def _proper_segment_intersect(a0, a1, b0, b1) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(b0, b1, a0)
    d2 = orient(b0, b1, a1)
    d3 = orient(a0, a1, b0)
    d4 = orient(a0, a1, b1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def polygon_is_simple(boundary: np.ndarray) -> bool:
    """True when no two non-adjacent edges properly cross."""
    n = len(boundary)
    if n < 3:
        return False
    edges = [(boundary[i], boundary[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _proper_segment_intersect(*edges[i], *edges[j]):
                return False
    return True


def ear_clip(boundary: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple polygon into index triples (ear clipping).

    Accepts either winding; triples are returned in the input's index space
    with counter-clockwise orientation.
    """
    n = len(boundary)
    if n < 3:
        raise ValueError("polygon needs at least 3 vertices")
    if not polygon_is_simple(boundary):
        raise ValueError("polygon is not simple")
    idx = list(range(n))
    if polygon_area(boundary) < 0:
        idx.reverse()

    def cross_z(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def inside_tri(p, a, b, c):
        d0 = cross_z(a, b, p)
        d1 = cross_z(b, c, p)
        d2 = cross_z(c, a, p)
        return d0 >= 0 and d1 >= 0 and d2 >= 0

    triangles: list[tuple[int, int, int]] = []
    guard = 0
    while len(idx) > 3 and guard < 10 * n * n:
        guard += 1
        clipped = False
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = boundary[i0], boundary[i1], boundary[i2]
            if cross_z(a, b, c) <= 0:
                continue  # reflex corner, not an ear
            if any(
                inside_tri(boundary[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            triangles.append((i0, i1, i2))
            idx.pop(k)
            clipped = True
            break
        if not clipped:
            raise ValueError("polygon is not simple; ear clipping failed")
    triangles.append((idx[0], idx[1], idx[2]))
    return triangles


@njit(cache=True)
def _plane_dists(tri, nx, ny, nz, d):
    out = np.empty(3)
    for i in range(3):
        out[i] = tri[i, 0] * nx + tri[i, 1] * ny + tri[i, 2] * nz + d
    return out


@njit(cache=True)
def _line_interval(tri, dists, dx, dy, dz, tol):
    """Projection interval of a triangle's crossing with the plane line.

    Collects the points where the triangle meets the other triangle's
    plane (edge crossings plus on-plane vertices) projected on the line
    direction. Returns (lo, hi, found).
    """
    lo = 1e300
    hi = -1e300
    found = False
    for i in range(3):
        p_i = tri[i, 0] * dx + tri[i, 1] * dy + tri[i, 2] * dz
        if abs(dists[i]) <= tol:
            found = True
            if p_i < lo:
                lo = p_i
            if p_i > hi:
                hi = p_i
        j = (i + 1) % 3
        if (dists[i] > tol and dists[j] < -tol) or (dists[i] < -tol and dists[j] > tol):
            p_j = tri[j, 0] * dx + tri[j, 1] * dy + tri[j, 2] * dz
            t = dists[i] / (dists[i] - dists[j])
            p = p_i + t * (p_j - p_i)
            found = True
            if p < lo:
                lo = p
            if p > hi:
                hi = p
    return lo, hi, found


@njit(cache=True)
def tri_tri_intersect(t1, t2):
    """Transversal (penetrating) intersection of two 3D triangles.

    Interval test on the plane-plane intersection line. Contact within
    CONTACT_EPS meters does not count, and neither do coplanar overlaps:
    flush or stacked placements are touching, not collision. Solids
    interpenetrate only through transversal crossings, which this detects.
    """
    n1x = ((t1[1, 1] - t1[0, 1]) * (t1[2, 2] - t1[0, 2])
           - (t1[1, 2] - t1[0, 2]) * (t1[2, 1] - t1[0, 1]))
    n1y = ((t1[1, 2] - t1[0, 2]) * (t1[2, 0] - t1[0, 0])
           - (t1[1, 0] - t1[0, 0]) * (t1[2, 2] - t1[0, 2]))
    n1z = ((t1[1, 0] - t1[0, 0]) * (t1[2, 1] - t1[0, 1])
           - (t1[1, 1] - t1[0, 1]) * (t1[2, 0] - t1[0, 0]))
    n2x = ((t2[1, 1] - t2[0, 1]) * (t2[2, 2] - t2[0, 2])
           - (t2[1, 2] - t2[0, 2]) * (t2[2, 1] - t2[0, 1]))
    n2y = ((t2[1, 2] - t2[0, 2]) * (t2[2, 0] - t2[0, 0])
           - (t2[1, 0] - t2[0, 0]) * (t2[2, 2] - t2[0, 2]))
    n2z = ((t2[1, 0] - t2[0, 0]) * (t2[2, 1] - t2[0, 1])
           - (t2[1, 1] - t2[0, 1]) * (t2[2, 0] - t2[0, 0]))
    len1 = np.sqrt(n1x * n1x + n1y * n1y + n1z * n1z)
    len2 = np.sqrt(n2x * n2x + n2y * n2y + n2z * n2z)
    if len1 < 1e-300 or len2 < 1e-300:
        return False  # degenerate triangle

    # distances are |n| * signed length; tolerance is CONTACT_EPS meters.
    # Each triangle must straddle the other's plane strictly: one-sided
    # contact (resting, flush, coplanar) is touching, not penetration.
    d2 = _plane_dists(t2, n1x, n1y, n1z,
                      -(n1x * t1[0, 0] + n1y * t1[0, 1] + n1z * t1[0, 2]))
    tol1 = CONTACT_EPS * len1
    if not (max(d2[0], d2[1], d2[2]) > tol1 and min(d2[0], d2[1], d2[2]) < -tol1):
        return False

    d1 = _plane_dists(t1, n2x, n2y, n2z,
                      -(n2x * t2[0, 0] + n2y * t2[0, 1] + n2z * t2[0, 2]))
    tol2 = CONTACT_EPS * len2
    if not (max(d1[0], d1[1], d1[2]) > tol2 and min(d1[0], d1[1], d1[2]) < -tol2):
        return False

    dx = n1y * n2z - n1z * n2y
    dy = n1z * n2x - n1x * n2z
    dz = n1x * n2y - n1y * n2x
    dlen = np.sqrt(dx * dx + dy * dy + dz * dz)
    if dlen < 1e-300:
        return False
    lo1, hi1, f1 = _line_interval(t1, d1, dx, dy, dz, tol2)
    lo2, hi2, f2 = _line_interval(t2, d2, dx, dy, dz, tol1)
    if not (f1 and f2):
        return False
    overlap = min(hi1, hi2) - max(lo1, lo2)
    return overlap > CONTACT_EPS * dlen


@njit(cache=True)
def _tris_overlap_any(verts_a, tris_a, verts_b, tris_b,
                      amin, amax, bmin, bmax):
    t1 = np.empty((3, 3))
    t2 = np.empty((3, 3))
    for i in range(tris_a.shape[0]):
        skip = False
        for c in range(3):
            if amin[i, c] > bmax[:, c].max() or amax[i, c] < bmin[:, c].min():
                skip = True
                break
        if skip:
            continue
        for c in range(3):
            t1[0, c] = verts_a[tris_a[i, 0], c]
            t1[1, c] = verts_a[tris_a[i, 1], c]
            t1[2, c] = verts_a[tris_a[i, 2], c]
        for j in range(tris_b.shape[0]):
            hit = True
            for c in range(3):
                if amin[i, c] > bmax[j, c] or amax[i, c] < bmin[j, c]:
                    hit = False
                    break
            if not hit:
                continue
            for c in range(3):
                t2[0, c] = verts_b[tris_b[j, 0], c]
                t2[1, c] = verts_b[tris_b[j, 1], c]
                t2[2, c] = verts_b[tris_b[j, 2], c]
            if tri_tri_intersect(t1, t2):
                return True
    return False


def _tri_bounds(verts: np.ndarray, tris: np.ndarray):
    corners = verts[tris]  # (n, 3, 3)
    return corners.min(axis=1), corners.max(axis=1)


def meshes_intersect(verts_a: np.ndarray, tris_a: np.ndarray,
                     verts_b: np.ndarray, tris_b: np.ndarray) -> bool:
    """Exact mesh/mesh collision: AABB pre-filter, then triangle pairs."""
    lo_a = verts_a.min(axis=0)
    hi_a = verts_a.max(axis=0)
    lo_b = verts_b.min(axis=0)
    hi_b = verts_b.max(axis=0)
    if np.any(lo_a > hi_b + CONTACT_EPS) or np.any(lo_b > hi_a + CONTACT_EPS):
        return False
    amin, amax = _tri_bounds(verts_a, tris_a)
    bmin, bmax = _tri_bounds(verts_b, tris_b)
    return bool(
        _tris_overlap_any(
            np.ascontiguousarray(verts_a, dtype=np.float64),
            np.ascontiguousarray(tris_a, dtype=np.int64),
            np.ascontiguousarray(verts_b, dtype=np.float64),
            np.ascontiguousarray(tris_b, dtype=np.int64),
            amin, amax, bmin, bmax,
        )
    )
