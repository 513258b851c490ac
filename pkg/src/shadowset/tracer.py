"""Scene compilation and ray queries.

compile_scene flattens a Scene into contiguous arrays (TraceData) the
compiled kernels can walk: a triangle soup with per-triangle material,
background, and furniture tags, a median-split BVH over it, and tables for
the active lights. The Python-level API (intersect, occluded, sample_light,
sample_brdf) wraps the kernels for tests and interactive use; rendering
proper goes through integrator.render_passes.

Assembly rules:
  * furniture entries instance their mesh with the stored pose; meshes no
    furniture references are world geometry at identity,
  * rooms contribute background-tagged shells (floor, ceiling, walls),
  * area lights contribute their two panel triangles whether active or
    not; inactive panels render as matte gray,
  * emissive-mesh lights keep their geometry when inactive but with the
    emission zeroed.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .geom import ear_clip
from .imgio import read_png
from .rng import RngStream, U64
from .scene import (
    EMISSIVE,
    LAMBERTIAN,
    LIGHT_AREA,
    LIGHT_EMISSIVE_MESH,
    LIGHT_POINT,
    LIGHT_SPOT,
    CameraPose,
    Light,
    Material,
    Scene,
)

BVH_LEAF_SIZE = 4

TraceData = namedtuple("TraceData", [
    "tri_v0", "tri_e1", "tri_e2", "tri_n", "tri_mat", "tri_bg", "tri_furn",
    "tri_uv",
    "mat_albedo", "mat_emit", "mat_kind", "mat_tex",
    "tex_data", "tex_off", "tex_w", "tex_h",
    "node_min", "node_max", "node_left", "node_right", "prim",
    "light_kind", "light_pos", "light_dir", "light_cos", "light_flux",
    "light_tri_start", "light_tri_count", "light_area",
    "ltri_idx", "ltri_cum",
])


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    tmin: float = 0.0
    tmax: float = math.inf

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            raise ValueError("ray direction must be nonzero")
        self.direction = d / norm


@dataclass
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray  # geometric, unit, as stored (not viewer-flipped)
    triangle: int
    material: int
    bary: tuple[float, float, float]
    background: bool
    furniture: int  # -1 for non-furniture geometry


@dataclass
class LightSample:
    radiance: np.ndarray
    direction: np.ndarray
    distance: float
    pdf: float  # solid-angle density with light selection folded in
    light: int


@dataclass
class BrdfSample:
    direction: np.ndarray
    pdf: float
    value: np.ndarray  # BRDF value (albedo / pi)


def _scratch_stack() -> np.ndarray:
    return np.empty(_kernels.BVH_STACK, dtype=np.int64)


# ---------------------------------------------------------------------------
# BVH

def build_bvh(lo: np.ndarray, hi: np.ndarray):
    """Median-split BVH over per-triangle bounds; leaves hold <= 4.

    Returns (node_min, node_max, node_left, node_right, prim). Leaves store
    left = -(start + 1) and right = count into prim; internal nodes store
    child indices.
    """
    n = lo.shape[0]
    if n == 0:
        empty3 = np.zeros((0, 3), dtype=np.float64)
        empty1 = np.zeros(0, dtype=np.int64)
        return empty3, empty3.copy(), empty1, empty1.copy(), np.zeros(0, dtype=np.int64)
    centroid = (lo + hi) * 0.5
    prim = np.arange(n, dtype=np.int64)
    node_min: list[np.ndarray] = []
    node_max: list[np.ndarray] = []
    node_left: list[int] = []
    node_right: list[int] = []

    def emit(start: int, end: int) -> int:
        idx = len(node_left)
        node_min.append(lo[prim[start:end]].min(axis=0))
        node_max.append(hi[prim[start:end]].max(axis=0))
        node_left.append(0)
        node_right.append(0)
        count = end - start
        if count <= BVH_LEAF_SIZE:
            node_left[idx] = -(start + 1)
            node_right[idx] = count
            return idx
        c = centroid[prim[start:end]]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order = np.argsort(c[:, axis], kind="stable")
        prim[start:end] = prim[start:end][order]
        mid = start + count // 2
        node_left[idx] = emit(start, mid)
        node_right[idx] = emit(mid, end)
        return idx

    emit(0, n)
    return (np.asarray(node_min, dtype=np.float64),
            np.asarray(node_max, dtype=np.float64),
            np.asarray(node_left, dtype=np.int64),
            np.asarray(node_right, dtype=np.int64),
            prim)


# ---------------------------------------------------------------------------
# compilation

def _room_shell(room) -> tuple[np.ndarray, np.ndarray]:
    """Inward-facing triangles for one room prism."""
    boundary = room.boundary
    k = boundary.shape[0]
    floor = [(x, y, room.z0) for x, y in boundary]
    ceil = [(x, y, room.z1) for x, y in boundary]
    verts = np.asarray(floor + ceil, dtype=np.float64)
    tris: list[tuple[int, int, int]] = []
    for (i, j, l) in ear_clip(boundary):
        tris.append((i, j, l))            # floor, normal +z (up)
        tris.append((k + i, k + l, k + j))  # ceiling, normal -z (down)
    for e in range(k):
        a = e
        b = (e + 1) % k
        # wall quad wound so normals face the room interior
        tris.append((a, k + b, b))
        tris.append((a, k + a, k + b))
    return verts, np.asarray(tris, dtype=np.int64)


def _area_light_panel(light: Light) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(light.position, dtype=np.float64)
    u = np.asarray(light.u, dtype=np.float64)
    v = np.asarray(light.v, dtype=np.float64)
    verts = np.stack([p, p + u, p + u + v, p + v])
    tris = np.asarray([(0, 1, 2), (0, 2, 3)], dtype=np.int64)
    return verts, tris


def _load_texture(path: Path) -> tuple[np.ndarray, int, int]:
    img = read_png(path, srgb=True)
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    h, w = img.shape[:2]
    return np.ascontiguousarray(img.reshape(-1, 3), dtype=np.float64), w, h


def compile_scene(scene: Scene, base_dir: str | Path = ".") -> TraceData:
    base_dir = Path(base_dir)
    verts_chunks: list[np.ndarray] = []
    tri_chunks: list[np.ndarray] = []
    uv_chunks: list[np.ndarray] = []
    mat_per_tri: list[np.ndarray] = []
    bg_per_tri: list[np.ndarray] = []
    furn_per_tri: list[np.ndarray] = []
    mesh_tri_ranges: dict[int, list[tuple[int, int]]] = {}
    cursor = 0

    materials = list(scene.materials) if scene.materials else [Material()]

    def push(verts, tris, uv, mat_idx, bg, furn):
        nonlocal cursor
        count = tris.shape[0]
        if count == 0:
            return (cursor, 0)
        verts_chunks.append(np.asarray(verts, dtype=np.float64))
        tri_chunks.append(np.asarray(tris, dtype=np.int64))
        if uv is None:
            uv = np.zeros((count, 3, 2), dtype=np.float64)
        uv_chunks.append(np.asarray(uv, dtype=np.float64))
        mat_per_tri.append(np.full(count, mat_idx, dtype=np.int64))
        bg_per_tri.append(np.full(count, 1 if bg else 0, dtype=np.uint8))
        furn_per_tri.append(np.full(count, furn, dtype=np.int64))
        span = (cursor, count)
        cursor += count
        return span

    referenced = {f.mesh for f in scene.furniture}
    for fi, inst in enumerate(scene.furniture):
        mesh = scene.meshes[inst.mesh]
        span = push(inst.transformed_vertices(mesh), mesh.triangles, mesh.uv,
                    mesh.material, mesh.background, fi)
        mesh_tri_ranges.setdefault(inst.mesh, []).append(span)
    for mi, mesh in enumerate(scene.meshes):
        if mi in referenced:
            continue
        span = push(mesh.vertices, mesh.triangles, mesh.uv,
                    mesh.material, mesh.background, -1)
        mesh_tri_ranges.setdefault(mi, []).append(span)
    for room in scene.rooms:
        verts, tris = _room_shell(room)
        push(verts, tris, None, room.material, True, -1)

    # light panels and per-light triangle spans
    light_spans: dict[int, tuple[int, int]] = {}
    for li, light in enumerate(scene.lights):
        if light.kind == LIGHT_AREA:
            if light.active:
                mat_idx = len(materials)
                materials.append(Material(albedo=(0.0, 0.0, 0.0),
                                          emission=tuple(light.intensity),
                                          kind=EMISSIVE))
            else:
                mat_idx = len(materials)
                materials.append(Material(albedo=(0.3, 0.3, 0.3),
                                          kind=LAMBERTIAN))
            verts, tris = _area_light_panel(light)
            light_spans[li] = push(verts, tris, None, mat_idx, False, -1)

    # per-triangle material table, then inactive emissive-mesh overrides
    n_tris = cursor
    if n_tris:
        tri_mat = np.concatenate(mat_per_tri)
        tri_bg = np.concatenate(bg_per_tri)
        tri_furn = np.concatenate(furn_per_tri)
        tri_uv = np.concatenate(uv_chunks)
    else:
        tri_mat = np.zeros(0, dtype=np.int64)
        tri_bg = np.zeros(0, dtype=np.uint8)
        tri_furn = np.zeros(0, dtype=np.int64)
        tri_uv = np.zeros((0, 3, 2), dtype=np.float64)

    for light in scene.lights:
        if light.kind == LIGHT_EMISSIVE_MESH and not light.active:
            src = scene.meshes[light.mesh]
            dark = len(materials)
            materials.append(Material(albedo=materials[src.material].albedo,
                                      kind=LAMBERTIAN))
            for start, count in mesh_tri_ranges.get(light.mesh, []):
                tri_mat[start:start + count] = dark

    # flatten geometry
    v0 = np.zeros((n_tris, 3))
    e1 = np.zeros((n_tris, 3))
    e2 = np.zeros((n_tris, 3))
    row = 0
    for verts, tris in zip(verts_chunks, tri_chunks):
        a = verts[tris[:, 0]]
        b = verts[tris[:, 1]]
        c = verts[tris[:, 2]]
        count = tris.shape[0]
        v0[row:row + count] = a
        e1[row:row + count] = b - a
        e2[row:row + count] = c - a
        row += count
    cross = np.cross(e1, e2)
    area2 = np.linalg.norm(cross, axis=1)
    tri_n = np.zeros_like(cross)
    ok = area2 > 0
    tri_n[ok] = cross[ok] / area2[ok, None]

    # material tables and textures
    n_mat = len(materials)
    mat_albedo = np.zeros((n_mat, 3))
    mat_emit = np.zeros((n_mat, 3))
    mat_kind = np.zeros(n_mat, dtype=np.int64)
    mat_tex = np.full(n_mat, -1, dtype=np.int64)
    tex_chunks: list[np.ndarray] = []
    tex_off: list[int] = []
    tex_w: list[int] = []
    tex_h: list[int] = []
    tex_cursor = 0
    tex_cache: dict[str, int] = {}
    for mi, mat in enumerate(materials):
        mat_albedo[mi] = mat.albedo
        mat_emit[mi] = mat.emission
        mat_kind[mi] = 1 if mat.kind == EMISSIVE else 0
        if mat.texture:
            if mat.texture not in tex_cache:
                data, w, h = _load_texture(base_dir / mat.texture)
                tex_cache[mat.texture] = len(tex_w)
                tex_chunks.append(data)
                tex_off.append(tex_cursor)
                tex_w.append(w)
                tex_h.append(h)
                tex_cursor += data.shape[0]
            mat_tex[mi] = tex_cache[mat.texture]
    tex_data = (np.concatenate(tex_chunks) if tex_chunks
                else np.zeros((0, 3), dtype=np.float64))

    # active-light tables
    ltri_idx: list[int] = []
    ltri_cum: list[float] = []
    light_rows: list[tuple[int, np.ndarray, np.ndarray, float, np.ndarray, int, int, float]] = []
    for li in scene.active_lights():
        light = scene.lights[li]
        if light.kind in (LIGHT_POINT, LIGHT_SPOT):
            kind = 0 if light.kind == LIGHT_POINT else 2
            direction = np.zeros(3)
            cos_half = -1.0
            if light.kind == LIGHT_SPOT:
                direction = np.asarray(light.direction, dtype=np.float64)
                direction = direction / np.linalg.norm(direction)
                cos_half = math.cos(math.radians(light.cone_deg) / 2.0)
            light_rows.append((kind, np.asarray(light.position, float),
                               direction, cos_half,
                               np.asarray(light.intensity, float), 0, 0, 0.0))
            continue
        if light.kind == LIGHT_AREA:
            spans = [light_spans[li]]
        else:  # emissive mesh
            spans = mesh_tri_ranges.get(light.mesh, [])
        start = len(ltri_idx)
        total = 0.0
        for span_start, span_count in spans:
            for tri in range(span_start, span_start + span_count):
                a = 0.5 * area2[tri]
                if a <= 0.0:
                    continue
                total += a
                ltri_idx.append(tri)
                ltri_cum.append(total)
        count = len(ltri_idx) - start
        if count == 0 or total <= 0.0:
            continue
        light_rows.append((1, np.zeros(3), np.zeros(3), -1.0,
                           np.zeros(3), start, count, total))

    n_lights = len(light_rows)
    light_kind = np.zeros(n_lights, dtype=np.int64)
    light_pos = np.zeros((n_lights, 3))
    light_dir = np.zeros((n_lights, 3))
    light_cos = np.zeros(n_lights)
    light_flux = np.zeros((n_lights, 3))
    light_tri_start = np.zeros(n_lights, dtype=np.int64)
    light_tri_count = np.zeros(n_lights, dtype=np.int64)
    light_area = np.zeros(n_lights)
    for i, (kind, pos, direction, cos_half, flux, start, count, total) in enumerate(light_rows):
        light_kind[i] = kind
        light_pos[i] = pos
        light_dir[i] = direction
        light_cos[i] = cos_half
        light_flux[i] = flux
        light_tri_start[i] = start
        light_tri_count[i] = count
        light_area[i] = total

    lo = np.minimum(np.minimum(v0, v0 + e1), v0 + e2)
    hi = np.maximum(np.maximum(v0, v0 + e1), v0 + e2)
    node_min, node_max, node_left, node_right, prim = build_bvh(lo, hi)

    def c(a):
        return np.ascontiguousarray(a)

    return TraceData(
        tri_v0=c(v0), tri_e1=c(e1), tri_e2=c(e2), tri_n=c(tri_n),
        tri_mat=c(tri_mat), tri_bg=c(tri_bg), tri_furn=c(tri_furn),
        tri_uv=c(tri_uv),
        mat_albedo=c(mat_albedo), mat_emit=c(mat_emit),
        mat_kind=c(mat_kind), mat_tex=c(mat_tex),
        tex_data=c(tex_data),
        tex_off=np.asarray(tex_off, dtype=np.int64),
        tex_w=np.asarray(tex_w, dtype=np.int64),
        tex_h=np.asarray(tex_h, dtype=np.int64),
        node_min=c(node_min), node_max=c(node_max),
        node_left=c(node_left), node_right=c(node_right), prim=c(prim),
        light_kind=light_kind, light_pos=light_pos, light_dir=light_dir,
        light_cos=light_cos, light_flux=light_flux,
        light_tri_start=light_tri_start, light_tri_count=light_tri_count,
        light_area=light_area,
        ltri_idx=np.asarray(ltri_idx, dtype=np.int64),
        ltri_cum=np.asarray(ltri_cum, dtype=np.float64),
    )


def camera_array(pose: CameraPose) -> np.ndarray:
    """Flatten a camera pose for the kernels: pos, right, up, fwd, fx, fy, cx, cy."""
    right, up, fwd = pose.basis()
    fx, fy, cx, cy = pose.intrinsics()
    return np.concatenate([
        np.asarray(pose.position, dtype=np.float64),
        right, up, fwd,
        np.asarray([fx, fy, cx, cy], dtype=np.float64),
    ])


# ---------------------------------------------------------------------------
# queries

def intersect(data: TraceData, ray: Ray) -> Optional[Hit]:
    o = ray.origin
    d = ray.direction
    t, tri, b1, b2 = _kernels.bvh_hit(
        data, o[0], o[1], o[2], d[0], d[1], d[2],
        float(ray.tmin), float(ray.tmax), _scratch_stack())
    if tri < 0:
        return None
    return Hit(
        t=float(t),
        point=o + d * t,
        normal=data.tri_n[tri].copy(),
        triangle=int(tri),
        material=int(data.tri_mat[tri]),
        bary=(float(1.0 - b1 - b2), float(b1), float(b2)),
        background=bool(data.tri_bg[tri]),
        furniture=int(data.tri_furn[tri]),
    )


def occluded(data: TraceData, origin, direction, max_dist: float) -> bool:
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    return bool(_kernels.bvh_occluded(
        data, o[0], o[1], o[2], d[0], d[1], d[2],
        0.0, float(max_dist), _scratch_stack()))


def sample_light(data: TraceData, point, rng: RngStream) -> LightSample:
    if data.light_kind.shape[0] == 0:
        raise ValueError("scene has no active lights")
    p = np.asarray(point, dtype=np.float64)
    state, lr, lg, lb, wx, wy, wz, pdf, dist, li = _kernels.light_sample(
        data, p[0], p[1], p[2], U64(rng.state))
    rng.state = U64(state)
    return LightSample(
        radiance=np.array([lr, lg, lb]),
        direction=np.array([wx, wy, wz]),
        distance=float(dist),
        pdf=float(pdf),
        light=int(li),
    )


def sample_brdf(material: Material, normal, rng: RngStream) -> BrdfSample:
    if material.kind == EMISSIVE:
        raise ValueError("emissive materials have no BRDF to sample")
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    u1, u2 = rng.next_pair()
    dx, dy, dz = _kernels._cosine_dir(n[0], n[1], n[2], u1, u2)
    d = np.array([dx, dy, dz])
    cos_t = float(np.dot(d, n))
    return BrdfSample(
        direction=d,
        pdf=max(cos_t, 0.0) / math.pi,
        value=np.asarray(material.albedo, dtype=np.float64) / math.pi,
    )
