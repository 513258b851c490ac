"""Scene model: geometry, materials, lights, rooms, camera, render settings.

Units are meters and linear radiometric RGB throughout. World +z is up.
Dataclasses are treated as immutable after construction; operations that
"modify" a scene (light placement, rearrangement) return new instances.

Camera convention: `pitch` is the polar angle of the optical axis measured
from world +z (90 = level, 120 = tilted 30 degrees down), `yaw` rotates
about +z (0 = +x), `roll` spins about the optical axis. Image x grows along
the camera's right vector, image y grows downward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geom import point_in_polygon, polygon_area, polygon_is_simple

# Triangles thinner than this (area, m^2) are dropped at load time; the
# tracer assumes every stored face has a meaningful normal.
MIN_TRIANGLE_AREA = 1e-12

LAMBERTIAN = "lambertian"
EMISSIVE = "emissive"

LIGHT_POINT = "point"
LIGHT_AREA = "area"
LIGHT_SPOT = "spot"
LIGHT_EMISSIVE_MESH = "emissive_mesh"


def face_normals_areas(vertices: np.ndarray, triangles: np.ndarray):
    """Unit geometric normals (right-hand winding) and face areas."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    cr = np.cross(b - a, c - a)
    double_area = np.linalg.norm(cr, axis=1)
    areas = 0.5 * double_area
    normals = np.zeros_like(cr)
    ok = double_area > 0
    normals[ok] = cr[ok] / double_area[ok, None]
    return normals, areas


def is_edge_manifold(triangles: np.ndarray) -> bool:
    """Every undirected edge shared by exactly two faces (watertight test)."""
    counts: dict[tuple[int, int], int] = {}
    for tri in triangles:
        for i in range(3):
            u, v = int(tri[i]), int(tri[(i + 1) % 3])
            key = (u, v) if u < v else (v, u)
            counts[key] = counts.get(key, 0) + 1
    return all(c == 2 for c in counts.values())


@dataclass
class TriangleMesh:
    """Triangle soup with per-face normals.

    `uv` optionally stores per-corner texture coordinates, shape (m, 3, 2).
    `source_path` remembers where the mesh came from so scenes serialize
    back to a file reference instead of inlining the data.
    """
    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray = field(default=None)  # type: ignore[assignment]
    uv: Optional[np.ndarray] = None
    material: int = 0
    background: bool = False
    watertight: bool = False
    source_path: Optional[str] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if self.normals is None:
            # out-of-range indices are a validation finding, not a crash here
            if self.triangles.size and (self.triangles.min() < 0
                                        or self.triangles.max() >= len(self.vertices)):
                self.normals = np.zeros((len(self.triangles), 3))
            else:
                self.normals, _ = face_normals_areas(self.vertices, self.triangles)

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])


@dataclass
class Material:
    albedo: tuple[float, float, float] = (0.7, 0.7, 0.7)
    emission: tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind: str = LAMBERTIAN
    texture: Optional[str] = None


@dataclass
class Light:
    """One scene light.

    point / spot carry flux `intensity` (W, RGB) at `position`; spot adds a
    `direction` and hard `cone_deg` cutoff. area is a parallelogram panel
    (corner `position`, edge vectors `u`, `v`) emitting `intensity` as
    radiance from its u-cross-v side. emissive_mesh promotes an existing
    emissive-material mesh to a sampled light.
    """
    kind: str = LIGHT_POINT
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    intensity: tuple[float, float, float] = (1.0, 1.0, 1.0)
    active: bool = True
    u: Optional[tuple[float, float, float]] = None
    v: Optional[tuple[float, float, float]] = None
    direction: Optional[tuple[float, float, float]] = None
    cone_deg: float = 45.0
    mesh: Optional[int] = None


@dataclass
class FurnitureInstance:
    """Posed mesh placement: rotation about +z, xy translation, z offset."""
    mesh: int
    rotation_deg: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)
    z: float = 0.0
    label: str = ""
    bbox_2d: Optional[tuple[float, float, float, float]] = None

    def pose_matrix(self) -> np.ndarray:
        """4x4 homogeneous transform of this placement."""
        c = math.cos(math.radians(self.rotation_deg))
        s = math.sin(math.radians(self.rotation_deg))
        m = np.eye(4)
        m[0, 0], m[0, 1] = c, -s
        m[1, 0], m[1, 1] = s, c
        m[0, 3], m[1, 3] = self.translation
        m[2, 3] = self.z
        return m

    def transformed_vertices(self, mesh: TriangleMesh) -> np.ndarray:
        m = self.pose_matrix()
        return mesh.vertices @ m[:3, :3].T + m[:3, 3]

    def compute_bbox_2d(self, mesh: TriangleMesh) -> tuple[float, float, float, float]:
        v = self.transformed_vertices(mesh)
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))


@dataclass
class Room:
    """Prism room: simple boundary polygon extruded from z0 to z1."""
    boundary: np.ndarray  # (k, 2)
    z0: float = 0.0
    z1: float = 2.8
    furniture: list[int] = field(default_factory=list)
    material: int = 0

    def __post_init__(self):
        self.boundary = np.asarray(self.boundary, dtype=np.float64).reshape(-1, 2)

    def contains(self, point) -> bool:
        """3D containment: inside the boundary polygon and the z slab."""
        if not (self.z0 <= float(point[2]) <= self.z1):
            return False
        return point_in_polygon(point, self.boundary)

    def area(self) -> float:
        return abs(polygon_area(self.boundary))


@dataclass
class CameraPose:
    position: tuple[float, float, float] = (0.0, 0.0, 1.5)
    pitch_deg: float = 90.0
    yaw_deg: float = 0.0
    roll_deg: float = 0.0
    fov_deg: float = 60.0
    width: int = 256
    height: int = 256

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) orthonormal world-space camera basis."""
        th = math.radians(self.pitch_deg)
        ph = math.radians(self.yaw_deg)
        fwd = np.array([math.sin(th) * math.cos(ph),
                        math.sin(th) * math.sin(ph),
                        math.cos(th)])
        right = np.array([math.sin(ph), -math.cos(ph), 0.0])
        up = np.cross(right, fwd)
        if self.roll_deg:
            cr = math.cos(math.radians(self.roll_deg))
            sr = math.sin(math.radians(self.roll_deg))
            right, up = right * cr + up * sr, up * cr - right * sr
        return right, up, fwd

    def intrinsics(self) -> tuple[float, float, float, float]:
        """(fx, fy, cx, cy) in pixels; fov_deg is the horizontal field."""
        fx = (self.width / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)
        return fx, fx, self.width / 2.0, self.height / 2.0

    def project(self, point) -> tuple[float, float, float]:
        """Pixel (u, v) and camera-space depth z of a world point."""
        right, up, fwd = self.basis()
        d = np.asarray(point, dtype=np.float64) - np.asarray(self.position)
        z = float(np.dot(d, fwd))
        fx, fy, cx, cy = self.intrinsics()
        if z == 0.0:
            return math.inf, math.inf, 0.0
        u = cx + fx * float(np.dot(d, right)) / z
        v = cy - fy * float(np.dot(d, up)) / z
        return u, v, z

    def sees(self, point) -> bool:
        u, v, z = self.project(point)
        return z > 0 and 0 <= u < self.width and 0 <= v < self.height


@dataclass
class RenderSettings:
    width: int = 256
    height: int = 256
    spp: int = 16
    max_bounce: int = 8
    r: float = 1.0  # transparency radius for the shadow-free indirect pass
    clip: float = 0.1  # shadow-mask denominator floor
    seed: Optional[int] = None
    rr_start: int = 3  # first bounce eligible for Russian roulette
    # Flagged variants of the default behavior:
    transparency_segment_mode: bool = False  # compare segment, not path, length to r
    per_sample_max: bool = False  # apply the indirect max per sample instead of per pixel


@dataclass
class Scene:
    meshes: list[TriangleMesh] = field(default_factory=list)
    materials: list[Material] = field(default_factory=list)
    lights: list[Light] = field(default_factory=list)
    rooms: list[Room] = field(default_factory=list)
    furniture: list[FurnitureInstance] = field(default_factory=list)
    render: RenderSettings = field(default_factory=RenderSettings)
    camera: Optional[CameraPose] = None

    def active_lights(self) -> list[int]:
        return [i for i, l in enumerate(self.lights) if l.active]


@dataclass
class Violation:
    entity: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.entity}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def validate_scene(scene: Scene) -> list[Violation]:
    """Check referential integrity and value ranges; empty list means valid."""
    out: list[Violation] = []
    n_mesh = len(scene.meshes)
    n_mat = len(scene.materials)
    n_furn = len(scene.furniture)

    for i, mesh in enumerate(scene.meshes):
        ent = f"meshes[{i}]"
        if not np.all(np.isfinite(mesh.vertices)):
            out.append(Violation(ent, "non-finite vertex"))
        indices_ok = not mesh.triangles.size or (
            mesh.triangles.min() >= 0 and mesh.triangles.max() < len(mesh.vertices))
        if not indices_ok:
            out.append(Violation(ent, "triangle index out of range"))
        if not 0 <= mesh.material < max(n_mat, 1):
            out.append(Violation(ent, "material index out of range",
                                 str(mesh.material)))
        if indices_ok and mesh.triangles.size:
            _, areas = face_normals_areas(mesh.vertices, mesh.triangles)
            if areas.min() < MIN_TRIANGLE_AREA:
                out.append(Violation(ent, "degenerate triangle",
                                     f"min area {areas.min():g}"))
        if mesh.watertight and not is_edge_manifold(mesh.triangles):
            out.append(Violation(ent, "watertight flag set but mesh is not edge-manifold"))

    for i, mat in enumerate(scene.materials):
        ent = f"materials[{i}]"
        alb = np.asarray(mat.albedo, dtype=np.float64)
        emi = np.asarray(mat.emission, dtype=np.float64)
        if alb.shape != (3,) or np.any(alb < 0) or np.any(alb > 1):
            out.append(Violation(ent, "albedo outside [0,1]"))
        if emi.shape != (3,) or np.any(emi < 0) or not np.all(np.isfinite(emi)):
            out.append(Violation(ent, "emission must be finite and >= 0"))
        if mat.kind not in (LAMBERTIAN, EMISSIVE):
            out.append(Violation(ent, "unknown material kind", mat.kind))
        elif mat.kind == EMISSIVE and not np.any(emi > 0):
            out.append(Violation(ent, "emissive material with zero emission"))
        elif mat.kind == LAMBERTIAN and np.any(emi > 0):
            out.append(Violation(ent, "lambertian material with emission",
                                 "declare it emissive"))

    for i, light in enumerate(scene.lights):
        ent = f"lights[{i}]"
        inten = np.asarray(light.intensity, dtype=np.float64)
        if np.any(inten < 0) or not np.all(np.isfinite(inten)):
            out.append(Violation(ent, "intensity must be finite and >= 0"))
        if light.kind in (LIGHT_POINT, LIGHT_SPOT, LIGHT_AREA):
            if not np.all(np.isfinite(np.asarray(light.position, dtype=np.float64))):
                out.append(Violation(ent, "non-finite position"))
        if light.kind == LIGHT_AREA:
            if light.u is None or light.v is None:
                out.append(Violation(ent, "area light needs u and v edges"))
            else:
                n = np.cross(np.asarray(light.u, float), np.asarray(light.v, float))
                if np.linalg.norm(n) <= 0:
                    out.append(Violation(ent, "degenerate area light"))
        elif light.kind == LIGHT_SPOT:
            if light.direction is None:
                out.append(Violation(ent, "spot light needs a direction"))
            if not 0 < light.cone_deg < 180:
                out.append(Violation(ent, "cone_deg outside (0, 180)"))
        elif light.kind == LIGHT_EMISSIVE_MESH:
            if light.mesh is None or not 0 <= light.mesh < n_mesh:
                out.append(Violation(ent, "mesh index out of range"))
            else:
                mat_idx = scene.meshes[light.mesh].material
                if 0 <= mat_idx < n_mat and scene.materials[mat_idx].kind != EMISSIVE:
                    out.append(Violation(ent, "emissive_mesh light on non-emissive material"))
        elif light.kind != LIGHT_POINT:
            out.append(Violation(ent, "unknown light kind", light.kind))

    for i, room in enumerate(scene.rooms):
        ent = f"rooms[{i}]"
        if len(room.boundary) < 3:
            out.append(Violation(ent, "boundary needs at least 3 vertices"))
        elif not polygon_is_simple(room.boundary):
            out.append(Violation(ent, "boundary polygon self-intersects"))
        if not room.z1 > room.z0:
            out.append(Violation(ent, "z1 must exceed z0"))
        if not 0 <= room.material < max(n_mat, 1):
            out.append(Violation(ent, "material index out of range"))
        for j in room.furniture:
            if not 0 <= j < n_furn:
                out.append(Violation(ent, "furniture index out of range", str(j)))

    for i, item in enumerate(scene.furniture):
        ent = f"furniture[{i}]"
        if not 0 <= item.mesh < n_mesh:
            out.append(Violation(ent, "mesh index out of range", str(item.mesh)))
            continue
        if item.bbox_2d is not None:
            fresh = item.compute_bbox_2d(scene.meshes[item.mesh])
            if not np.allclose(fresh, item.bbox_2d, atol=1e-9):
                out.append(Violation(ent, "cached bbox_2d does not match mesh bounds"))

    if scene.camera is not None:
        if not 0 < scene.camera.fov_deg < 180:
            out.append(Violation("camera", "fov_deg outside (0, 180)"))
        if scene.camera.width < 1 or scene.camera.height < 1:
            out.append(Violation("camera", "image size must be positive"))

    rs = scene.render
    if rs.spp < 1:
        out.append(Violation("render", "spp must be >= 1"))
    if rs.max_bounce < 1:
        out.append(Violation("render", "max_bounce must be >= 1"))
    if rs.r < 0:
        out.append(Violation("render", "r must be >= 0"))
    if rs.clip <= 0:
        out.append(Violation("render", "clip floor must be positive"))
    return out


def scene_with(scene: Scene, **changes) -> Scene:
    """dataclasses.replace that reads as intent at call sites."""
    return replace(scene, **changes)
