"""Dataset preparation: pose sampling, light placement, furniture layout.

Camera poses are drawn uniformly over a constrained range and kept only if
the view actually frames furniture: the optical axis must land inside the
room at a sensible distance, and a ray-census of the viewport must show
enough (but not too much) furniture coverage.  Light placement activates
lamps near the look-at point and guarantees at least one source.  The
rearrangement pass resolves furniture collisions by spiral search with a
bounded displacement, removing items only when no legal spot exists.
Composed object scenes drop a few rescaled assets into a large textured
cube with lights kept out of frame.

All randomized entry points take an integer seed and derive their streams
from it, so every output is reproducible from (scene, seed).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .geom import meshes_intersect, point_in_polygon
from .rng import RngStream, U64, mix
from .scene import (
    CameraPose,
    FurnitureInstance,
    Light,
    LIGHT_AREA,
    LIGHT_EMISSIVE_MESH,
    LIGHT_POINT,
    LIGHT_SPOT,
    Material,
    Room,
    Scene,
    TriangleMesh,
    scene_with,
)
from .tracer import Ray, TraceData, camera_array, compile_scene, intersect

# Pose sampling ranges and acceptance thresholds.
CAMERA_Z_RANGE = (1.2, 1.8)  # meters above the room floor
PITCH_RANGE = (60.0, 120.0)
YAW_RANGE = (0.0, 180.0)
CENTER_DIST_RANGE = (1.0, 5.0)  # meters along the optical axis
OCCUPANCY_RANGE = (0.35, 0.8)  # accepted total furniture share
OCCUPANCY_MAX_SINGLE = 0.3  # no single item may dominate the frame
OCCUPANCY_RAYS = 1024
MIN_FURNITURE = 5
MAX_POSE_ATTEMPTS = 2000

# Light placement.
LIGHT_ACTIVATION_RADIUS = 2.5  # xy meters from the look-at point
POINT_LIGHT_DIST = (1.0, 4.0)
POINT_LIGHT_DROP = (0.1, 0.3)  # meters below the ceiling
MAX_LIGHT_TRIES = 1000
FALLBACK_PANEL_SIDE = 0.4
FALLBACK_PANEL_RADIANCE = (10.0, 10.0, 10.0)
POINT_LIGHT_FLUX = (30.0, 30.0, 30.0)

# Rearrangement spiral.
SPIRAL_STEP = 0.05
SPIRAL_ANGLES = 16
SPIRAL_MAX_RADIUS = 0.5

# Object-scene composition.
CUBE_SIDE = 10.0
OBJECT_EXTENT_RANGE = (0.5, 1.0)
OBJECT_LIFT_RANGE = (0.0, 0.05)
MAX_PLACE_REJECTIONS = 10_000


# --------------------------------------------------------------- occupancy


@dataclass
class OccupancyStats:
    """Viewport ray census for one pose."""

    counts: np.ndarray  # per-furniture nearest-hit counts
    m_rays: int
    point: Optional[np.ndarray]  # central-ray intersection, world space
    distance: float  # meters to `point`, 0 when the ray escapes

    @property
    def total_share(self) -> float:
        return float(self.counts.sum()) / self.m_rays

    @property
    def max_share(self) -> float:
        if self.counts.size == 0:
            return 0.0
        return float(self.counts.max()) / self.m_rays


def occupancy(scene: Scene, pose: CameraPose, m_rays: int = OCCUPANCY_RAYS,
              seed: int = 0, data: Optional[TraceData] = None) -> OccupancyStats:
    """Count furniture hits over uniformly sampled view rays.

    Deterministic for a given (seed, pose): ray k draws its viewport point
    from its own counter-derived stream.  Also shoots the central ray and
    records where the optical axis lands.
    """
    if data is None:
        data = compile_scene(scene)
    cam = camera_array(pose)
    counts = np.zeros(max(len(scene.furniture), 1), dtype=np.int64)
    _kernels.occupancy_kernel(data, cam, pose.width, pose.height,
                              m_rays, U64(seed & (2**64 - 1)), counts)
    if not scene.furniture:
        counts = counts[:0]
    _, _, fwd = pose.basis()
    hit = intersect(data, Ray(pose.position, fwd))
    if hit is None:
        return OccupancyStats(counts, m_rays, None, 0.0)
    return OccupancyStats(counts, m_rays, hit.point, float(hit.t))


def _pose_acceptable(room: Room, stats: OccupancyStats) -> bool:
    if stats.point is None or not room.contains(stats.point):
        return False
    if not CENTER_DIST_RANGE[0] <= stats.distance <= CENTER_DIST_RANGE[1]:
        return False
    if not OCCUPANCY_RANGE[0] <= stats.total_share <= OCCUPANCY_RANGE[1]:
        return False
    return stats.max_share <= OCCUPANCY_MAX_SINGLE


def furniture_in_room(scene: Scene, room: Room) -> list[int]:
    """Furniture whose reference point lies in the room footprint."""
    return [i for i, f in enumerate(scene.furniture)
            if point_in_polygon(f.translation, room.boundary)]


def pose_census_seed(seed: int, pose: CameraPose) -> int:
    """Ray-census stream for one pose.

    Derived from the pose's own coordinates so that anyone holding (seed,
    pose) can rebuild the exact census that admitted the pose.
    """
    bits = [int(np.float64(v).view(np.uint64))
            for v in (*pose.position, pose.pitch_deg, pose.yaw_deg)]
    return mix(seed, "occupancy", *bits)


def sample_cameras(scene: Scene, room: Room, n_target: int = 2,
                   seed: int = 0,
                   data: Optional[TraceData] = None) -> list[CameraPose]:
    """Draw up to n_target valid poses inside one room.

    Rooms with fewer than five furniture pieces are skipped outright: they
    cannot produce the intended cluttered viewpoints.  Each returned pose
    satisfies the optical-axis and occupancy acceptance rules; fewer poses
    (or none) come back when the room defeats the sampler.
    """
    if len(furniture_in_room(scene, room)) < MIN_FURNITURE:
        return []
    if data is None:
        data = compile_scene(scene)
    base = scene.camera if scene.camera is not None else CameraPose()
    rng = RngStream(mix(seed, "sample_cameras"))
    lo = room.boundary.min(axis=0)
    hi = room.boundary.max(axis=0)
    poses: list[CameraPose] = []
    for _ in range(n_target):
        for _attempt in range(MAX_POSE_ATTEMPTS):
            x = rng.uniform(lo[0], hi[0])
            y = rng.uniform(lo[1], hi[1])
            if not point_in_polygon((x, y), room.boundary):
                continue
            pose = replace(
                base,
                position=(x, y, room.z0 + rng.uniform(*CAMERA_Z_RANGE)),
                pitch_deg=rng.uniform(*PITCH_RANGE),
                yaw_deg=rng.uniform(*YAW_RANGE),
                roll_deg=0.0,
            )
            stats = occupancy(scene, pose, OCCUPANCY_RAYS,
                              pose_census_seed(seed, pose), data)
            if _pose_acceptable(room, stats):
                poses.append(pose)
                break
    return poses


# --------------------------------------------------------------- lights


def _light_centroid(scene: Scene, light: Light) -> np.ndarray:
    if light.kind == LIGHT_EMISSIVE_MESH and light.mesh is not None:
        return scene.meshes[light.mesh].vertices.mean(axis=0)
    pos = np.asarray(light.position, dtype=np.float64)
    if light.kind == LIGHT_AREA and light.u is not None and light.v is not None:
        return pos + 0.5 * (np.asarray(light.u) + np.asarray(light.v))
    return pos


def _room_for_point(scene: Scene, p: np.ndarray) -> Room:
    for room in scene.rooms:
        if room.contains(p):
            return room
    if not scene.rooms:
        raise ValueError("scene has no rooms to place lights in")
    # p outside every room (grazing hit on a shared wall): fall back to the
    # room whose footprint center is closest
    def center_dist(room: Room) -> float:
        c = room.boundary.mean(axis=0)
        return float(np.hypot(c[0] - p[0], c[1] - p[1]))
    return min(scene.rooms, key=center_dist)


def place_lights(scene: Scene, pose: CameraPose, p, seed: int = 0) -> Scene:
    """Select the lights for one camera, guaranteeing at least one source.

    Existing lights switch on iff their centroid is within 2.5 m (xy) of
    the look-at point `p` and inside p's room.  If nothing qualifies, a
    small ceiling panel is dropped near p.  One extra point light is then
    tucked near the ceiling, out of frame; if a thousand draws cannot find
    an off-screen spot, the extra light is skipped with a warning.
    """
    p = np.asarray(p, dtype=np.float64)
    room = _room_for_point(scene, p)
    rng = RngStream(mix(seed, "place_lights"))

    lights = []
    for light in scene.lights:
        c = _light_centroid(scene, light)
        near = math.hypot(c[0] - p[0], c[1] - p[1]) <= LIGHT_ACTIVATION_RADIUS
        lights.append(replace(light, active=near and room.contains(c)))

    if not any(l.active for l in lights):
        half = FALLBACK_PANEL_SIDE / 2.0
        cx, cy = p[0], p[1]
        for _ in range(MAX_LIGHT_TRIES):
            r = LIGHT_ACTIVATION_RADIUS * math.sqrt(rng.next_float())
            ang = 2.0 * math.pi * rng.next_float()
            x, y = p[0] + r * math.cos(ang), p[1] + r * math.sin(ang)
            if point_in_polygon((x, y), room.boundary):
                cx, cy = x, y
                break
        # u x v points down into the room; panel sits just under the ceiling
        lights.append(Light(
            kind=LIGHT_AREA,
            position=(cx - half, cy - half, room.z1 - 1e-3),
            u=(0.0, FALLBACK_PANEL_SIDE, 0.0),
            v=(FALLBACK_PANEL_SIDE, 0.0, 0.0),
            intensity=FALLBACK_PANEL_RADIANCE,
            active=True,
        ))

    for _ in range(MAX_LIGHT_TRIES):
        dist = rng.uniform(*POINT_LIGHT_DIST)
        ang = 2.0 * math.pi * rng.next_float()
        pos = (p[0] + dist * math.cos(ang),
               p[1] + dist * math.sin(ang),
               room.z1 - rng.uniform(*POINT_LIGHT_DROP))
        if room.contains(pos) and not pose.sees(pos):
            lights.append(Light(kind=LIGHT_POINT, position=pos,
                                intensity=POINT_LIGHT_FLUX, active=True))
            break
    else:
        warnings.warn("no off-screen spot for the extra point light; skipped",
                      stacklevel=2)
    return scene_with(scene, lights=lights)


# --------------------------------------------------------------- rearrange


@dataclass
class RearrangeReport:
    moved: dict[int, float] = field(default_factory=dict)  # index -> meters
    removed: list[int] = field(default_factory=list)
    iterations: int = 0


def _wall_meshes(scene: Scene) -> list[tuple[np.ndarray, np.ndarray]]:
    """Vertical boundary quads of every room (floor and ceiling excluded:
    resting on them is legal contact, not a collision)."""
    out = []
    for room in scene.rooms:
        b = room.boundary
        k = len(b)
        verts = np.empty((2 * k, 3))
        verts[:k, :2] = b
        verts[:k, 2] = room.z0
        verts[k:, :2] = b
        verts[k:, 2] = room.z1
        tris = []
        for i in range(k):
            j = (i + 1) % k
            tris.append((i, j, k + j))
            tris.append((i, k + j, k + i))
        out.append((verts, np.asarray(tris, dtype=np.int64)))
    return out


def _spiral_offsets():
    """Deterministic candidate offsets: the origin, then outward rings."""
    yield 0.0, 0.0
    rings = round(SPIRAL_MAX_RADIUS / SPIRAL_STEP)
    for ring in range(1, rings + 1):
        r = SPIRAL_STEP * ring
        for a in range(SPIRAL_ANGLES):
            th = 2.0 * math.pi * a / SPIRAL_ANGLES
            yield r * math.cos(th), r * math.sin(th)


class _Layout:
    """Mutable working state for one rearrangement run."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.walls = _wall_meshes(scene)
        self.initial = [np.asarray(f.translation, dtype=np.float64)
                        for f in scene.furniture]
        self.current = [t.copy() for t in self.initial]
        self.removed: set[int] = set()
        self.areas = []
        for f in scene.furniture:
            x0, y0, x1, y1 = f.compute_bbox_2d(scene.meshes[f.mesh])
            self.areas.append((x1 - x0) * (y1 - y0))

    def posed(self, i: int, translation) -> tuple[np.ndarray, np.ndarray]:
        f = self.scene.furniture[i]
        inst = replace(f, translation=(float(translation[0]),
                                       float(translation[1])))
        mesh = self.scene.meshes[f.mesh]
        return inst.transformed_vertices(mesh), mesh.triangles

    def collisions(self, i: int, translation) -> tuple[list[int], bool]:
        """(colliding furniture indices, hits a wall) at a candidate spot."""
        va, ta = self.posed(i, translation)
        hits = []
        for j in range(len(self.scene.furniture)):
            if j == i or j in self.removed:
                continue
            vb, tb = self.posed(j, self.current[j])
            if meshes_intersect(va, ta, vb, tb):
                hits.append(j)
        wall = any(meshes_intersect(va, ta, vw, tw)
                   for vw, tw in self.walls)
        return hits, wall

    def free_spot(self, i: int) -> Optional[np.ndarray]:
        """First collision-free spiral candidate around the input spot."""
        base = self.initial[i]
        last = base
        for dx, dy in _spiral_offsets():
            cand = base + (dx, dy)
            last = cand
            hits, wall = self.collisions(i, cand)
            if not hits and not wall:
                return cand
        self.current[i] = last  # park at the final candidate examined
        return None

    def colliding_items(self) -> list[int]:
        out = []
        for i in range(len(self.scene.furniture)):
            if i in self.removed:
                continue
            hits, wall = self.collisions(i, self.current[i])
            if hits or wall:
                out.append(i)
        out.sort(key=lambda i: (self.areas[i], i))  # smallest footprint first
        return out


def rearrange(scene: Scene) -> tuple[Scene, RearrangeReport]:
    """Resolve furniture collisions; returns the new scene and a report.

    Items are processed smallest footprint first.  Each collided item
    spiral-searches around its input position (0.05 m rings, 16 angles,
    0.5 m cap) for the first free spot.  When the spiral fails the item
    parks at the last examined spot and its smallest colliding neighbor
    gets a turn; if that neighbor fails too, the first item is removed and
    the neighbor snaps back to where it started.  The loop repeats until
    nothing collides, so the output is always collision-free; a run on its
    own output changes nothing.
    """
    report = RearrangeReport()
    if not scene.furniture:
        return scene, report
    lay = _Layout(scene)
    n = len(scene.furniture)
    order = sorted(range(n), key=lambda i: (lay.areas[i], i))

    queue = [i for i in order]
    blame: dict[int, int] = {}
    cap = 20 * n
    while queue and report.iterations < cap:
        i = queue.pop(0)
        report.iterations += 1
        if i in lay.removed:
            continue
        spot = lay.free_spot(i)
        if spot is not None:
            lay.current[i] = spot
            blame.pop(i, None)
            continue
        if i in blame:
            # second failure of a delegated neighbor: drop the original
            # item and put this one back where it began
            culprit = blame.pop(i)
            lay.removed.add(culprit)
            lay.current[i] = lay.initial[i].copy()
            continue
        hits, _ = lay.collisions(i, lay.current[i])
        hits = [j for j in hits if j not in lay.removed]
        if hits:
            j = min(hits, key=lambda j: (lay.areas[j], j))
            blame[j] = i
            queue.insert(0, j)
        else:
            lay.removed.add(i)  # wedged against walls alone
        if not queue:
            queue = lay.colliding_items()
    # emergency valve: the iteration cap only trips on pathological inputs;
    # shed the larger of each colliding pair until the layout is clean
    while True:
        bad = lay.colliding_items()
        if not bad:
            break
        worst = max(bad, key=lambda i: (lay.areas[i], i))
        lay.removed.add(worst)

    keep = [i for i in range(n) if i not in lay.removed]
    remap = {old: new for new, old in enumerate(keep)}
    furniture = []
    for i in keep:
        f = scene.furniture[i]
        moved = float(np.hypot(*(lay.current[i] - lay.initial[i])))
        if moved > 0:
            report.moved[i] = moved
        inst = replace(f, translation=(float(lay.current[i][0]),
                                       float(lay.current[i][1])))
        inst.bbox_2d = inst.compute_bbox_2d(scene.meshes[f.mesh])
        furniture.append(inst)
    report.removed = sorted(lay.removed)
    rooms = [replace(r, furniture=[remap[i] for i in r.furniture
                                   if i in remap])
             for r in scene.rooms]
    return scene_with(scene, furniture=furniture, rooms=rooms), report


# --------------------------------------------------------------- object scenes


def _quad_mesh(corners, material: int, background: bool = True) -> TriangleMesh:
    v = np.asarray(corners, dtype=np.float64)
    return TriangleMesh(vertices=v,
                        triangles=np.array([[0, 1, 2], [0, 2, 3]]),
                        material=material, background=background)


def _cube_room_meshes(side: float, materials: Sequence[int]) -> list[TriangleMesh]:
    """Six inward-facing quads forming a closed cube, one material each."""
    s = side
    faces = [
        [(0, 0, 0), (s, 0, 0), (s, s, 0), (0, s, 0)],  # floor, +z
        [(0, 0, s), (0, s, s), (s, s, s), (s, 0, s)],  # ceiling, -z
        [(0, 0, 0), (0, s, 0), (0, s, s), (0, 0, s)],  # x=0, +x
        [(s, 0, 0), (s, 0, s), (s, s, s), (s, s, 0)],  # x=s, -x
        [(0, 0, 0), (0, 0, s), (s, 0, s), (s, 0, 0)],  # y=0, +y
        [(0, s, 0), (s, s, 0), (s, s, s), (0, s, s)],  # y=s, -y
    ]
    return [_quad_mesh(c, m) for c, m in zip(faces, materials)]


def _rescaled_asset(mesh: TriangleMesh, target_extent: float,
                    material: int) -> TriangleMesh:
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0:
        raise ValueError("asset mesh has zero extent")
    scale = target_extent / extent
    center = 0.5 * (lo + hi)
    verts = (mesh.vertices - (center[0], center[1], lo[2])) * scale
    return TriangleMesh(vertices=verts, triangles=mesh.triangles.copy(),
                        material=material, watertight=mesh.watertight)


def gen_object_scene(assets: Sequence[TriangleMesh],
                     materials: Sequence[Material],
                     seed: int = 0) -> Scene:
    """Compose a cube-room scene from a small asset library.

    Drops 3 to 5 rescaled assets (max extent 0.5 to 1.0 m) onto the floor
    of a 10 m cube whose six faces each take one of the six supplied
    materials (shuffled).  Rejection sampling keeps the objects pairwise
    disjoint; if a layout refuses to fit within the rejection budget the
    composer retries with one object fewer.  One orbit camera frames the
    pile, and 1-2 area plus 1-2 spot lights are placed near the ceiling,
    each verified off-screen for that camera.
    """
    if not assets:
        raise ValueError("asset library is empty")
    if len(materials) < 6:
        raise ValueError("need six face materials")
    rng = RngStream(mix(seed, "object_scene"))
    mats = list(materials)

    face_order = list(range(6))
    for i in range(5, 0, -1):  # Fisher-Yates with the scene stream
        j = rng.next_below(i + 1)
        face_order[i], face_order[j] = face_order[j], face_order[i]
    meshes = _cube_room_meshes(CUBE_SIDE, face_order)

    n_objects = 3 + rng.next_below(3)
    while True:
        placed: list[tuple[TriangleMesh, FurnitureInstance]] = []
        rejections = 0
        while len(placed) < n_objects and rejections < MAX_PLACE_REJECTIONS:
            asset = assets[rng.next_below(len(assets))]
            target = rng.uniform(*OBJECT_EXTENT_RANGE)
            obj = _rescaled_asset(asset, target, rng.next_below(6))
            half = float(np.abs(obj.vertices[:, :2]).max()) + 0.01
            inst = FurnitureInstance(
                mesh=len(meshes) + len(placed),
                rotation_deg=rng.uniform(0.0, 360.0),
                translation=(rng.uniform(half, CUBE_SIDE - half),
                             rng.uniform(half, CUBE_SIDE - half)),
                z=rng.uniform(*OBJECT_LIFT_RANGE),
                label=f"object_{len(placed)}",
            )
            va = inst.transformed_vertices(obj)
            ok = True
            for other_mesh, other_inst in placed:
                vb = other_inst.transformed_vertices(other_mesh)
                if meshes_intersect(va, obj.triangles, vb,
                                    other_mesh.triangles):
                    ok = False
                    break
            if ok:
                placed.append((obj, inst))
            else:
                rejections += 1
        if len(placed) == n_objects:
            break
        n_objects = max(3, n_objects - 1)

    furniture = []
    for obj, inst in placed:
        meshes.append(obj)
        inst.bbox_2d = inst.compute_bbox_2d(obj)
        furniture.append(inst)

    c = CUBE_SIDE / 2.0
    ang = rng.uniform(0.0, 2.0 * math.pi)
    radius = rng.uniform(4.0, 7.0)
    cam_pos = np.array([c + radius * math.cos(ang),
                        c + radius * math.sin(ang),
                        rng.uniform(2.0, 5.0)])
    look = np.array([c, c, 0.5]) - cam_pos
    look /= np.linalg.norm(look)
    camera = CameraPose(
        position=tuple(cam_pos),
        pitch_deg=math.degrees(math.acos(look[2])),
        yaw_deg=math.degrees(math.atan2(look[1], look[0])),
    )

    lights: list[Light] = []
    n_area = 1 + rng.next_below(2)
    n_spot = 1 + rng.next_below(2)
    for kind, count in ((LIGHT_AREA, n_area), (LIGHT_SPOT, n_spot)):
        for _ in range(count):
            for _ in range(MAX_LIGHT_TRIES):
                pos = (rng.uniform(1.0, CUBE_SIDE - 1.0),
                       rng.uniform(1.0, CUBE_SIDE - 1.0),
                       rng.uniform(CUBE_SIDE - 1.5, CUBE_SIDE - 0.5))
                if camera.sees(pos):
                    continue
                if kind == LIGHT_AREA:
                    lights.append(Light(kind=kind, position=pos,
                                        u=(0.0, 1.0, 0.0), v=(1.0, 0.0, 0.0),
                                        intensity=(15.0, 15.0, 15.0)))
                else:
                    lights.append(Light(kind=kind, position=pos,
                                        direction=(0.0, 0.0, -1.0),
                                        cone_deg=60.0,
                                        intensity=(400.0, 400.0, 400.0)))
                break
    return Scene(meshes=meshes, materials=mats, lights=lights,
                 furniture=furniture, camera=camera)
