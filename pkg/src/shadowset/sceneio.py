"""Scene document and mesh file IO.

Scene documents are UTF-8 YAML with top-level keys `meshes`, `materials`,
`lights`, `rooms`, `furniture`, `camera`, `render`. Mesh files are a
Wavefront subset: `v x y z`, optional `vt u v`, and `f` lines whose faces
are fan-split into triangles; other statements are ignored.

parse_scene(serialize_scene(s)) reproduces s field-by-field (meshes loaded
from a path serialize back to that path; inline meshes stay inline).
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .scene import (
    CameraPose,
    FurnitureInstance,
    Light,
    Material,
    MIN_TRIANGLE_AREA,
    RenderSettings,
    Room,
    Scene,
    TriangleMesh,
    face_normals_areas,
)

log = logging.getLogger(__name__)


class SceneParseError(ValueError):
    """Malformed scene document or mesh file."""


def _parse_obj_text(text: str, name: str) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    vertices: list[list[float]] = []
    texcoords: list[list[float]] = []
    faces: list[list[tuple[int, int]]] = []  # (vertex idx, texcoord idx or -1)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise SceneParseError(f"{name}:{lineno}: vertex needs 3 coordinates")
            vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif tag == "vt":
            if len(parts) < 3:
                raise SceneParseError(f"{name}:{lineno}: texcoord needs 2 values")
            texcoords.append([float(parts[1]), float(parts[2])])
        elif tag == "f":
            if len(parts) < 4:
                raise SceneParseError(f"{name}:{lineno}: face needs >= 3 vertices")
            corners = []
            for token in parts[1:]:
                fields = token.split("/")
                vi = int(fields[0])
                vi = vi - 1 if vi > 0 else len(vertices) + vi
                ti = -1
                if len(fields) > 1 and fields[1]:
                    ti = int(fields[1])
                    ti = ti - 1 if ti > 0 else len(texcoords) + ti
                if not 0 <= vi < len(vertices):
                    raise SceneParseError(f"{name}:{lineno}: vertex index out of range")
                if ti >= len(texcoords):
                    raise SceneParseError(f"{name}:{lineno}: texcoord index out of range")
                corners.append((vi, ti))
            for k in range(1, len(corners) - 1):  # fan split
                faces.append([corners[0], corners[k], corners[k + 1]])
    if not vertices:
        raise SceneParseError(f"{name}: no vertices")
    if not faces:
        raise SceneParseError(f"{name}: no faces")

    verts = np.asarray(vertices, dtype=np.float64)
    tris = np.asarray([[c[0] for c in f] for f in faces], dtype=np.int32)
    uv = None
    if texcoords and any(c[1] >= 0 for f in faces for c in f):
        tc = np.asarray(texcoords, dtype=np.float64)
        uv = np.zeros((len(faces), 3, 2))
        for i, f in enumerate(faces):
            for k, (_, ti) in enumerate(f):
                if ti >= 0:
                    uv[i, k] = tc[ti]

    _, areas = face_normals_areas(verts, tris)
    keep = areas >= MIN_TRIANGLE_AREA
    dropped = int((~keep).sum())
    if dropped:
        log.warning("%s: dropped %d degenerate triangle(s)", name, dropped)
        tris = tris[keep]
        if uv is not None:
            uv = uv[keep]
        if not len(tris):
            raise SceneParseError(f"{name}: all faces degenerate")
    return verts, tris, uv


def load_mesh(path: str | Path, material: int = 0, background: bool = False,
              watertight: bool = False) -> TriangleMesh:
    """Read a Wavefront-style mesh file."""
    p = Path(path)
    verts, tris, uv = _parse_obj_text(p.read_text(encoding="utf-8"), p.name)
    return TriangleMesh(vertices=verts, triangles=tris, uv=uv,
                        material=material, background=background,
                        watertight=watertight, source_path=str(path))


def _vec(value, n, where) -> tuple:
    try:
        seq = [float(x) for x in value]
    except (TypeError, ValueError) as exc:
        raise SceneParseError(f"{where}: expected {n} numbers") from exc
    if len(seq) != n:
        raise SceneParseError(f"{where}: expected {n} numbers, got {len(seq)}")
    return tuple(seq)


def _mesh_from_doc(doc: dict, idx: int, base_dir: Path) -> TriangleMesh:
    where = f"meshes[{idx}]"
    material = int(doc.get("material", 0))
    background = bool(doc.get("background", False))
    watertight = bool(doc.get("watertight", False))
    if "path" in doc:
        mesh = load_mesh(base_dir / doc["path"], material=material,
                         background=background, watertight=watertight)
        mesh.source_path = str(doc["path"])
        return mesh
    if "inline" not in doc:
        raise SceneParseError(f"{where}: needs 'path' or 'inline'")
    inline = doc["inline"]
    try:
        verts = np.asarray(inline["vertices"], dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(inline["triangles"], dtype=np.int32).reshape(-1, 3)
    except (KeyError, ValueError) as exc:
        raise SceneParseError(f"{where}: bad inline geometry") from exc
    if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
        raise SceneParseError(f"{where}: triangle index out of range")
    uv = None
    if "uv" in inline:
        uv = np.asarray(inline["uv"], dtype=np.float64).reshape(len(tris), 3, 2)
    return TriangleMesh(vertices=verts, triangles=tris, uv=uv, material=material,
                        background=background, watertight=watertight)


def _section(doc: dict, key: str) -> list:
    """List-of-mappings section with type errors reported by position."""
    entries = doc.get(key, []) or []
    if not isinstance(entries, list):
        raise SceneParseError(f"'{key}' must be a list")
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SceneParseError(f"{key}[{i}] must be a mapping")
    return entries


def parse_scene(text: str, base_dir: str | Path = ".") -> Scene:
    """Parse a scene document; raises SceneParseError with positions."""
    base = Path(base_dir)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        pos = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise SceneParseError(f"scene document syntax error{pos}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SceneParseError("scene document must be a mapping")

    meshes = [_mesh_from_doc(m, i, base) for i, m in enumerate(_section(doc, "meshes"))]

    materials = []
    for i, m in enumerate(_section(doc, "materials")):
        materials.append(Material(
            albedo=_vec(m.get("albedo", (0.7, 0.7, 0.7)), 3, f"materials[{i}].albedo"),
            emission=_vec(m.get("emission", (0.0, 0.0, 0.0)), 3, f"materials[{i}].emission"),
            kind=str(m.get("kind", "lambertian")),
            texture=m.get("texture"),
        ))
    if not materials:
        materials = [Material()]

    lights = []
    for i, l in enumerate(_section(doc, "lights")):
        where = f"lights[{i}]"
        lights.append(Light(
            kind=str(l.get("kind", "point")),
            position=_vec(l.get("position", (0, 0, 0)), 3, f"{where}.position"),
            intensity=_vec(l.get("intensity", (1, 1, 1)), 3, f"{where}.intensity"),
            active=bool(l.get("active", True)),
            u=_vec(l["u"], 3, f"{where}.u") if "u" in l else None,
            v=_vec(l["v"], 3, f"{where}.v") if "v" in l else None,
            direction=_vec(l["direction"], 3, f"{where}.direction") if "direction" in l else None,
            cone_deg=float(l.get("cone_deg", 45.0)),
            mesh=int(l["mesh"]) if "mesh" in l else None,
        ))

    furniture = []
    for i, f in enumerate(_section(doc, "furniture")):
        where = f"furniture[{i}]"
        mesh_idx = int(f.get("mesh", -1))
        if not 0 <= mesh_idx < len(meshes):
            raise SceneParseError(f"{where}: unresolved mesh index {mesh_idx}")
        item = FurnitureInstance(
            mesh=mesh_idx,
            rotation_deg=float(f.get("rotation_deg", 0.0)),
            translation=_vec(f.get("translation", (0, 0)), 2, f"{where}.translation"),
            z=float(f.get("z", 0.0)),
            label=str(f.get("label", "")),
        )
        item.bbox_2d = item.compute_bbox_2d(meshes[mesh_idx])
        furniture.append(item)

    rooms = []
    for i, r in enumerate(_section(doc, "rooms")):
        where = f"rooms[{i}]"
        boundary = np.asarray(r.get("boundary", []), dtype=np.float64)
        if boundary.ndim != 2 or boundary.shape[1] != 2 or len(boundary) < 3:
            raise SceneParseError(f"{where}: boundary must be a list of [x, y] points")
        for j in r.get("furniture", []) or []:
            if not 0 <= int(j) < len(furniture):
                raise SceneParseError(f"{where}: unresolved furniture index {j}")
        rooms.append(Room(
            boundary=boundary,
            z0=float(r.get("z0", 0.0)),
            z1=float(r.get("z1", 2.8)),
            furniture=[int(j) for j in (r.get("furniture", []) or [])],
            material=int(r.get("material", 0)),
        ))

    for i, l in enumerate(lights):
        if l.kind == "emissive_mesh" and (l.mesh is None or not 0 <= l.mesh < len(meshes)):
            raise SceneParseError(f"lights[{i}]: unresolved mesh index {l.mesh}")
    for i, m in enumerate(meshes):
        if not 0 <= m.material < len(materials):
            raise SceneParseError(f"meshes[{i}]: unresolved material index {m.material}")

    camera = None
    if "camera" in doc and doc["camera"] is not None:
        c = doc["camera"]
        if not isinstance(c, dict):
            raise SceneParseError("'camera' must be a mapping")
        camera = CameraPose(
            position=_vec(c.get("position", (0, 0, 1.5)), 3, "camera.position"),
            pitch_deg=float(c.get("pitch_deg", 90.0)),
            yaw_deg=float(c.get("yaw_deg", 0.0)),
            roll_deg=float(c.get("roll_deg", 0.0)),
            fov_deg=float(c.get("fov_deg", 60.0)),
            width=int(c.get("width", 256)),
            height=int(c.get("height", 256)),
        )

    rs = doc.get("render", {}) or {}
    if not isinstance(rs, dict):
        raise SceneParseError("'render' must be a mapping")
    render = RenderSettings(
        width=int(rs.get("width", camera.width if camera else 256)),
        height=int(rs.get("height", camera.height if camera else 256)),
        spp=int(rs.get("spp", 16)),
        max_bounce=int(rs.get("max_bounce", 8)),
        r=float(rs.get("r", 1.0)),
        clip=float(rs.get("clip", 0.1)),
        seed=int(rs["seed"]) if "seed" in rs and rs["seed"] is not None else None,
        rr_start=int(rs.get("rr_start", 3)),
        transparency_segment_mode=bool(rs.get("transparency_segment_mode", False)),
        per_sample_max=bool(rs.get("per_sample_max", False)),
    )

    return Scene(meshes=meshes, materials=materials, lights=lights, rooms=rooms,
                 furniture=furniture, render=render, camera=camera)


def _mesh_to_doc(mesh: TriangleMesh) -> dict:
    doc: dict = {"material": mesh.material}
    if mesh.background:
        doc["background"] = True
    if mesh.watertight:
        doc["watertight"] = True
    if mesh.source_path is not None:
        doc["path"] = mesh.source_path
    else:
        inline = {
            "vertices": [[float(x) for x in v] for v in mesh.vertices],
            "triangles": [[int(x) for x in t] for t in mesh.triangles],
        }
        if mesh.uv is not None:
            inline["uv"] = [[[float(x) for x in c] for c in f] for f in mesh.uv]
        doc["inline"] = inline
    return doc


def _plain(value):
    """Recursively strip numpy types so yaml.safe_dump accepts the doc."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def serialize_scene(scene: Scene) -> str:
    doc: dict = {}
    if scene.meshes:
        doc["meshes"] = [_mesh_to_doc(m) for m in scene.meshes]
    if scene.materials:
        doc["materials"] = []
        for m in scene.materials:
            entry: dict = {"albedo": list(m.albedo), "emission": list(m.emission),
                           "kind": m.kind}
            if m.texture:
                entry["texture"] = m.texture
            doc["materials"].append(entry)
    if scene.lights:
        doc["lights"] = []
        for l in scene.lights:
            entry = {"kind": l.kind, "position": list(l.position),
                     "intensity": list(l.intensity), "active": l.active}
            if l.u is not None:
                entry["u"] = list(l.u)
            if l.v is not None:
                entry["v"] = list(l.v)
            if l.direction is not None:
                entry["direction"] = list(l.direction)
            if l.kind == "spot":
                entry["cone_deg"] = l.cone_deg
            if l.mesh is not None:
                entry["mesh"] = l.mesh
            doc["lights"].append(entry)
    if scene.rooms:
        doc["rooms"] = [{
            "boundary": [[float(x), float(y)] for x, y in r.boundary],
            "z0": r.z0, "z1": r.z1,
            "furniture": list(r.furniture), "material": r.material,
        } for r in scene.rooms]
    if scene.furniture:
        doc["furniture"] = [{
            "mesh": f.mesh, "rotation_deg": f.rotation_deg,
            "translation": list(f.translation), "z": f.z, "label": f.label,
        } for f in scene.furniture]
    if scene.camera is not None:
        c = scene.camera
        doc["camera"] = {"position": list(c.position), "pitch_deg": c.pitch_deg,
                         "yaw_deg": c.yaw_deg, "roll_deg": c.roll_deg,
                         "fov_deg": c.fov_deg, "width": c.width, "height": c.height}
    rs = scene.render
    render: dict = {"width": rs.width, "height": rs.height, "spp": rs.spp,
                    "max_bounce": rs.max_bounce, "r": rs.r, "clip": rs.clip,
                    "rr_start": rs.rr_start}
    if rs.seed is not None:
        render["seed"] = rs.seed
    if rs.transparency_segment_mode:
        render["transparency_segment_mode"] = True
    if rs.per_sample_max:
        render["per_sample_max"] = True
    doc["render"] = render
    return yaml.safe_dump(_plain(doc), sort_keys=False, default_flow_style=None)


def load_scene(path: str | Path) -> Scene:
    p = Path(path)
    return parse_scene(p.read_text(encoding="utf-8"), base_dir=p.parent)


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(serialize_scene(scene), encoding="utf-8")
