"""Shared scene builders for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from shadowset.scene import (
    EMISSIVE,
    LIGHT_AREA,
    LIGHT_POINT,
    CameraPose,
    Light,
    Material,
    RenderSettings,
    Room,
    Scene,
    TriangleMesh,
)

BIG = 2000.0


def big_quad(z: float, flip: bool = False, background: bool = False,
             material: int = 0, half: float = BIG) -> TriangleMesh:
    """Horizontal quad at height z; normal +z, or -z when flipped."""
    v = np.array([(-half, -half, z), (half, -half, z),
                  (half, half, z), (-half, half, z)])
    t = [(0, 1, 2), (0, 2, 3)] if not flip else [(0, 2, 1), (0, 3, 2)]
    return TriangleMesh(vertices=v, triangles=np.array(t), material=material,
                        background=background)


def box_mesh(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), material: int = 0,
             background: bool = False) -> TriangleMesh:
    """Axis-aligned watertight box with outward normals."""
    sx, sy, sz = (s / 2.0 for s in size)
    cx, cy, cz = center
    v = np.array([(cx + dx * sx, cy + dy * sy, cz + dz * sz)
                  for dz in (-1, 1) for dy in (-1, 1) for dx in (-1, 1)],
                 dtype=np.float64)
    # indices: bit0 = +x, bit1 = +y, bit2 = +z
    faces = [
        (0, 2, 3, 1),  # -z
        (4, 5, 7, 6),  # +z
        (0, 1, 5, 4),  # -y
        (2, 6, 7, 3),  # +y
        (0, 4, 6, 2),  # -x
        (1, 3, 7, 5),  # +x
    ]
    tris = []
    for a, b, c, d in faces:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return TriangleMesh(vertices=v, triangles=np.array(tris, dtype=np.int64),
                        material=material, background=background,
                        watertight=True)


def cornell_scene(width: int = 64, height: int = 64, spp: int = 64,
                  seed: int = 5, with_box: bool = True) -> Scene:
    """Small closed room lit by a downward ceiling panel."""
    mats = [
        Material(albedo=(0.73, 0.73, 0.73)),
        Material(albedo=(0.65, 0.05, 0.05)),
        Material(albedo=(0.12, 0.45, 0.15)),
    ]
    room = Room(boundary=[(0, 0), (2, 0), (2, 2), (0, 2)], z0=0.0, z1=2.0,
                material=0)
    panel = Light(kind=LIGHT_AREA, position=(0.75, 0.75, 1.999),
                  u=(0.0, 0.5, 0.0), v=(0.5, 0.0, 0.0),
                  intensity=(12.0, 12.0, 12.0))
    meshes = []
    if with_box:
        meshes.append(box_mesh(size=(0.5, 0.5, 0.8), center=(1.3, 1.2, 0.4),
                               material=1))
        meshes.append(box_mesh(size=(0.4, 0.4, 0.4), center=(0.6, 1.4, 0.2),
                               material=2))
    cam = CameraPose(position=(1.0, 0.15, 1.0), pitch_deg=90.0, yaw_deg=90.0,
                     fov_deg=75.0, width=width, height=height)
    return Scene(meshes=meshes, materials=mats, lights=[panel], rooms=[room],
                 camera=cam,
                 render=RenderSettings(width=width, height=height, spp=spp,
                                       seed=seed))


@pytest.fixture(scope="session")
def cornell():
    return cornell_scene()
