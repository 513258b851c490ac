"""Synthesize a small paired shadow dataset from random furnished rooms.

For each room: scatter boxes, resolve collisions, sample admissible camera
poses, place a light near each view, then render the shadow / shadow-free
pair and mask per pose. Output layout:

    <out>/room_0000/pose_0/{scene.yaml, i_s.png, i_f.png, mask.png, *.pfm}

    python3 scripts/build_room_dataset.py --rooms 3 --out out/dataset --seed 11
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from shadowset.compositor import compose_pair, shadow_mask
from shadowset.datagen import place_lights, rearrange, sample_cameras
from shadowset.imgio import write_pfm, write_png
from shadowset.integrator import render_passes
from shadowset.rng import mix
from shadowset.scene import (CameraPose, FurnitureInstance, Material, Room,
                             RenderSettings, Scene, TriangleMesh, scene_with)
from shadowset.sceneio import save_scene
from shadowset.tracer import Ray, compile_scene, intersect


def box_soup(size, center):
    sx, sy, sz = (s / 2.0 for s in size)
    cx, cy, cz = center
    corners = np.array([[cx + dx * sx, cy + dy * sy, cz + dz * sz]
                        for dx in (-1, 1) for dy in (-1, 1)
                        for dz in (-1, 1)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
             (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return corners, np.array(tris)


def random_room(seed: int) -> Scene:
    """Furnished room with deliberately overlapping initial placements."""
    rng = np.random.default_rng(seed)
    side = float(rng.uniform(4.0, 6.0))
    n_items = int(rng.integers(6, 10))
    meshes, furniture = [], []
    for i in range(n_items):
        sx, sy = rng.uniform(0.5, 1.3, 2)
        sz = float(rng.uniform(0.5, 1.7))
        v, t = box_soup((sx, sy, sz), (0, 0, sz / 2))
        meshes.append(TriangleMesh(vertices=v, triangles=t,
                                   material=1 + i % 3))
        x, y = rng.uniform(1.0, side - 1.0, 2)
        furniture.append(FurnitureInstance(
            mesh=i, rotation_deg=float(rng.uniform(0, 360)),
            translation=(float(x), float(y))))
    room = Room(boundary=[(0, 0), (side, 0), (side, side), (0, side)],
                z0=0.0, z1=2.8, furniture=list(range(n_items)))
    materials = [Material(albedo=(0.75, 0.73, 0.70)),
                 Material(albedo=(0.55, 0.30, 0.18)),
                 Material(albedo=(0.25, 0.40, 0.55)),
                 Material(albedo=(0.50, 0.48, 0.30))]
    camera = CameraPose(width=160, height=120, fov_deg=70.0)
    return Scene(meshes=meshes, materials=materials, rooms=[room],
                 furniture=furniture, camera=camera)


def render_pose(doc: Scene, out_dir: Path, settings: RenderSettings) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_scene(doc, out_dir / "scene.yaml")
    buf = render_passes(doc, settings=settings)
    shadowed, shadow_free = compose_pair(buf.dr_s, buf.idr_s,
                                         buf.dr_f, buf.idr_f)
    mask = shadow_mask(shadowed, shadow_free, clip=settings.clip)
    for name, img, srgb in (("i_s", shadowed, True), ("i_f", shadow_free, True),
                            ("mask", mask, False)):
        write_pfm(out_dir / f"{name}.pfm", img)
        write_png(out_dir / f"{name}.png", img, srgb=srgb)
    write_pfm(out_dir / "depth.pfm", buf.depth)
    return {"mean_mask": float(mask.mean()),
            "shadow_pixels": int((mask > 0.5).sum())}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out/dataset"))
    ap.add_argument("--rooms", type=int, default=2)
    ap.add_argument("--poses", type=int, default=2, help="target poses per room")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--spp", type=int, default=64)
    args = ap.parse_args()

    index = []
    t0 = time.perf_counter()
    for r in range(args.rooms):
        scene = random_room(mix(args.seed, "room", r))
        scene, report = rearrange(scene)
        print(f"room {r}: {len(scene.furniture)} items kept, "
              f"{len(report.removed)} removed, {len(report.moved)} moved")
        data = compile_scene(scene)
        poses = sample_cameras(scene, scene.rooms[0], n_target=args.poses,
                               seed=mix(args.seed, "cameras", r), data=data)
        if not poses:
            print(f"room {r}: no admissible poses, skipping")
            continue
        for p, pose in enumerate(poses):
            hit = intersect(data, Ray(pose.position, pose.basis()[2]))
            doc = place_lights(scene, pose, hit.point,
                               seed=mix(args.seed, "lights", r, p))
            doc = scene_with(doc, camera=pose)
            settings = RenderSettings(width=pose.width, height=pose.height,
                                      spp=args.spp,
                                      seed=mix(args.seed, "render", r, p))
            out_dir = args.out / f"room_{r:04d}" / f"pose_{p}"
            stats = render_pose(doc, out_dir, settings)
            index.append({"room": r, "pose": p,
                          "dir": str(out_dir.relative_to(args.out)),
                          **stats})
            print(f"  pose {p}: {stats['shadow_pixels']} shadow pixels, "
                  f"mean mask {stats['mean_mask']:.3f}")

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "index.json").write_text(json.dumps(index, indent=2))
    print(f"{len(index)} pairs in {time.perf_counter() - t0:.1f}s "
          f"-> {args.out / 'index.json'}")


if __name__ == "__main__":
    main()
