"""Render one shadow / shadow-free pair from a built-in room scene.

Builds a small furnished room with an area panel, renders the four
radiance buffers, composes the pair, and writes PFM + PNG output plus the
probabilistic shadow mask. Useful as a smoke test and as a template for
hand-authored scenes.

    python3 scripts/render_shadow_pair.py --out out/pair --seed 7 --spp 256
"""
import argparse
import time
from pathlib import Path

import numpy as np

from shadowset.compositor import compose_pair, shadow_mask
from shadowset.imgio import write_pfm, write_png
from shadowset.integrator import render_passes
from shadowset.scene import (CameraPose, Light, Material, Room,
                             RenderSettings, Scene, TriangleMesh, LIGHT_AREA)
from shadowset.sceneio import save_scene


def box_mesh(size, center, material: int) -> TriangleMesh:
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
    return TriangleMesh(vertices=corners, triangles=np.array(tris),
                        material=material)


def demo_scene() -> Scene:
    room = Room(boundary=[(0, 0), (5, 0), (5, 4), (0, 4)], z0=0.0, z1=2.8,
                material=0)
    table = box_mesh((1.4, 0.9, 0.06), (2.5, 2.0, 0.72), 1)
    leg_positions = [(1.9, 1.65), (3.1, 1.65), (1.9, 2.35), (3.1, 2.35)]
    legs = [box_mesh((0.08, 0.08, 0.7), (x, y, 0.35), 1)
            for x, y in leg_positions]
    crate = box_mesh((0.5, 0.5, 0.5), (1.0, 3.2, 0.25), 2)
    panel = Light(kind=LIGHT_AREA, position=(2.0, 1.5, 2.79),
                  u=(0.0, 1.0, 0.0), v=(1.0, 0.0, 0.0),
                  intensity=(18.0, 17.0, 15.0))
    camera = CameraPose(position=(0.7, 0.6, 1.5), pitch_deg=105.0,
                        yaw_deg=38.0, fov_deg=65.0, width=320, height=240)
    return Scene(meshes=[table, *legs, crate],
                 materials=[Material(albedo=(0.72, 0.70, 0.66)),
                            Material(albedo=(0.45, 0.28, 0.14)),
                            Material(albedo=(0.15, 0.35, 0.6))],
                 lights=[panel], rooms=[room], camera=camera)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out/pair"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--spp", type=int, default=128)
    ap.add_argument("--width", type=int, default=320)
    ap.add_argument("--height", type=int, default=240)
    args = ap.parse_args()

    scene = demo_scene()
    args.out.mkdir(parents=True, exist_ok=True)
    save_scene(scene, args.out / "scene.yaml")

    settings = RenderSettings(width=args.width, height=args.height,
                              spp=args.spp, seed=args.seed)
    t0 = time.perf_counter()
    buf = render_passes(scene, settings=settings)
    print(f"rendered {args.width}x{args.height} at {args.spp} spp "
          f"in {time.perf_counter() - t0:.1f}s")

    shadowed, shadow_free = compose_pair(buf.dr_s, buf.idr_s,
                                         buf.dr_f, buf.idr_f)
    mask = shadow_mask(shadowed, shadow_free, clip=settings.clip)
    for name, img in (("i_s", shadowed), ("i_f", shadow_free)):
        write_pfm(args.out / f"{name}.pfm", img)
        write_png(args.out / f"{name}.png", img, srgb=True)
    write_pfm(args.out / "mask.pfm", mask)
    write_png(args.out / "mask.png", mask, srgb=False)
    write_pfm(args.out / "depth.pfm", buf.depth)
    print(f"wrote scene.yaml, i_s, i_f, mask, depth under {args.out}")
    print(f"mask coverage: {float((mask > 0.5).mean()):.1%} of pixels "
          f"over half shadowed")


if __name__ == "__main__":
    main()
