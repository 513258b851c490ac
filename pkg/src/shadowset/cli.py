"""Command-line pipeline driver.

Subcommands cover the whole workflow: `render` produces the four radiance
buffers plus composed images and the shadow mask, `genscenes` composes
object scenes from an asset directory, `prepare` turns a furnished scene
into per-camera dataset documents, `mask` re-composes buffers on disk,
`metrics` compares two images, and `attn` runs the window-attention
numerics over depth/feature maps.

Reproducibility rules: every randomized command demands an explicit seed
(from the flag or the config file; there is no wall-clock fallback), every
output directory gets a manifest with content hashes, and nothing in an
output depends on the thread count.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import traceback
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import attention, imgio
from .compositor import compose_pair, shadow_mask
from .datagen import (
    gen_object_scene,
    place_lights,
    rearrange,
    sample_cameras,
)
from .integrator import render_passes
from .metrics import psnr, ssim
from .rng import mix
from .scene import CameraPose, Material, Scene, scene_with, validate_scene
from .sceneio import SceneParseError, load_mesh, load_scene, serialize_scene
from .tracer import Ray, compile_scene, intersect

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_RUNTIME = 3

# Face/object palette for composed scenes; chosen to span hue and albedo.
PALETTE = [
    Material(albedo=(0.80, 0.75, 0.70)),
    Material(albedo=(0.65, 0.05, 0.05)),
    Material(albedo=(0.12, 0.45, 0.15)),
    Material(albedo=(0.15, 0.25, 0.60)),
    Material(albedo=(0.70, 0.55, 0.20)),
    Material(albedo=(0.45, 0.30, 0.55)),
]


class _UsageError(Exception):
    pass


class _InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting itself."""

    def error(self, message):
        raise _UsageError(message)


@dataclass
class JobConfig:
    """Merged view of config-file values and command-line flags."""

    command: str
    seed: Optional[int] = None
    threads: Optional[int] = None
    out: Optional[Path] = None
    width: Optional[int] = None
    height: Optional[int] = None
    spp: Optional[int] = None
    max_bounce: Optional[int] = None
    r: Optional[float] = None
    clip: Optional[float] = None
    rr_start: Optional[int] = None
    mode: str = "channel"

    @classmethod
    def merge(cls, args: argparse.Namespace) -> "JobConfig":
        """Config file first, explicit flags override."""
        values: dict = {}
        config_path = getattr(args, "config", None)
        if config_path:
            path = Path(config_path)
            if not path.is_file():
                raise _InputError(f"config file not found: {path}")
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
            if loaded is None:
                loaded = {}
            if not isinstance(loaded, dict):
                raise _InputError("config file must hold a mapping")
            values.update(loaded)
        for name in ("seed", "threads", "out", "width", "height", "spp",
                     "max_bounce", "r", "clip", "rr_start", "mode"):
            flag = getattr(args, name, None)
            if flag is not None:
                values[name] = flag
        known = {f for f in cls.__dataclass_fields__ if f != "command"}
        unknown = set(values) - known
        if unknown:
            raise _InputError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(command=args.command, **values)
        if cfg.out is not None:
            cfg.out = Path(cfg.out)
        return cfg

    def require_seed(self) -> int:
        if self.seed is None:
            raise _UsageError(
                f"'{self.command}' is randomized: pass --seed explicitly")
        return int(self.seed)

    def require_out(self) -> Path:
        if self.out is None:
            raise _UsageError(f"'{self.command}' needs --out")
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out


def _apply_threads(cfg: JobConfig) -> None:
    if cfg.threads is not None:
        if cfg.threads < 1:
            raise _InputError("--threads must be >= 1")
        import numba

        numba.set_num_threads(cfg.threads)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, payload: dict, files: list[Path]) -> None:
    payload = dict(payload)
    payload["outputs"] = {p.name: _sha256(p) for p in sorted(files)}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    imgio.atomic_write_bytes(out_dir / "manifest.json", text.encode("utf-8"))


def _load_scene_checked(path: str) -> Scene:
    p = Path(path)
    if not p.is_file():
        raise _InputError(f"scene file not found: {p}")
    try:
        scene = load_scene(p)
    except SceneParseError as exc:
        raise _InputError(f"{p}: {exc}") from exc
    violations = validate_scene(scene)
    if violations:
        listing = "; ".join(str(v) for v in violations)
        raise _InputError(f"{p}: invalid scene: {listing}")
    return scene


# ------------------------------------------------------------------ render


def _parse_camera(text: str) -> CameraPose:
    parts = [float(x) for x in text.split(",")]
    if len(parts) not in (5, 6, 7):
        raise _InputError(
            "--camera wants 'x,y,z,pitch,yaw[,roll[,fov]]'")
    pose = CameraPose(position=tuple(parts[:3]), pitch_deg=parts[3],
                      yaw_deg=parts[4])
    if len(parts) > 5:
        pose.roll_deg = parts[5]
    if len(parts) > 6:
        pose.fov_deg = parts[6]
    return pose


def cmd_render(args, cfg: JobConfig) -> int:
    seed = cfg.require_seed()
    out = cfg.require_out()
    _apply_threads(cfg)
    scene = _load_scene_checked(args.scene)
    camera = _parse_camera(args.camera) if args.camera else scene.camera
    if camera is None:
        raise _InputError("scene has no camera; pass --camera")
    overrides = {k: v for k, v in (
        ("width", cfg.width), ("height", cfg.height), ("spp", cfg.spp),
        ("max_bounce", cfg.max_bounce), ("r", cfg.r), ("clip", cfg.clip),
        ("rr_start", cfg.rr_start)) if v is not None}
    settings = replace(scene.render, seed=seed, **overrides)
    if not scene.active_lights():
        print("warning: scene has no active lights; buffers will be black",
              file=sys.stderr)
    base_dir = str(Path(args.scene).parent)
    buffers = render_passes(scene, base_dir=base_dir, camera=camera,
                            settings=settings, seed=seed)
    shadowed, shadow_free = compose_pair(buffers.dr_s, buffers.idr_s,
                                         buffers.dr_f, buffers.idr_f,
                                         mode=cfg.mode)
    mask = shadow_mask(shadowed, shadow_free, clip=settings.clip)

    files = []
    planes = {
        "dr_s": buffers.dr_s, "idr_s": buffers.idr_s,
        "dr_f": buffers.dr_f, "idr_f": buffers.idr_f,
        "depth": buffers.depth, "normal": buffers.normal,
        "i_s": shadowed.astype(np.float32),
        "i_f": shadow_free.astype(np.float32),
        "mask": mask.astype(np.float32),
    }
    for name, image in planes.items():
        path = out / f"{name}.pfm"
        imgio.write_pfm(path, image)
        files.append(path)
    for name, image in (("i_s", shadowed), ("i_f", shadow_free)):
        path = out / f"{name}.png"
        imgio.write_png(path, image, srgb=True)
        files.append(path)
    mask_png = out / "mask.png"
    imgio.write_png(mask_png, mask, srgb=False)
    files.append(mask_png)

    manifest = {
        "command": "render",
        "scene": Path(args.scene).name,
        "seed": seed,
        "mode": cfg.mode,
        "settings": {k: v for k, v in asdict(settings).items()},
    }
    _write_manifest(out, manifest, files)
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ genscenes


def cmd_genscenes(args, cfg: JobConfig) -> int:
    seed = cfg.require_seed()
    out = cfg.require_out()
    asset_dir = Path(args.assets)
    if not asset_dir.is_dir():
        raise _InputError(f"asset directory not found: {asset_dir}")
    paths = sorted(asset_dir.glob("*.obj"))
    if not paths:
        raise _InputError(f"no .obj meshes in {asset_dir}")
    try:
        assets = [load_mesh(p) for p in paths]
    except SceneParseError as exc:
        raise _InputError(str(exc)) from exc

    files = []
    entries = []
    for i in range(args.count):
        scene = gen_object_scene(assets, PALETTE, seed=mix(seed, "scene", i))
        violations = validate_scene(scene)
        if violations:
            raise RuntimeError(f"generated scene {i} failed validation: "
                               + "; ".join(str(v) for v in violations))
        path = out / f"scene_{i:04d}.yaml"
        imgio.atomic_write_bytes(path, serialize_scene(scene).encode("utf-8"))
        files.append(path)
        entries.append({"file": path.name,
                        "objects": len(scene.furniture),
                        "lights": len(scene.lights)})
    _write_manifest(out, {"command": "genscenes", "seed": seed,
                          "count": args.count, "scenes": entries}, files)
    print(f"wrote {len(files)} scenes to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ prepare


def cmd_prepare(args, cfg: JobConfig) -> int:
    seed = cfg.require_seed()
    out = cfg.require_out()
    _apply_threads(cfg)
    scene = _load_scene_checked(args.scene)
    if not scene.rooms:
        raise _InputError("scene has no rooms to prepare")

    arranged, report = rearrange(scene)
    data = compile_scene(arranged, str(Path(args.scene).parent))
    files = []
    entries = []
    for room_idx, room in enumerate(arranged.rooms):
        room_seed = mix(seed, "cameras", room_idx)
        poses = sample_cameras(arranged, room, n_target=args.cameras,
                               seed=room_seed, data=data)
        for cam_idx, pose in enumerate(poses):
            _, _, fwd = pose.basis()
            hit = intersect(data, Ray(pose.position, fwd))
            if hit is None:  # sampler guarantees a central hit; stay safe
                continue
            doc = place_lights(arranged, pose, hit.point,
                               seed=mix(seed, "lights", room_idx, cam_idx))
            doc = scene_with(doc, camera=pose)
            path = out / f"room{room_idx}_cam{cam_idx}.yaml"
            imgio.atomic_write_bytes(path,
                                     serialize_scene(doc).encode("utf-8"))
            files.append(path)
            entries.append({"file": path.name, "room": room_idx,
                            "camera": cam_idx,
                            "lights_active": len(doc.active_lights())})
    if not files:
        print("notice: no valid camera poses in any room; nothing emitted")
    _write_manifest(out, {"command": "prepare", "seed": seed,
                          "cameras_per_room": args.cameras,
                          "removed_furniture": report.removed,
                          "documents": entries}, files)
    print(f"wrote {len(files)} documents to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ mask


def _read_plane(path: Path) -> np.ndarray:
    if not path.is_file():
        raise _InputError(f"missing buffer: {path}")
    return imgio.read_pfm(path)


def cmd_mask(args, cfg: JobConfig) -> int:
    out = cfg.require_out()
    src = Path(args.dir)
    planes = [_read_plane(src / f"{n}.pfm")
              for n in ("dr_s", "idr_s", "dr_f", "idr_f")]
    if len({p.shape for p in planes}) != 1:
        raise _InputError("buffer resolutions disagree")
    clip = cfg.clip if cfg.clip is not None else 0.1
    if clip <= 0:
        raise _InputError("clip must be positive")
    shadowed, shadow_free = compose_pair(*planes, mode=cfg.mode)
    mask = shadow_mask(shadowed, shadow_free, clip=clip)
    files = []
    for name, image, srgb in (("i_s", shadowed, True),
                              ("i_f", shadow_free, True),
                              ("mask", mask, False)):
        pfm = out / f"{name}.pfm"
        imgio.write_pfm(pfm, image.astype(np.float32))
        png = out / f"{name}.png"
        imgio.write_png(png, image, srgb=srgb)
        files.extend([pfm, png])
    _write_manifest(out, {"command": "mask", "source": str(src),
                          "clip": clip, "mode": cfg.mode}, files)
    print(f"wrote composed pair and mask to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ metrics


def _read_image(path: Path) -> np.ndarray:
    if not path.is_file():
        raise _InputError(f"image not found: {path}")
    if path.suffix.lower() == ".pfm":
        return imgio.read_pfm(path).astype(np.float64)
    return imgio.read_png(path, srgb=False)


def cmd_metrics(args, cfg: JobConfig) -> int:
    a = _read_image(Path(args.image_a))
    b = _read_image(Path(args.image_b))
    if a.shape != b.shape:
        raise _InputError(f"shapes differ: {a.shape} vs {b.shape}")
    result = {"psnr_db": psnr(a, b), "ssim": ssim(a, b)}
    print(f"psnr: {result['psnr_db']:.4f} dB")
    print(f"ssim: {result['ssim']:.6f}")
    if cfg.out is not None:
        cfg.out.parent.mkdir(parents=True, exist_ok=True)
        imgio.atomic_write_bytes(
            cfg.out, (json.dumps(result, indent=2) + "\n").encode("utf-8"))
    return EXIT_OK


# ------------------------------------------------------------------ attn


def cmd_attn(args, cfg: JobConfig) -> int:
    out = cfg.require_out()
    depth = _read_plane(Path(args.depth))
    if depth.ndim != 2:
        raise _InputError("depth must be a single-channel map")
    h, w = depth.shape
    m = args.window
    if h % m or w % m:
        raise _InputError(f"{h}x{w} depth does not tile with {m}x{m} windows")

    feats_path = Path(args.features)
    if not feats_path.is_file():
        raise _InputError(f"features not found: {feats_path}")
    feats = imgio.read_features(feats_path)  # (c, fh, fw)
    feats = attention.resample_bilinear(np.moveaxis(feats, 0, -1), h, w)

    if args.fx is not None:
        intr = attention.CameraIntrinsics(
            fx=args.fx, fy=args.fy if args.fy is not None else args.fx,
            cx=args.cx if args.cx is not None else w / 2.0,
            cy=args.cy if args.cy is not None else h / 2.0)
    else:
        fx = (w / 2.0) / math.tan(math.radians(args.fov) / 2.0)
        intr = attention.CameraIntrinsics(fx=fx, fy=fx, cx=w / 2.0,
                                          cy=h / 2.0)

    points, valid = attention.backproject(depth, intr)
    if args.normals:
        normals = _read_plane(Path(args.normals))
        if normals.shape != (h, w, 3):
            raise _InputError("normal map resolution mismatch")
    else:
        normals = attention.normals_from_depth(points, valid)

    win_pts = attention.partition_windows(points, m)
    win_nrm = attention.partition_windows(normals, m)
    win_feat = attention.partition_windows(feats, m)
    n_win, n_tok = win_pts.shape[:2]
    w_s = np.empty((n_win, n_tok, n_tok), dtype=np.float32)
    w_g = np.empty_like(w_s)
    w_c = np.empty_like(w_s)
    out_feat = np.empty((n_win, n_tok, win_feat.shape[2]), dtype=np.float32)
    for i in range(n_win):
        pd = attention.pairwise_planar_distance(win_pts[i], win_nrm[i])
        weights = attention.WeightMatrices.build(
            attention.semantic_weights(win_feat[i]),
            attention.geometric_weights(pd, args.sigma_g))
        w_s[i] = weights.w_s
        w_g[i] = weights.w_g
        w_c[i] = weights.w
        out_feat[i] = attention.modulated_attention(
            win_feat[i], win_feat[i], win_feat[i], weight=weights.w)

    files = []
    for name, arr in (("w_s", w_s), ("w_g", w_g), ("w", w_c),
                      ("attn_out", out_feat)):
        path = out / f"{name}.sfea"
        imgio.write_features(path, arr)
        files.append(path)
    _write_manifest(out, {"command": "attn", "window": m,
                          "sigma_g": args.sigma_g,
                          "windows": int(n_win), "tokens": int(n_tok)},
                    files)
    print(f"wrote {n_win} windows of {n_tok}x{n_tok} matrices to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ wiring


def _build_parser() -> _Parser:
    parser = _Parser(prog="shadowset",
                     description="shadow dataset rendering pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--config", type=str, default=None)

    p = sub.add_parser("render", help="render buffers, pair, and mask")
    p.add_argument("scene")
    p.add_argument("--camera", type=str, default=None,
                   help="override pose: x,y,z,pitch,yaw[,roll[,fov]]")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--spp", type=int, default=None)
    p.add_argument("--max-bounce", dest="max_bounce", type=int, default=None)
    p.add_argument("--r", type=float, default=None,
                   help="transparency radius for the shadow-free pass")
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--rr-start", dest="rr_start", type=int, default=None)
    p.add_argument("--mode", choices=("channel", "luminance"), default=None)
    common(p)

    p = sub.add_parser("genscenes", help="compose object scenes from assets")
    p.add_argument("--assets", required=True)
    p.add_argument("--count", type=int, default=10)
    common(p)

    p = sub.add_parser("prepare", help="rearrange, sample cameras, set lights")
    p.add_argument("scene")
    p.add_argument("--cameras", type=int, default=2,
                   help="poses per room")
    common(p)

    p = sub.add_parser("mask", help="compose pair and mask from buffers")
    p.add_argument("--dir", required=True,
                   help="directory holding dr_s/idr_s/dr_f/idr_f.pfm")
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--mode", choices=("channel", "luminance"), default=None)
    common(p)

    p = sub.add_parser("metrics", help="psnr/ssim between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    common(p)

    p = sub.add_parser("attn", help="window attention weights from maps")
    p.add_argument("--depth", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--normals", default=None)
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--sigma-g", dest="sigma_g", type=float, default=0.5)
    p.add_argument("--fov", type=float, default=60.0)
    p.add_argument("--fx", type=float, default=None)
    p.add_argument("--fy", type=float, default=None)
    p.add_argument("--cx", type=float, default=None)
    p.add_argument("--cy", type=float, default=None)
    common(p)

    return parser


_COMMANDS = {
    "render": cmd_render,
    "genscenes": cmd_genscenes,
    "prepare": cmd_prepare,
    "mask": cmd_mask,
    "metrics": cmd_metrics,
    "attn": cmd_attn,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = JobConfig.merge(args)
        return _COMMANDS[args.command](args, cfg)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - defensive
        traceback.print_exc()
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
