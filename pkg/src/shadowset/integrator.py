"""Four-buffer renderer and per-vertex estimator entry points.

render_passes produces the correlated quartet for one camera:

    dr_s   direct with shadow rays
    dr_f   direct without shadow rays (same light samples as dr_s)
    idr_s  indirect, standard walk
    idr_f  indirect with the bounce-1 transparency rule, raw (un-maxed)

plus center-ray depth and camera-space normals. Buffers are float32;
accumulation runs in float64 inside the kernel. Because dr_f keeps exactly
the terms dr_s keeps or drops, dr_f >= dr_s holds per pixel and channel in
the produced arrays, not just in expectation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .rng import U64, RngStream, next_u64, stream_state
from .scene import CameraPose, RenderSettings, Scene
from .tracer import Hit, Ray, TraceData, camera_array, compile_scene

__all__ = [
    "PathState", "RadianceSample", "RadianceBuffers",
    "est_direct", "est_indirect", "est_radiance", "render_passes",
]


@dataclass
class PathState:
    """Walk state at a surface vertex."""
    bounce: int = 0
    trans_depth: int = 0
    accumulated: float = 0.0  # distance from the bounce-1 segment origin
    throughput: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass
class RadianceSample:
    direct: np.ndarray
    indirect: np.ndarray
    indirect_shadowed: np.ndarray  # shadowed walk; equals indirect when with_shadow

    def total(self) -> np.ndarray:
        return self.direct + self.indirect


@dataclass
class RadianceBuffers:
    dr_s: np.ndarray
    idr_s: np.ndarray
    dr_f: np.ndarray
    idr_f: np.ndarray  # raw transparent-walk estimate, before any max
    depth: np.ndarray
    normal: np.ndarray
    spp: int
    seed: int

    def passes(self) -> dict[str, np.ndarray]:
        return {"dr_s": self.dr_s, "idr_s": self.idr_s,
                "dr_f": self.dr_f, "idr_f": self.idr_f}


def est_direct(data: TraceData, hit: Hit, wo, with_shadow: bool,
               rng: RngStream) -> np.ndarray:
    """Direct radiance at a hit: emission plus one next-event light sample."""
    wo = np.asarray(wo, dtype=np.float64)
    p = hit.point
    n = hit.normal
    state, fr, fg, fb, sr, sg, sb = _kernels.direct_both(
        data, p[0], p[1], p[2], n[0], n[1], n[2], wo[0], wo[1], wo[2],
        hit.material, hit.triangle, hit.bary[1], hit.bary[2],
        U64(rng.state), np.empty(_kernels.BVH_STACK, dtype=np.int64))
    rng.state = U64(state)
    if with_shadow:
        return np.array([sr, sg, sb])
    return np.array([fr, fg, fb])


def est_indirect(data: TraceData, hit: Hit, wo, with_shadow: bool,
                 rng: RngStream, state: PathState | None = None,
                 settings: RenderSettings | None = None) -> np.ndarray:
    """Indirect radiance: BRDF walk from the hit, scoring emissive geometry.

    The scatter and roulette streams are derived from `rng`'s current
    state, which is then advanced once, so successive calls use fresh and
    reproducible randomness.
    """
    state = state or PathState()
    settings = settings or RenderSettings()
    wo = np.asarray(wo, dtype=np.float64)
    base = U64(rng.state)
    path0 = U64(stream_state(base, U64(0), U64(0), _kernels.TAG_PATH))
    rr0 = U64(stream_state(base, U64(0), U64(0), _kernels.TAG_RR))
    advanced, _ = next_u64(base)
    rng.state = U64(advanced)
    p = hit.point
    n = hit.normal
    tr, tg, tb = state.throughput
    r, g, b = _kernels.indirect_walk(
        data, p[0], p[1], p[2], n[0], n[1], n[2], wo[0], wo[1], wo[2],
        hit.material, hit.triangle, hit.background,
        hit.bary[1], hit.bary[2], with_shadow,
        state.bounce, state.trans_depth, state.accumulated, tr, tg, tb,
        settings.r, settings.max_bounce, settings.rr_start,
        settings.transparency_segment_mode,
        path0, rr0, np.empty(_kernels.BVH_STACK, dtype=np.int64))
    return np.array([r, g, b])


def est_radiance(data: TraceData, ray: Ray, with_shadow: bool,
                 seed: int, pixel: int = 0, sample: int = 0,
                 settings: RenderSettings | None = None) -> RadianceSample:
    """One full radiance sample along a camera ray.

    Randomness is keyed by (seed, pixel, sample), so the shadowed and
    shadow-free variants of the same key are correlated exactly as in
    render_passes.
    """
    settings = settings or RenderSettings()
    o = ray.origin
    d = ray.direction
    (dfr, dfg, dfb, dsr, dsg, dsb,
     ifr, ifg, ifb, isr, isg, isb) = _kernels.radiance_sample(
        data, o[0], o[1], o[2], d[0], d[1], d[2],
        U64(seed), U64(pixel), U64(sample),
        settings.r, settings.max_bounce, settings.rr_start,
        settings.transparency_segment_mode,
        np.empty(_kernels.BVH_STACK, dtype=np.int64))
    shadowed = np.array([isr, isg, isb])
    if with_shadow:
        return RadianceSample(direct=np.array([dsr, dsg, dsb]),
                              indirect=shadowed.copy(),
                              indirect_shadowed=shadowed)
    return RadianceSample(direct=np.array([dfr, dfg, dfb]),
                          indirect=np.array([ifr, ifg, ifb]),
                          indirect_shadowed=shadowed)


def render_passes(scene: Scene, base_dir: str = ".",
                  camera: CameraPose | None = None,
                  settings: RenderSettings | None = None,
                  data: TraceData | None = None,
                  seed: int | None = None) -> RadianceBuffers:
    """Render the four correlated buffers plus depth and normals."""
    settings = settings or scene.render
    camera = camera or scene.camera
    if camera is None:
        raise ValueError("scene has no camera and none was given")
    if seed is None:
        seed = settings.seed if settings.seed is not None else 0
    if data is None:
        data = compile_scene(scene, base_dir)
    w = settings.width
    h = settings.height
    cam = camera_array(replace(camera, width=w, height=h))
    dr_s = np.zeros((h, w, 3), dtype=np.float32)
    idr_s = np.zeros((h, w, 3), dtype=np.float32)
    dr_f = np.zeros((h, w, 3), dtype=np.float32)
    idr_f = np.zeros((h, w, 3), dtype=np.float32)
    _kernels.render_kernel(
        data, cam, w, h, settings.spp, U64(seed),
        settings.r, settings.max_bounce, settings.rr_start,
        settings.transparency_segment_mode, settings.per_sample_max,
        dr_s, idr_s, dr_f, idr_f)
    depth = np.zeros((h, w), dtype=np.float32)
    normal = np.zeros((h, w, 3), dtype=np.float32)
    _kernels.geometry_kernel(data, cam, w, h, depth, normal)
    return RadianceBuffers(dr_s=dr_s, idr_s=idr_s, dr_f=dr_f, idr_f=idr_f,
                           depth=depth, normal=normal,
                           spp=settings.spp, seed=seed)
