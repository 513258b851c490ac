"""Composition of the four buffers into an image pair and a shadow mask.

The shadowed image is dr_s + idr_s. The shadow-free image is dr_f plus the
larger of the two indirect estimates, so removing shadows never darkens a
pixel: with the default per-channel max the inequality I_f >= I_s holds
exactly per pixel and channel. mode="luminance" instead picks whichever
whole RGB triple has the larger Rec. 709 luminance, which preserves hue at
the cost of the per-channel guarantee.

The mask is the relative luminance drop, S = (lum_f - lum_s) / max(lum_f,
clip), clamped to [0, 1]; `clip` keeps near-black pixels from exploding the
ratio. A per-channel mask variant averages the three channel ratios.
"""
from __future__ import annotations

import numpy as np

__all__ = ["luminance", "compose_pair", "shadow_mask"]

_LUM = np.array([0.2126, 0.7152, 0.0722])


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec. 709 luma of linear RGB, shape (..., 3) -> (...)."""
    return np.asarray(image, dtype=np.float64) @ _LUM


def compose_pair(dr_s: np.ndarray, idr_s: np.ndarray,
                 dr_f: np.ndarray, idr_f: np.ndarray,
                 mode: str = "channel") -> tuple[np.ndarray, np.ndarray]:
    """(shadowed, shadow_free) images from the four buffers."""
    dr_s = np.asarray(dr_s)
    idr_s = np.asarray(idr_s)
    dr_f = np.asarray(dr_f)
    idr_f = np.asarray(idr_f)
    shadowed = dr_s + idr_s
    if mode == "channel":
        indirect = np.maximum(idr_f, idr_s)
    elif mode == "luminance":
        pick_f = luminance(idr_f) >= luminance(idr_s)
        indirect = np.where(pick_f[..., None], idr_f, idr_s)
    else:
        raise ValueError(f"unknown compose mode {mode!r}")
    return shadowed, dr_f + indirect


def shadow_mask(shadowed: np.ndarray, shadow_free: np.ndarray,
                clip: float = 0.1, per_channel: bool = False) -> np.ndarray:
    """Probabilistic mask in [0, 1]; 1 where light is fully blocked."""
    if clip <= 0:
        raise ValueError("clip must be positive")
    s = np.asarray(shadowed, dtype=np.float64)
    f = np.asarray(shadow_free, dtype=np.float64)
    if per_channel:
        ratio = (f - s) / np.maximum(f, clip)
        mask = ratio.mean(axis=-1)
    else:
        lf = luminance(f)
        mask = (lf - luminance(s)) / np.maximum(lf, clip)
    return np.clip(mask, 0.0, 1.0)
