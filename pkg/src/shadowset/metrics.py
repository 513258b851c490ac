"""Image comparison metrics for [0, 1] images.

PSNR uses MAX = 1 and returns inf for identical inputs. SSIM follows the
standard windowed formulation: 11x11 Gaussian weights with sigma 1.5,
k1 = 0.01, k2 = 0.03, dynamic range 1, averaged over a border-cropped
valid region (5 px on each side) and over channels.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import convolve

__all__ = ["psnr", "ssim"]

_K1 = 0.01
_K2 = 0.03
_WINDOW = 11
_SIGMA = 1.5
_CROP = _WINDOW // 2


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window() -> np.ndarray:
    half = _WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * _SIGMA ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray, window: np.ndarray) -> float:
    c1 = _K1 ** 2
    c2 = _K2 ** 2
    mu_a = convolve(a, window, mode="nearest")
    mu_b = convolve(b, window, mode="nearest")
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = convolve(a * a, window, mode="nearest") - mu_aa
    var_b = convolve(b * b, window, mode="nearest") - mu_bb
    cov = convolve(a * b, window, mode="nearest") - mu_ab
    num = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    s = num / den
    valid = s[_CROP:-_CROP, _CROP:-_CROP]
    if valid.size == 0:
        valid = s
    return float(valid.mean())


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    window = _gaussian_window()
    if a.ndim == 2:
        return _ssim_channel(a, b, window)
    if a.ndim == 3:
        return float(np.mean([
            _ssim_channel(a[..., c], b[..., c], window)
            for c in range(a.shape[2])
        ]))
    raise ValueError(f"images must be 2-D or 3-D, got shape {a.shape}")
