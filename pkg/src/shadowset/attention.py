"""Geometry-aware window attention numerics.

Operates on precomputed per-pixel depth, normal, and feature maps: pixels are
back-projected through the pinhole model, pairwise point-to-plane distances
turn into geometric weights, feature dot products into semantic weights, and
both modulate scaled-dot-product attention scores inside square windows.
Everything here is pure array math; no learned state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

SIGMA_G = 0.5  # meters; distance scale of the geometric weight falloff
CHARBONNIER_EPS = 1e-3


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @classmethod
    def from_camera(cls, camera) -> "CameraIntrinsics":
        fx, fy, cx, cy = camera.intrinsics()
        return cls(fx=fx, fy=fy, cx=cx, cy=cy)


def backproject(depth: np.ndarray, intrinsics: CameraIntrinsics):
    """Lift a depth map to camera-space points.

    point(u, v) = depth * ((u - cx)/fx, (v - cy)/fy, 1) with u the column
    and v the row index.  Returns (points, valid); pixels with nonpositive
    or nonfinite depth are zeroed and flagged False in the mask.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError("depth must be a 2-D map")
    h, w = depth.shape
    valid = np.isfinite(depth) & (depth > 0.0)
    u = np.arange(w, dtype=np.float64)[None, :]
    v = np.arange(h, dtype=np.float64)[:, None]
    z = np.where(valid, depth, 0.0)
    points = np.empty((h, w, 3), dtype=np.float64)
    points[..., 0] = z * (u - intrinsics.cx) / intrinsics.fx
    points[..., 1] = z * (v - intrinsics.cy) / intrinsics.fy
    points[..., 2] = z
    return points, valid


def normals_from_depth(points: np.ndarray,
                       valid: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-pixel unit normals from a back-projected point map.

    Central differences along rows and columns give two tangents whose cross
    product is the normal; borders fall back to one-sided differences (that
    is what np.gradient does at the edges).  Normals are oriented to face
    the camera (n_z < 0).  Pixels with a degenerate cross product, or marked
    invalid, inherit the nearest valid pixel's normal.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 3 or points.shape[2] != 3:
        raise ValueError("points must be an (h, w, 3) map")
    du = np.gradient(points, axis=1)
    dv = np.gradient(points, axis=0)
    n = np.cross(du, dv)
    length = np.linalg.norm(n, axis=2)
    good = length > 1e-12
    if valid is not None:
        # a pixel whose difference stencil touches an invalid point gets a
        # garbage tangent, so widen the invalid region by one step
        bad = ndimage.binary_dilation(~np.asarray(valid, dtype=bool))
        good &= ~bad
    if not good.any():
        flat = np.zeros_like(points)
        flat[..., 2] = -1.0
        return flat
    normals = np.zeros_like(n)
    normals[good] = n[good] / length[good, None]
    if not good.all():
        # nearest-valid fill for the degenerate pixels
        _, (iy, ix) = ndimage.distance_transform_edt(~good, return_indices=True)
        normals[~good] = normals[iy[~good], ix[~good]]
    flip = normals[..., 2] > 0.0
    normals[flip] = -normals[flip]
    return normals


def planar_distance(p_i, n_i, p_j, n_j):
    """Symmetric point-to-plane distance between two pixels.

    0.5*|n_i . (p_i - p_j)| + 0.5*|n_j . (p_i - p_j)|; broadcasts over
    leading axes.  Coplanar points with shared normals give exactly 0.
    """
    d = np.asarray(p_i, dtype=np.float64) - np.asarray(p_j, dtype=np.float64)
    a = np.abs(np.sum(np.asarray(n_i, dtype=np.float64) * d, axis=-1))
    b = np.abs(np.sum(np.asarray(n_j, dtype=np.float64) * d, axis=-1))
    return 0.5 * a + 0.5 * b


def pairwise_planar_distance(points: np.ndarray,
                             normals: np.ndarray) -> np.ndarray:
    """Dense (n, n) planar-distance matrix for one window's pixels."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if points.shape != normals.shape:
        raise ValueError("points and normals must pair up")
    diff = points[:, None, :] - points[None, :, :]
    term_i = np.abs(np.einsum("ijc,ic->ij", diff, normals))
    term_j = np.abs(np.einsum("ijc,jc->ij", diff, normals))
    return 0.5 * term_i + 0.5 * term_j


def semantic_weights(features: np.ndarray) -> np.ndarray:
    """Pairwise feature-similarity weights in [0, 1].

    Rows are unit-normalized before the Gram matrix; negative dot products
    clamp to zero.  A zero-length feature row has no direction, so its row
    becomes the uniform weight 1/n (flagged with a warning).
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("features must be (n, c)")
    n = f.shape[0]
    norms = np.linalg.norm(f, axis=1)
    zero = norms <= 1e-12
    unit = np.zeros_like(f)
    unit[~zero] = f[~zero] / norms[~zero, None]
    w_s = np.clip(unit @ unit.T, 0.0, 1.0)
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-length feature rows; "
                      "using uniform weights for them", stacklevel=2)
        w_s[zero, :] = 1.0 / n
    return w_s


def geometric_weights(pdist_matrix: np.ndarray,
                      sigma_g: float = SIGMA_G) -> np.ndarray:
    """exp(-pdist/sigma_g): 1 on the diagonal, decaying with plane offset."""
    if sigma_g <= 0:
        raise ValueError("sigma_g must be positive")
    return np.exp(-np.asarray(pdist_matrix, dtype=np.float64) / sigma_g)


@dataclass
class WeightMatrices:
    """Semantic, geometric, and combined attention modulation weights."""

    w_s: np.ndarray
    w_g: np.ndarray
    w: np.ndarray

    @classmethod
    def build(cls, w_s: np.ndarray, w_g: np.ndarray,
              matmul: bool = False) -> "WeightMatrices":
        """Combine the two weight fields.

        The default elementwise product keeps each entry a similarity of the
        same pixel pair; ``matmul=True`` selects the matrix-product reading
        instead.
        """
        w_s = np.asarray(w_s, dtype=np.float64)
        w_g = np.asarray(w_g, dtype=np.float64)
        if w_s.shape != w_g.shape or w_s.ndim != 2 or w_s.shape[0] != w_s.shape[1]:
            raise ValueError("weight matrices must be square and congruent")
        w = w_s @ w_g if matmul else w_s * w_g
        return cls(w_s=w_s, w_g=w_g, w=w)


@dataclass
class AttentionWindow:
    """One square window's tensors, flattened to n = m*m rows.

    Geometry and feature fields are optional: they are only needed while
    building weights, not for running attention itself.
    """

    m: int
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    bias: Optional[np.ndarray] = None
    depth: Optional[np.ndarray] = field(default=None, repr=False)
    points: Optional[np.ndarray] = field(default=None, repr=False)
    normals: Optional[np.ndarray] = field(default=None, repr=False)
    features: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n = self.m * self.m
        self.q = np.asarray(self.q, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        for name in ("q", "k", "v"):
            t = getattr(self, name)
            if t.ndim != 2 or t.shape[0] != n:
                raise ValueError(f"{name} must have {n} rows")
        if self.q.shape[1] != self.k.shape[1]:
            raise ValueError("q and k feature dimensions differ")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (n, n):
                raise ValueError("bias must be (n, n)")
        shapes = {"depth": (n,), "points": (n, 3), "normals": (n, 3)}
        for name, want in shapes.items():
            t = getattr(self, name)
            if t is None:
                continue
            t = np.asarray(t, dtype=np.float64).reshape(want)
            setattr(self, name, t)
        if self.features is not None:
            f = np.asarray(self.features, dtype=np.float64)
            if f.ndim != 2 or f.shape[0] != n:
                raise ValueError(f"features must have {n} rows")
            self.features = f

    def weight_matrices(self, sigma_g: float = SIGMA_G,
                        matmul: bool = False) -> WeightMatrices:
        """Semantic and geometric weights from the window's own geometry."""
        if self.points is None or self.normals is None or self.features is None:
            raise ValueError("window lacks points, normals, or features")
        pd = pairwise_planar_distance(self.points, self.normals)
        return WeightMatrices.build(semantic_weights(self.features),
                                    geometric_weights(pd, sigma_g),
                                    matmul=matmul)

    def attend(self, weights: Optional[WeightMatrices] = None) -> np.ndarray:
        w = weights.w if weights is not None else None
        return modulated_attention(self.q, self.k, self.v, weight=w,
                                   bias=self.bias)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Numerically stable row softmax."""
    s = np.asarray(scores, dtype=np.float64)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def modulated_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                        weight: Optional[np.ndarray] = None,
                        bias: Optional[np.ndarray] = None) -> np.ndarray:
    """Weighted attention: softmax((QK^T/sqrt(d_k)) * W + B) V.

    ``weight=None`` means W = all ones and ``bias=None`` means B = 0, so the
    call collapses to plain scaled-dot-product attention.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("q, k, v must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise ValueError("q and k feature dimensions differ")
    if k.shape[0] != v.shape[0]:
        raise ValueError("k and v row counts differ")
    d_k = q.shape[1]
    scores = (q @ k.T) / math.sqrt(d_k)
    if weight is not None:
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != scores.shape:
            raise ValueError("weight matrix does not match score shape")
        scores = scores * weight
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != scores.shape:
            raise ValueError("bias does not match score shape")
        scores = scores + bias
    return softmax_rows(scores) @ v


def charbonnier(a: np.ndarray, b: np.ndarray, eps: float = CHARBONNIER_EPS,
                per_pixel: bool = False) -> float:
    """Smooth L2-like penalty between two images.

    Global form sqrt(sum((a-b)^2) + eps^2); identical inputs give exactly
    eps.  ``per_pixel=True`` switches to mean(sqrt((a-b)^2 + eps^2)).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    d2 = (a - b) ** 2
    if per_pixel:
        return float(np.mean(np.sqrt(d2 + eps * eps)))
    return float(math.sqrt(d2.sum() + eps * eps))


def charbonnier_grad(a: np.ndarray, b: np.ndarray,
                     eps: float = CHARBONNIER_EPS) -> np.ndarray:
    """Analytic gradient of the global charbonnier form w.r.t. ``a``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    d = a - b
    return d / math.sqrt((d * d).sum() + eps * eps)


def partition_windows(array: np.ndarray, m: int) -> np.ndarray:
    """Split an (h, w[, c]) map into flattened non-overlapping windows.

    Returns (n_windows, m*m) or (n_windows, m*m, c); h and w must divide
    evenly by m.
    """
    a = np.asarray(array)
    if a.ndim not in (2, 3):
        raise ValueError("expected an (h, w) or (h, w, c) array")
    h, w = a.shape[:2]
    if h % m or w % m:
        raise ValueError(f"{h}x{w} map does not tile with {m}x{m} windows")
    gh, gw = h // m, w // m
    tail = a.shape[2:]
    a = a.reshape(gh, m, gw, m, *tail)
    a = np.moveaxis(a, 2, 1)
    return a.reshape(gh * gw, m * m, *tail)


def merge_windows(windows: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of partition_windows for the same (height, width)."""
    wins = np.asarray(windows)
    n_tok = wins.shape[1]
    m = math.isqrt(n_tok)
    if m * m != n_tok:
        raise ValueError("window rows are not a square pixel count")
    gh, gw = height // m, width // m
    if gh * gw != wins.shape[0] or height % m or width % m:
        raise ValueError("window count does not match the target size")
    tail = wins.shape[2:]
    a = wins.reshape(gh, gw, m, m, *tail)
    a = np.moveaxis(a, 1, 2)
    return a.reshape(height, width, *tail)


def resample_bilinear(array: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinearly resample an (h, w[, c]) map to (height, width[, c]).

    Output pixel centers map back into the source grid (half-pixel aligned)
    and clamp at the borders, the usual image-resize convention.
    """
    a = np.asarray(array, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise ValueError("expected an (h, w) or (h, w, c) array")
    h, w = a.shape[:2]
    ys = np.clip((np.arange(height) + 0.5) * (h / height) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(width) + 0.5) * (w / width) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if a.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    top = a[y0[:, None], x0[None, :]] * (1 - wx) + a[y0[:, None], x1[None, :]] * wx
    bot = a[y1[:, None], x0[None, :]] * (1 - wx) + a[y1[:, None], x1[None, :]] * wx
    return top * (1 - wy) + bot * wy
