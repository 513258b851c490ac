"""Geometry-aware attention numerics: back-projection, depth normals,
planar distances, similarity weights, modulated softmax, and the
charbonnier objective, each pinned to hand-computed values."""

import math

import numpy as np
import pytest

from shadowset.attention import (
    AttentionWindow,
    CameraIntrinsics,
    WeightMatrices,
    backproject,
    charbonnier,
    charbonnier_grad,
    geometric_weights,
    merge_windows,
    modulated_attention,
    normals_from_depth,
    pairwise_planar_distance,
    partition_windows,
    planar_distance,
    resample_bilinear,
    semantic_weights,
    softmax_rows,
)
from shadowset.scene import CameraPose

INTR = CameraIntrinsics(fx=100.0, fy=100.0, cx=0.0, cy=0.0)


# ------------------------------------------------------------ backproject


def test_backproject_principal_point():
    intr = CameraIntrinsics(fx=50.0, fy=60.0, cx=3.0, cy=2.0)
    depth = np.full((5, 7), 2.0)
    points, valid = backproject(depth, intr)
    assert valid.all()
    np.testing.assert_array_equal(points[2, 3], [0.0, 0.0, 2.0])


def test_backproject_hand_pixel():
    depth = np.ones((1, 101))
    points, _ = backproject(depth, INTR)
    np.testing.assert_array_equal(points[0, 100], [1.0, 0.0, 1.0])


def test_backproject_homogeneous_in_depth():
    rng = np.random.default_rng(0)
    depth = rng.uniform(0.5, 4.0, (6, 8))
    intr = CameraIntrinsics(fx=80.0, fy=90.0, cx=4.0, cy=3.0)
    once, _ = backproject(depth, intr)
    twice, _ = backproject(2.0 * depth, intr)
    np.testing.assert_allclose(twice, 2.0 * once, rtol=1e-12)


def test_backproject_flags_bad_depth():
    depth = np.array([[1.0, 0.0], [-2.0, np.nan]])
    points, valid = backproject(depth, INTR)
    np.testing.assert_array_equal(valid, [[True, False], [False, False]])
    assert (points[~valid] == 0.0).all()


def test_intrinsics_reject_nonpositive_focal():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0)


def test_intrinsics_from_camera():
    pose = CameraPose(width=128, height=96, fov_deg=90.0)
    intr = CameraIntrinsics.from_camera(pose)
    assert intr.fx == pytest.approx(64.0)
    assert (intr.cx, intr.cy) == (64.0, 48.0)


# ------------------------------------------------------------ normals


def test_normals_flat_plane_face_camera():
    intr = CameraIntrinsics(fx=64.0, fy=64.0, cx=8.0, cy=8.0)
    points, valid = backproject(np.full((16, 16), 3.0), intr)
    normals = normals_from_depth(points, valid)
    np.testing.assert_allclose(normals, np.broadcast_to([0, 0, -1.0],
                                                        normals.shape),
                               atol=1e-12)


def test_normals_ramp_plane_analytic():
    # plane z = 1 + 0.1 x in camera space; solving the pinhole relation
    # x = z (u - cx)/fx gives z(u) = 1 / (1 - 0.1 (u - cx)/fx)
    h = w = 32
    intr = CameraIntrinsics(fx=256.0, fy=256.0, cx=w / 2, cy=h / 2)
    u = np.arange(w)[None, :] * np.ones((h, 1))
    depth = 1.0 / (1.0 - 0.1 * (u - intr.cx) / intr.fx)
    points, valid = backproject(depth, intr)
    normals = normals_from_depth(points, valid)
    expected = np.array([0.1, 0.0, -1.0]) / math.sqrt(1.01)
    np.testing.assert_allclose(normals[2:-2, 2:-2],
                               np.broadcast_to(expected, (h - 4, w - 4, 3)),
                               atol=1e-6)


def test_normals_unit_length():
    rng = np.random.default_rng(1)
    depth = rng.uniform(1.0, 3.0, (20, 20))
    points, valid = backproject(depth, INTR)
    normals = normals_from_depth(points, valid)
    np.testing.assert_allclose(np.linalg.norm(normals, axis=2), 1.0,
                               atol=1e-9)


def test_normals_degenerate_pixels_borrow_neighbor():
    intr = CameraIntrinsics(fx=64.0, fy=64.0, cx=8.0, cy=8.0)
    points, valid = backproject(np.full((16, 16), 2.0), intr)
    points[6:9, 6:9] = points[7, 7]  # flat spot: zero tangents inside
    normals = normals_from_depth(points, valid)
    assert np.isfinite(normals).all()
    np.testing.assert_allclose(np.linalg.norm(normals, axis=2), 1.0,
                               atol=1e-9)
    np.testing.assert_allclose(normals[7, 7], [0, 0, -1.0], atol=1e-9)


def test_normals_invalid_pixels_borrow_neighbor():
    depth = np.full((12, 12), 2.5)
    depth[4:6, 4:6] = -1.0
    points, valid = backproject(depth, INTR)
    normals = normals_from_depth(points, valid)
    np.testing.assert_allclose(normals, np.broadcast_to([0, 0, -1.0],
                                                        normals.shape),
                               atol=1e-9)


def test_normals_all_degenerate_fall_back_to_minus_z():
    points = np.zeros((4, 4, 3))
    normals = normals_from_depth(points)
    np.testing.assert_array_equal(normals[..., 2], -1.0)


# ------------------------------------------------------------ planar distance


def test_planar_distance_same_pixel_zero():
    p = np.array([0.3, -0.2, 1.7])
    n = np.array([0.0, 0.0, -1.0])
    assert planar_distance(p, n, p, n) == 0.0


def test_planar_distance_coplanar_zero():
    n = np.array([0.0, 0.0, -1.0])
    p_i = np.array([0.4, 0.1, 2.0])
    p_j = np.array([-1.2, 0.8, 2.0])
    assert planar_distance(p_i, n, p_j, n) == 0.0


def test_planar_distance_hand_value():
    n = np.array([0.0, 0.0, -1.0])
    d = planar_distance(np.array([0.0, 0.0, 1.0]), n,
                        np.array([0.0, 0.0, 2.0]), n)
    assert d == pytest.approx(1.0, abs=1e-15)


def test_pairwise_matrix_matches_scalar_op():
    rng = np.random.default_rng(2)
    pts = rng.normal(0, 1, (6, 3))
    nrm = rng.normal(0, 1, (6, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    mat = pairwise_planar_distance(pts, nrm)
    for i in range(6):
        for j in range(6):
            assert mat[i, j] == pytest.approx(
                planar_distance(pts[i], nrm[i], pts[j], nrm[j]), abs=1e-15)


def test_pairwise_matrix_symmetric_nonnegative_zero_diag():
    rng = np.random.default_rng(3)
    pts = rng.normal(0, 2, (25, 3))
    nrm = rng.normal(0, 1, (25, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    mat = pairwise_planar_distance(pts, nrm)
    np.testing.assert_array_equal(mat, mat.T)  # exact, not approximate
    assert (mat >= 0).all()
    np.testing.assert_array_equal(np.diag(mat), 0.0)


# ------------------------------------------------------------ weights


def test_semantic_identical_features_all_ones():
    f = np.tile([0.6, 0.8], (5, 1))
    np.testing.assert_allclose(semantic_weights(f), 1.0, atol=1e-12)


def test_semantic_orthogonal_pair_zero():
    f = np.array([[1.0, 0.0], [0.0, 1.0]])
    w = semantic_weights(f)
    assert w[0, 1] == 0.0 and w[1, 0] == 0.0
    np.testing.assert_array_equal(np.diag(w), 1.0)


def test_semantic_negative_dot_clamped():
    f = np.array([[1.0, 0.0], [-0.3, math.sqrt(1 - 0.09)]])
    w = semantic_weights(f)
    assert w[0, 1] == 0.0


def test_semantic_zero_row_uniform_and_flagged():
    f = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    with pytest.warns(UserWarning):
        w = semantic_weights(f)
    np.testing.assert_array_equal(w[1], 1.0 / 3.0)


def test_semantic_range_and_symmetry():
    rng = np.random.default_rng(4)
    f = rng.normal(0, 1, (12, 7))
    w = semantic_weights(f)
    assert (w >= 0).all() and (w <= 1).all()
    np.testing.assert_allclose(w, w.T, atol=1e-15)


def test_geometric_diag_one_and_e_inverse():
    pd = np.array([[0.0, 0.5], [0.5, 0.0]])
    w = geometric_weights(pd, sigma_g=0.5)
    np.testing.assert_array_equal(np.diag(w), 1.0)
    assert w[0, 1] == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_geometric_monotone_and_bounded():
    d = np.linspace(0, 10, 50)
    w = geometric_weights(d)
    assert (np.diff(w) <= 0).all()
    assert (w > 0).all() and (w <= 1).all()


def test_geometric_rejects_bad_sigma():
    with pytest.raises(ValueError):
        geometric_weights(np.zeros((2, 2)), sigma_g=0.0)


def test_weight_matrices_elementwise_and_matmul():
    rng = np.random.default_rng(5)
    a = rng.random((4, 4))
    b = rng.random((4, 4))
    built = WeightMatrices.build(a, b)
    np.testing.assert_array_equal(built.w, a * b)
    np.testing.assert_array_equal(WeightMatrices.build(a, b, matmul=True).w,
                                  a @ b)
    with pytest.raises(ValueError):
        WeightMatrices.build(a, rng.random((3, 3)))


# ------------------------------------------------------------ attention


def _plain_attention_reference(q, k, v):
    # independent arithmetic: explicit loops, no shared helpers
    n, d_k = q.shape
    out = np.zeros((n, v.shape[1]))
    for i in range(n):
        logits = np.array([q[i] @ k[j] / math.sqrt(d_k) for j in range(n)])
        e = np.exp(logits - logits.max())
        p = e / e.sum()
        out[i] = p @ v
    return out


def test_neutral_modulation_equals_plain_attention():
    rng = np.random.default_rng(6)
    q = rng.normal(0, 1, (9, 5))
    k = rng.normal(0, 1, (9, 5))
    v = rng.normal(0, 1, (9, 4))
    got = modulated_attention(q, k, v, weight=np.ones((9, 9)),
                              bias=np.zeros((9, 9)))
    np.testing.assert_allclose(got, _plain_attention_reference(q, k, v),
                               atol=1e-6)
    also = modulated_attention(q, k, v)  # omitted weight and bias
    np.testing.assert_allclose(also, got, atol=1e-12)


def test_single_token_returns_value_row():
    q = np.array([[3.0, -2.0]])
    k = np.array([[0.5, 8.0]])
    v = np.array([[7.0, 1.0, -4.0]])
    np.testing.assert_array_equal(modulated_attention(q, k, v), v)


def test_two_token_hand_softmax():
    q = np.eye(2)
    k = np.eye(2)
    v = np.array([[2.0, 3.0], [5.0, 7.0]])
    w = np.array([[1.0, math.exp(-1.0)], [math.exp(-1.0), 1.0]])
    out = modulated_attention(q, k, v, weight=w)
    s = 1.0 / math.sqrt(2.0)  # diagonal score; off-diagonal zeroed by QK^T
    p0 = math.exp(s) / (math.exp(s) + 1.0)
    expected = np.array([
        [p0 * 2.0 + (1 - p0) * 5.0, p0 * 3.0 + (1 - p0) * 7.0],
        [(1 - p0) * 2.0 + p0 * 5.0, (1 - p0) * 3.0 + p0 * 7.0],
    ])
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_weight_scales_nonzero_scores():
    # constant K makes every raw score q_i . (1,1)/sqrt(2); the weight then
    # reshapes rows before the softmax
    q = np.array([[1.0, 0.0], [0.0, 1.0]])
    k = np.ones((2, 2))
    v = np.array([[1.0, 0.0], [0.0, 1.0]])
    w = np.array([[1.0, math.exp(-1.0)], [math.exp(-1.0), 1.0]])
    out = modulated_attention(q, k, v, weight=w)
    s = 1.0 / math.sqrt(2.0)
    e_hi, e_lo = math.exp(s), math.exp(s * math.exp(-1.0))
    p_hi = e_hi / (e_hi + e_lo)
    expected = np.array([[p_hi, 1 - p_hi], [1 - p_hi, p_hi]])
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_softmax_rows_sum_to_one_nonnegative():
    rng = np.random.default_rng(7)
    q = rng.normal(0, 2, (16, 6))
    k = rng.normal(0, 2, (16, 6))
    w = rng.random((16, 16))
    b = rng.normal(0, 1, (16, 16))
    probs = modulated_attention(q, k, np.eye(16), weight=w, bias=b)
    assert (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_softmax_rows_stable_for_large_scores():
    rows = softmax_rows(np.array([[1000.0, 999.0], [-1000.0, -1000.0]]))
    assert np.isfinite(rows).all()
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)


def test_permutation_equivariance():
    rng = np.random.default_rng(8)
    n = 9
    q = rng.normal(0, 1, (n, 4))
    k = rng.normal(0, 1, (n, 4))
    v = rng.normal(0, 1, (n, 3))
    w = rng.random((n, n))
    b = rng.normal(0, 0.5, (n, n))
    perm = rng.permutation(n)
    base = modulated_attention(q, k, v, weight=w, bias=b)
    shuffled = modulated_attention(q[perm], k[perm], v[perm],
                                   weight=w[perm][:, perm],
                                   bias=b[perm][:, perm])
    np.testing.assert_allclose(shuffled, base[perm], atol=1e-12)


def test_attention_shape_mismatches():
    q = np.zeros((4, 3))
    k = np.zeros((4, 2))
    v = np.zeros((4, 2))
    with pytest.raises(ValueError):
        modulated_attention(q, k, v)
    with pytest.raises(ValueError):
        modulated_attention(np.zeros((4, 2)), k, v, weight=np.ones((3, 3)))
    with pytest.raises(ValueError):
        modulated_attention(np.zeros((4, 2)), k, v, bias=np.ones((5, 4)))
    with pytest.raises(ValueError):
        modulated_attention(np.zeros((4, 2)), k, np.zeros((5, 2)))


def test_window_attend_composes_pieces():
    rng = np.random.default_rng(9)
    m = 2
    n = m * m
    pts = rng.normal(0, 1, (n, 3))
    nrm = np.tile([0.0, 0.0, -1.0], (n, 1))
    feats = rng.random((n, 6))
    q = rng.normal(0, 1, (n, 4))
    k = rng.normal(0, 1, (n, 4))
    v = rng.normal(0, 1, (n, 4))
    bias = rng.normal(0, 0.1, (n, n))
    win = AttentionWindow(m=m, q=q, k=k, v=v, bias=bias,
                          points=pts, normals=nrm, features=feats)
    weights = win.weight_matrices()
    manual_w = (semantic_weights(feats)
                * geometric_weights(pairwise_planar_distance(pts, nrm)))
    np.testing.assert_array_equal(weights.w, manual_w)
    np.testing.assert_allclose(
        win.attend(weights),
        modulated_attention(q, k, v, weight=manual_w, bias=bias),
        atol=1e-15)


def test_window_validates_shapes():
    with pytest.raises(ValueError):
        AttentionWindow(m=2, q=np.zeros((3, 2)), k=np.zeros((4, 2)),
                        v=np.zeros((4, 2)))
    with pytest.raises(ValueError):
        AttentionWindow(m=2, q=np.zeros((4, 2)), k=np.zeros((4, 3)),
                        v=np.zeros((4, 2)))
    with pytest.raises(ValueError):
        AttentionWindow(m=2, q=np.zeros((4, 2)), k=np.zeros((4, 2)),
                        v=np.zeros((4, 2)), bias=np.zeros((4, 3)))


# ------------------------------------------------------------ charbonnier


def test_charbonnier_identical_is_exactly_eps():
    img = np.random.default_rng(10).random((8, 8))
    assert charbonnier(img, img) == 1e-3


def test_charbonnier_single_pixel_value():
    a = np.array([[1.0]])
    b = np.array([[0.0]])
    assert charbonnier(a, b) == pytest.approx(math.sqrt(1.0 + 1e-6),
                                              abs=1e-15)


def test_charbonnier_symmetric():
    rng = np.random.default_rng(11)
    a = rng.random((6, 6, 3))
    b = rng.random((6, 6, 3))
    assert charbonnier(a, b) == charbonnier(b, a)


def test_charbonnier_floor_strict_above_eps_when_different():
    a = np.zeros((4, 4))
    b = a.copy()
    b[2, 2] = 1e-6
    assert charbonnier(a, b) > 1e-3
    assert charbonnier(a, a) == 1e-3


def test_charbonnier_per_pixel_variant():
    a = np.array([[1.0, 0.0]])
    b = np.zeros((1, 2))
    expected = 0.5 * (math.sqrt(1 + 1e-6) + math.sqrt(1e-6))
    assert charbonnier(a, b, per_pixel=True) == pytest.approx(expected,
                                                              abs=1e-15)


def test_charbonnier_shape_mismatch():
    with pytest.raises(ValueError):
        charbonnier(np.zeros((2, 2)), np.zeros((2, 3)))


def test_charbonnier_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    a = rng.random((4, 4))
    b = rng.random((4, 4))
    grad = charbonnier_grad(a, b)
    h = 1e-6
    for idx in np.ndindex(a.shape):
        hi = a.copy()
        lo = a.copy()
        hi[idx] += h
        lo[idx] -= h
        fd = (charbonnier(hi, b) - charbonnier(lo, b)) / (2 * h)
        assert abs(fd - grad[idx]) <= 1e-4 * max(abs(fd), 1e-12)


# ------------------------------------------------------------ windows, resize


def test_partition_counts_for_default_window_size():
    img = np.zeros((512, 512))
    wins = partition_windows(img, 16)
    assert wins.shape == (1024, 256)  # 1024 windows of 256 tokens


def test_partition_contents_hand_case():
    img = np.arange(16).reshape(4, 4)
    wins = partition_windows(img, 2)
    np.testing.assert_array_equal(wins[0], [0, 1, 4, 5])
    np.testing.assert_array_equal(wins[1], [2, 3, 6, 7])
    np.testing.assert_array_equal(wins[2], [8, 9, 12, 13])


def test_partition_merge_roundtrip_with_channels():
    rng = np.random.default_rng(13)
    img = rng.random((32, 48, 3))
    wins = partition_windows(img, 8)
    assert wins.shape == (24, 64, 3)
    np.testing.assert_array_equal(merge_windows(wins, 32, 48), img)


def test_partition_rejects_nondivisible():
    with pytest.raises(ValueError):
        partition_windows(np.zeros((30, 32)), 16)


def test_resample_identity_and_constant():
    rng = np.random.default_rng(14)
    img = rng.random((9, 7))
    np.testing.assert_allclose(resample_bilinear(img, 9, 7), img, atol=1e-12)
    up = resample_bilinear(np.full((4, 4), 0.3), 12, 10)
    np.testing.assert_allclose(up, 0.3, atol=1e-12)


def test_resample_ramp_hand_values():
    row = np.array([[0.0, 1.0]])
    up = resample_bilinear(row, 1, 4)
    np.testing.assert_allclose(up[0], [0.0, 0.25, 0.75, 1.0], atol=1e-12)
    wide = np.array([[0.0, 1.0, 2.0, 3.0]])
    down = resample_bilinear(wide, 1, 2)
    np.testing.assert_allclose(down[0], [0.5, 2.5], atol=1e-12)


def test_resample_preserves_channels():
    rng = np.random.default_rng(15)
    img = rng.random((6, 5, 4))
    out = resample_bilinear(img, 12, 10)
    assert out.shape == (12, 10, 4)
    for c in range(4):
        np.testing.assert_allclose(out[..., c],
                                   resample_bilinear(img[..., c], 12, 10),
                                   atol=1e-12)
