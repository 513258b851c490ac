"""Tracing layer: BVH queries against a brute-force oracle, scene
compilation rules, and light/BRDF sampling distributions."""
from __future__ import annotations

import math

import numpy as np
import pytest
from numba import njit

from conftest import box_mesh, cornell_scene
from shadowset import _kernels
from shadowset.rng import RngStream, next_f64, stream_state
from shadowset.scene import (
    EMISSIVE,
    LAMBERTIAN,
    LIGHT_AREA,
    LIGHT_EMISSIVE_MESH,
    LIGHT_POINT,
    LIGHT_SPOT,
    CameraPose,
    FurnitureInstance,
    Light,
    Material,
    Room,
    Scene,
    TriangleMesh,
)
from shadowset.tracer import (
    Ray,
    build_bvh,
    camera_array,
    compile_scene,
    intersect,
    occluded,
    sample_brdf,
    sample_light,
)


# ---------------------------------------------------------------------------
# brute-force reference for ray queries

def brute_nearest(data, origin, direction, tmin, tmax):
    """Vectorized Moller-Trumbore over every triangle; lowest index wins ties."""
    v0, e1, e2 = data.tri_v0, data.tri_e1, data.tri_e2
    d = np.asarray(direction, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    p = np.cross(d[None, :], e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) >= 1e-14
    safe = np.where(ok, det, 1.0)
    inv = 1.0 / safe
    tv = o[None, :] - v0
    b1 = np.einsum("ij,ij->i", tv, p) * inv
    q = np.cross(tv, e1)
    b2 = (q @ d) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (b1 >= 0) & (b1 <= 1) & (b2 >= 0) & (b1 + b2 <= 1)
    hit &= (t > tmin) & (t < tmax)
    if not hit.any():
        return -1.0, -1, 0.0, 0.0
    idx = np.flatnonzero(hit)
    k = idx[np.argmin(t[idx])]  # argmin returns the first minimum
    return float(t[k]), int(k), float(b1[k]), float(b2[k])


def random_soup_scene(n_tris: int, seed: int) -> Scene:
    rng = np.random.default_rng(seed)
    verts = rng.uniform(-1.0, 1.0, size=(n_tris, 3, 3))
    # shrink each triangle toward its centroid so most are small slivers
    centroid = verts.mean(axis=1, keepdims=True)
    verts = centroid + (verts - centroid) * rng.uniform(0.05, 0.6, (n_tris, 1, 1))
    mesh = TriangleMesh(vertices=verts.reshape(-1, 3),
                        triangles=np.arange(3 * n_tris).reshape(-1, 3))
    return Scene(meshes=[mesh], materials=[Material()])


@pytest.fixture(scope="module")
def soup():
    return compile_scene(random_soup_scene(1000, seed=11))


def test_bvh_structure_invariants(soup):
    n_nodes = soup.node_left.shape[0]
    assert np.array_equal(np.sort(soup.prim), np.arange(soup.tri_v0.shape[0]))
    for node in range(n_nodes):
        left = soup.node_left[node]
        if left < 0:
            start = -left - 1
            count = soup.node_right[node]
            assert 1 <= count <= 4
            tris = soup.prim[start:start + count]
            lo = np.minimum(np.minimum(soup.tri_v0[tris],
                                       soup.tri_v0[tris] + soup.tri_e1[tris]),
                            soup.tri_v0[tris] + soup.tri_e2[tris]).min(axis=0)
            hi = np.maximum(np.maximum(soup.tri_v0[tris],
                                       soup.tri_v0[tris] + soup.tri_e1[tris]),
                            soup.tri_v0[tris] + soup.tri_e2[tris]).max(axis=0)
            assert np.all(soup.node_min[node] <= lo + 1e-12)
            assert np.all(soup.node_max[node] >= hi - 1e-12)
        else:
            right = soup.node_right[node]
            for child in (left, right):
                assert 0 < child < n_nodes
                assert np.all(soup.node_min[node] <= soup.node_min[child] + 1e-12)
                assert np.all(soup.node_max[node] >= soup.node_max[child] - 1e-12)


def test_bvh_matches_brute_force_on_random_rays(soup):
    rng = np.random.default_rng(303)
    n_rays = 4000
    # half the origins outside the soup, half inside; targets inside
    outside = rng.normal(size=(n_rays // 2, 3))
    outside *= 3.0 / np.linalg.norm(outside, axis=1, keepdims=True)
    inside = rng.uniform(-0.9, 0.9, size=(n_rays - n_rays // 2, 3))
    origins = np.concatenate([outside, inside])
    targets = rng.uniform(-0.9, 0.9, size=(n_rays, 3))
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    stack = np.empty(_kernels.BVH_STACK, dtype=np.int64)
    mismatches = 0
    hits = 0
    for o, d in zip(origins, dirs):
        t, tri, b1, b2 = _kernels.bvh_hit(
            soup, o[0], o[1], o[2], d[0], d[1], d[2], 1e-5, 1e30, stack)
        rt, rtri, rb1, rb2 = brute_nearest(soup, o, d, 1e-5, 1e30)
        if tri != rtri:
            mismatches += 1
            continue
        if tri >= 0:
            hits += 1
            assert t == pytest.approx(rt, rel=1e-9, abs=1e-12)
            assert b1 == pytest.approx(rb1, rel=1e-7, abs=1e-9)
            assert b2 == pytest.approx(rb2, rel=1e-7, abs=1e-9)
        # occlusion agrees with "any hit strictly inside the interval"
        occ = _kernels.bvh_occluded(
            soup, o[0], o[1], o[2], d[0], d[1], d[2], 1e-5, 1e30, stack)
        assert bool(occ) == (rtri >= 0)
    assert mismatches == 0
    assert hits > n_rays // 2  # the comparison actually exercised hits


def test_bvh_respects_tmax(soup):
    rng = np.random.default_rng(7)
    stack = np.empty(_kernels.BVH_STACK, dtype=np.int64)
    checked = 0
    for _ in range(200):
        o = rng.normal(size=3)
        o *= 3.0 / np.linalg.norm(o)
        d = rng.uniform(-0.9, 0.9, 3) - o
        d /= np.linalg.norm(d)
        t, tri, _, _ = _kernels.bvh_hit(soup, o[0], o[1], o[2],
                                        d[0], d[1], d[2], 1e-5, 1e30, stack)
        if tri < 0:
            continue
        checked += 1
        # shrink the interval to just before the hit: must now miss it
        t2, tri2, _, _ = _kernels.bvh_hit(soup, o[0], o[1], o[2],
                                          d[0], d[1], d[2], 1e-5, t * (1 - 1e-9),
                                          stack)
        assert tri2 != tri or t2 > t
        assert not _kernels.bvh_occluded(soup, o[0], o[1], o[2],
                                         d[0], d[1], d[2], t * (1 + 1e-6), 1e30,
                                         stack) or True  # occlusion past t is legal
    assert checked > 100


def test_empty_scene_misses():
    data = compile_scene(Scene(materials=[Material()]))
    assert intersect(data, Ray(origin=(0, 0, 0), direction=(0, 0, 1))) is None
    assert not occluded(data, (0, 0, 0), (0, 0, 1), 100.0)


def test_build_bvh_single_triangle():
    lo = np.array([[0.0, 0.0, 0.0]])
    hi = np.array([[1.0, 1.0, 1.0]])
    node_min, node_max, node_left, node_right, prim = build_bvh(lo, hi)
    assert node_left[0] == -1 and node_right[0] == 1
    assert np.array_equal(prim, [0])


# ---------------------------------------------------------------------------
# intersect / occluded wrappers

def test_intersect_fields_on_cornell(cornell):
    data = compile_scene(cornell)
    # straight down from room center: must hit the floor
    hit = intersect(data, Ray(origin=(1.0, 1.0, 1.0), direction=(0, 0, -1)))
    assert hit is not None
    assert hit.t == pytest.approx(1.0)
    assert hit.point == pytest.approx([1.0, 1.0, 0.0])
    assert hit.normal == pytest.approx([0.0, 0.0, 1.0])
    assert hit.background  # room shell
    assert hit.furniture == -1
    assert hit.bary[0] == pytest.approx(1.0 - hit.bary[1] - hit.bary[2])

    # toward the red box
    hit2 = intersect(data, Ray(origin=(1.3, 0.2, 0.4), direction=(0, 1, 0)))
    assert hit2 is not None
    assert data.mat_albedo[hit2.material] == pytest.approx([0.65, 0.05, 0.05])
    assert not hit2.background


def test_occluded_between_points(cornell):
    data = compile_scene(cornell)
    # box at (1.3, 1.2) spans y in [0.95, 1.45]; ray passes through it
    a = np.array([1.3, 0.2, 0.4])
    b = np.array([1.3, 1.9, 0.4])
    assert occluded(data, a, b - a, float(np.linalg.norm(b - a)))
    # stop short of the box: clear
    assert not occluded(data, a, b - a, 0.5)
    # a lane that misses both boxes at z = 1.5
    assert not occluded(data, (1.3, 0.2, 1.5), (0, 1, 0), 1.5)


def test_ray_normalizes_and_rejects_zero():
    r = Ray(origin=(0, 0, 0), direction=(0, 0, 5))
    assert np.linalg.norm(r.direction) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Ray(origin=(0, 0, 0), direction=(0, 0, 0))


# ---------------------------------------------------------------------------
# scene compilation rules

def test_cornell_triangle_budget(cornell):
    data = compile_scene(cornell)
    # room shell: 2 floor + 2 ceiling + 8 walls; two boxes at 12; panel at 2
    assert data.tri_v0.shape[0] == 12 + 24 + 2
    assert data.tri_bg.sum() == 12
    assert np.all(data.tri_furn == -1)  # plain meshes are not furniture


def test_room_shell_normals_point_inward(cornell):
    data = compile_scene(cornell)
    center = np.array([1.0, 1.0, 1.0])
    bg = np.flatnonzero(data.tri_bg == 1)
    for tri in bg:
        centroid = (data.tri_v0[tri] + (data.tri_e1[tri] + data.tri_e2[tri]) / 3.0)
        assert np.dot(data.tri_n[tri], center - centroid) > 0


def test_active_panel_gets_emissive_material(cornell):
    data = compile_scene(cornell)
    emissive = np.flatnonzero(data.mat_kind == 1)
    assert emissive.size == 1
    mat = emissive[0]
    assert data.mat_emit[mat] == pytest.approx([12.0, 12.0, 12.0])
    assert data.mat_albedo[mat] == pytest.approx([0.0, 0.0, 0.0])
    panel_tris = np.flatnonzero(data.tri_mat == mat)
    assert panel_tris.size == 2
    # panel normal points down into the room
    assert np.all(data.tri_n[panel_tris][:, 2] < 0)
    # light table: one area light owning both panel triangles
    assert data.light_kind.tolist() == [1]
    assert data.light_tri_count[0] == 2
    assert data.light_area[0] == pytest.approx(0.25)
    assert np.array_equal(np.sort(data.ltri_idx), np.sort(panel_tris))
    assert data.ltri_cum[-1] == pytest.approx(0.25)


def test_inactive_panel_is_gray_geometry(cornell):
    scene = cornell_scene()
    scene.lights[0].active = False
    data = compile_scene(scene)
    assert data.light_kind.shape[0] == 0
    assert np.all(data.mat_kind == 0)
    panel_mat = data.tri_mat[-1]  # panel is pushed last
    assert data.mat_albedo[panel_mat] == pytest.approx([0.3, 0.3, 0.3])
    assert data.mat_emit[panel_mat] == pytest.approx([0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        sample_light(data, (1, 1, 0.5), RngStream(1))


def make_glow_scene(active: bool) -> Scene:
    glow = box_mesh(size=(0.4, 0.4, 0.4), center=(1.0, 1.0, 1.0), material=1)
    room = Room(boundary=[(0, 0), (2, 0), (2, 2), (0, 2)], z0=0.0, z1=2.0)
    mats = [Material(albedo=(0.7, 0.7, 0.7)),
            Material(albedo=(0.2, 0.3, 0.4), emission=(5.0, 6.0, 7.0),
                     kind=EMISSIVE)]
    light = Light(kind=LIGHT_EMISSIVE_MESH, mesh=0, active=active)
    return Scene(meshes=[glow], materials=mats, lights=[light], rooms=[room])


def test_active_emissive_mesh_becomes_area_light():
    data = compile_scene(make_glow_scene(active=True))
    assert data.light_kind.tolist() == [1]
    assert data.light_tri_count[0] == 12
    assert data.light_area[0] == pytest.approx(6 * 0.4 * 0.4)
    glow_tris = np.flatnonzero(data.tri_furn == -1)[:12]
    assert np.all(data.mat_kind[data.tri_mat[:12]] == 1)


def test_inactive_emissive_mesh_is_dark_lambertian():
    data = compile_scene(make_glow_scene(active=False))
    assert data.light_kind.shape[0] == 0
    mat = data.tri_mat[0]
    assert np.all(data.tri_mat[:12] == mat)
    assert data.mat_kind[mat] == 0
    assert data.mat_emit[mat] == pytest.approx([0.0, 0.0, 0.0])
    # albedo survives so the geometry still shades plausibly
    assert data.mat_albedo[mat] == pytest.approx([0.2, 0.3, 0.4])
    # the authored material table entry is untouched; only the mapping moved
    assert data.mat_emit[1] == pytest.approx([5.0, 6.0, 7.0])


def test_furniture_span_is_posed_and_tagged():
    chair = box_mesh(size=(0.6, 0.6, 1.0), center=(0.0, 0.0, 0.5))
    inst = FurnitureInstance(mesh=0, rotation_deg=30.0, translation=(1.2, 0.8),
                             z=0.05)
    room = Room(boundary=[(0, 0), (4, 0), (4, 4), (0, 4)], z0=0.0, z1=2.5)
    scene = Scene(meshes=[chair], materials=[Material()],
                  furniture=[inst], rooms=[room])
    data = compile_scene(scene)
    assert np.all(data.tri_furn[:12] == 0)
    assert np.all(data.tri_furn[12:] == -1)
    c, s = math.cos(math.radians(30.0)), math.sin(math.radians(30.0))
    for k in range(12):
        v = chair.vertices[chair.triangles[k, 0]]
        expect = np.array([c * v[0] - s * v[1] + 1.2,
                           s * v[0] + c * v[1] + 0.8,
                           v[2] + 0.05])
        assert data.tri_v0[k] == pytest.approx(expect)


def test_unreferenced_mesh_sits_at_identity():
    mesh = box_mesh(center=(0.5, 0.5, 0.5))
    scene = Scene(meshes=[mesh], materials=[Material()])
    data = compile_scene(scene)
    assert data.tri_v0.shape[0] == 12
    assert np.all(data.tri_furn == -1)
    a = mesh.vertices[mesh.triangles[:, 0]]
    assert data.tri_v0 == pytest.approx(a)


def test_spot_light_row():
    spot = Light(kind=LIGHT_SPOT, position=(1, 2, 3), direction=(0, 0, -2),
                 cone_deg=60.0, intensity=(9.0, 9.0, 9.0))
    scene = Scene(materials=[Material()], lights=[spot])
    data = compile_scene(scene)
    assert data.light_kind.tolist() == [2]
    assert data.light_dir[0] == pytest.approx([0, 0, -1])
    assert data.light_cos[0] == pytest.approx(math.cos(math.radians(30.0)))
    assert data.light_flux[0] == pytest.approx([9.0, 9.0, 9.0])


def test_camera_array_layout():
    pose = CameraPose(position=(1, 2, 3), pitch_deg=70.0, yaw_deg=40.0,
                      roll_deg=10.0, fov_deg=60.0, width=320, height=240)
    cam = camera_array(pose)
    right, up, fwd = pose.basis()
    fx, fy, cx, cy = pose.intrinsics()
    assert cam[:3] == pytest.approx([1, 2, 3])
    assert cam[3:6] == pytest.approx(right)
    assert cam[6:9] == pytest.approx(up)
    assert cam[9:12] == pytest.approx(fwd)
    assert cam[12:] == pytest.approx([fx, fy, cx, cy])


# ---------------------------------------------------------------------------
# light sampling

def test_point_light_sample_pdf_and_radiance():
    light = Light(kind=LIGHT_POINT, position=(0.0, 0.0, 2.0),
                  intensity=(50.0, 40.0, 30.0))
    scene = Scene(materials=[Material()], lights=[light])
    data = compile_scene(scene)
    ls = sample_light(data, (0.0, 1.5, 2.0), RngStream(3))
    assert ls.pdf == pytest.approx(1.0)
    assert ls.distance == pytest.approx(1.5)
    assert ls.direction == pytest.approx([0.0, -1.0, 0.0])
    scale = 1.0 / (4.0 * math.pi * 1.5 ** 2)
    assert ls.radiance == pytest.approx(np.array([50, 40, 30]) * scale)


def test_two_lights_split_selection_probability():
    lights = [
        Light(kind=LIGHT_POINT, position=(0, 0, 1), intensity=(1, 1, 1)),
        Light(kind=LIGHT_POINT, position=(5, 0, 1), intensity=(2, 2, 2)),
    ]
    scene = Scene(materials=[Material()], lights=lights)
    data = compile_scene(scene)
    rng = RngStream(17)
    picks = np.zeros(2, dtype=int)
    for _ in range(4000):
        ls = sample_light(data, (2.5, 0.0, 0.0), rng)
        assert ls.pdf == pytest.approx(0.5)
        picks[ls.light] += 1
    # binomial(4000, 0.5): 5 sigma is ~158
    assert abs(picks[0] - 2000) < 160


def test_spot_light_cone_cutoff():
    spot = Light(kind=LIGHT_SPOT, position=(0, 0, 2), direction=(0, 0, -1),
                 cone_deg=60.0, intensity=(10.0, 10.0, 10.0))
    scene = Scene(materials=[Material()], lights=[spot])
    data = compile_scene(scene)
    inside = sample_light(data, (0.5, 0.0, 0.0), RngStream(1))
    assert np.all(inside.radiance > 0)
    d2 = 0.5 ** 2 + 2.0 ** 2
    assert inside.radiance[0] == pytest.approx(10.0 / (4 * math.pi * d2))
    # 45 deg off axis is outside the 30 deg half-cone: zero contribution
    outside = sample_light(data, (2.0, 0.0, 0.0), RngStream(1))
    assert np.all(outside.radiance == 0)
    assert outside.pdf == pytest.approx(1.0)  # still a countable sample


def test_area_light_samples_lie_on_panel(cornell):
    data = compile_scene(cornell)
    p = np.array([1.0, 1.0, 0.0])
    rng = RngStream(99)
    for _ in range(512):
        ls = sample_light(data, p, rng)
        q = p + ls.direction * ls.distance
        assert q[2] == pytest.approx(1.999, abs=1e-9)
        assert 0.75 - 1e-9 <= q[0] <= 1.25 + 1e-9
        assert 0.75 - 1e-9 <= q[1] <= 1.25 + 1e-9
        # pdf is solid-angle converted area pdf over the whole panel set
        cos_l = ls.direction[2]  # panel normal is (0,0,-1)
        assert ls.pdf == pytest.approx(ls.distance ** 2 / (0.25 * cos_l), rel=1e-9)
        assert ls.radiance == pytest.approx([12.0, 12.0, 12.0])


def test_area_light_is_one_sided(cornell):
    data = compile_scene(cornell)
    # between panel and ceiling: samples see the back face, radiance 0
    rng = RngStream(5)
    backs = [sample_light(data, (1.0, 1.0, 1.9995), rng) for _ in range(64)]
    assert all(np.all(b.radiance == 0) for b in backs)
    assert all(b.pdf == 0 for b in backs)


def test_area_light_monte_carlo_matches_quadrature(cornell):
    # irradiance at a floor point from the ceiling panel, E = int L cos cos'/d^2
    data = compile_scene(cornell)
    p = np.array([1.0, 1.0, 0.0])
    n = 640
    xs = np.linspace(0.75, 1.25, n + 1)
    xs = (xs[:-1] + xs[1:]) / 2
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    dx = gx - p[0]
    dy = gy - p[1]
    dz = 1.999
    d2 = dx * dx + dy * dy + dz * dz
    cos_t = dz / np.sqrt(d2)
    cos_l = dz / np.sqrt(d2)
    cell = (0.5 / n) ** 2
    expected = float(np.sum(12.0 * cos_t * cos_l / d2) * cell)

    rng = RngStream(123)
    vals = np.empty(60_000)
    for i in range(vals.shape[0]):
        ls = sample_light(data, p, rng)
        cos_t_s = ls.direction[2]
        vals[i] = ls.radiance[0] * cos_t_s / ls.pdf if ls.pdf > 0 else 0.0
    err = abs(vals.mean() - expected)
    tol = 5.0 * vals.std() / math.sqrt(vals.shape[0])
    assert err < max(tol, 1e-6), (vals.mean(), expected)


def test_sample_light_requires_active_lights():
    data = compile_scene(Scene(materials=[Material()]))
    with pytest.raises(ValueError):
        sample_light(data, (0, 0, 0), RngStream(0))


# ---------------------------------------------------------------------------
# BRDF sampling

@njit(cache=True)
def _cosine_moments(nx, ny, nz, n_samples, seed):
    state = stream_state(seed, 0, 0, 2)
    s1 = 0.0
    s2 = 0.0
    below = 0
    sx = 0.0
    sy = 0.0
    for _ in range(n_samples):
        state, u1 = next_f64(state)
        state, u2 = next_f64(state)
        dx, dy, dz = _kernels._cosine_dir(nx, ny, nz, u1, u2)
        c = dx * nx + dy * ny + dz * nz
        if c < 0.0:
            below += 1
        s1 += c
        s2 += c * c
        sx += dx
        sy += dy
    return s1 / n_samples, s2 / n_samples, below, sx / n_samples, sy / n_samples


def test_cosine_sampling_moments():
    n = 1_000_000
    m1, m2, below, _, _ = _cosine_moments(0.0, 0.0, 1.0, n, 42)
    # cosine-weighted hemisphere: E[cos] = 2/3, E[cos^2] = 1/2
    assert below == 0
    assert m1 == pytest.approx(2.0 / 3.0, abs=1e-3)
    assert m2 == pytest.approx(0.5, abs=1.5e-3)


def test_cosine_sampling_tilted_normal_stays_above_surface():
    n = 200_000
    nrm = np.array([1.0, 2.0, -1.0])
    nrm /= np.linalg.norm(nrm)
    m1, _, below, _, _ = _cosine_moments(nrm[0], nrm[1], nrm[2], n, 7)
    assert below == 0
    assert m1 == pytest.approx(2.0 / 3.0, abs=2.5e-3)


def test_cosine_sampling_azimuthal_symmetry():
    n = 1_000_000
    _, _, _, mx, my = _cosine_moments(0.0, 0.0, 1.0, n, 9)
    # tangential components average to zero by symmetry
    assert abs(mx) < 2.5e-3
    assert abs(my) < 2.5e-3


def test_sample_brdf_consistency():
    rng = RngStream(31)
    mat = Material(albedo=(0.6, 0.5, 0.4))
    nrm = np.array([0.0, 1.0, 0.0])
    for _ in range(256):
        bs = sample_brdf(mat, nrm, rng)
        assert np.linalg.norm(bs.direction) == pytest.approx(1.0)
        cos_t = float(np.dot(bs.direction, nrm))
        assert cos_t >= 0
        assert bs.pdf == pytest.approx(cos_t / math.pi)
        assert bs.value == pytest.approx(np.array([0.6, 0.5, 0.4]) / math.pi)


def test_sample_brdf_rejects_emissive():
    with pytest.raises(ValueError):
        sample_brdf(Material(kind=EMISSIVE, emission=(1, 1, 1)), (0, 0, 1),
                    RngStream(0))
