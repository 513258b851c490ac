"""Compiled tracing and estimation kernels.

Everything here is numba-compiled, allocation-free in the hot loops, and
deterministic: all randomness comes from counter-based streams keyed by
(seed, pixel, sample, tag), so results are independent of tile order and
thread count. Scene data arrives as a flat namedtuple of arrays built by
tracer.compile_scene.

Estimator structure (one sample):
  direct   = emission at the camera hit + next-event light sample; the
             shadowed variant discards the light term when the shadow ray
             is blocked, the shadow-free variant always keeps it.
  indirect = BRDF-sampled walk that scores emissive geometry hit at bounce
             depth > 1. In the shadow-free variant a candidate bounce-1
             vertex is skipped ("transparent") when it is not background
             geometry and either the accumulated distance from the bounce-1
             origin is within `r` or trans_depth is odd; the walk continues
             straight through with weight 1 and the bounce counter frozen.
Both indirect variants run from identically initialized streams, which is
what makes the four buffers correlated.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .rng import U64, mix64, next_f64, stream_state

# Stream tags; one dimension of the (seed, pixel, sample, tag) key space.
TAG_PIXEL = U64(0)
TAG_LIGHT = U64(1)
TAG_PATH = U64(2)
TAG_RR = U64(3)
TAG_OCCUPANCY = U64(4)

EPS_GEOM = 1e-4  # self-intersection offset, meters

LUM_R = 0.2126
LUM_G = 0.7152
LUM_B = 0.0722

BVH_STACK = 64


# ---------------------------------------------------------------------------
# intersection

@njit(cache=True, inline="always")
def _ray_tri(v0x, v0y, v0z, e1x, e1y, e1z, e2x, e2y, e2z,
             ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore; returns (t, b1, b2), t < 0 on miss."""
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-14 < det < 1e-14:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - v0x
    ty = oy - v0y
    tz = oz - v0z
    b1 = (tx * px + ty * py + tz * pz) * inv
    if b1 < 0.0 or b1 > 1.0:
        return -1.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    b2 = (dx * qx + dy * qy + dz * qz) * inv
    if b2 < 0.0 or b1 + b2 > 1.0:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t, b1, b2


@njit(cache=True, inline="always")
def _slab(bmin, bmax, node, ox, oy, oz, dx, dy, dz, t0, t1):
    for c in range(3):
        o = ox if c == 0 else (oy if c == 1 else oz)
        d = dx if c == 0 else (dy if c == 1 else dz)
        inv = 1.0 / d if d != 0.0 else (np.inf if d >= 0 else -np.inf)
        ta = (bmin[node, c] - o) * inv
        tb = (bmax[node, c] - o) * inv
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:  # NaN compares false: boundary rays stay conservative
            t0 = ta
        if tb < t1:
            t1 = tb
    return t0 <= t1


@njit(cache=True)
def bvh_hit(data, ox, oy, oz, dx, dy, dz, tmin, tmax, stack):
    """Nearest hit: (t, tri, b1, b2); tri == -1 when the ray escapes.

    Exact ties on t resolve to the lowest triangle index, matching a
    brute-force first-wins scan.
    """
    best_t = tmax
    best_tri = -1
    best_b1 = 0.0
    best_b2 = 0.0
    if data.node_left.shape[0] == 0:
        return -1.0, -1, 0.0, 0.0
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab(data.node_min, data.node_max, node,
                     ox, oy, oz, dx, dy, dz, tmin, best_t):
            continue
        left = data.node_left[node]
        if left < 0:  # leaf
            start = -left - 1
            count = data.node_right[node]
            for k in range(start, start + count):
                tri = data.prim[k]
                t, b1, b2 = _ray_tri(
                    data.tri_v0[tri, 0], data.tri_v0[tri, 1], data.tri_v0[tri, 2],
                    data.tri_e1[tri, 0], data.tri_e1[tri, 1], data.tri_e1[tri, 2],
                    data.tri_e2[tri, 0], data.tri_e2[tri, 1], data.tri_e2[tri, 2],
                    ox, oy, oz, dx, dy, dz)
                if t > tmin and (t < best_t or (t == best_t and tri < best_tri)):
                    best_t = t
                    best_tri = tri
                    best_b1 = b1
                    best_b2 = b2
        else:
            stack[top] = left
            top += 1
            stack[top] = data.node_right[node]
            top += 1
    if best_tri < 0:
        return -1.0, -1, 0.0, 0.0
    return best_t, best_tri, best_b1, best_b2


@njit(cache=True)
def bvh_occluded(data, ox, oy, oz, dx, dy, dz, tmin, tmax, stack):
    """Any-hit query in (tmin, tmax)."""
    if data.node_left.shape[0] == 0:
        return False
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab(data.node_min, data.node_max, node,
                     ox, oy, oz, dx, dy, dz, tmin, tmax):
            continue
        left = data.node_left[node]
        if left < 0:
            start = -left - 1
            count = data.node_right[node]
            for k in range(start, start + count):
                tri = data.prim[k]
                t, _, _ = _ray_tri(
                    data.tri_v0[tri, 0], data.tri_v0[tri, 1], data.tri_v0[tri, 2],
                    data.tri_e1[tri, 0], data.tri_e1[tri, 1], data.tri_e1[tri, 2],
                    data.tri_e2[tri, 0], data.tri_e2[tri, 1], data.tri_e2[tri, 2],
                    ox, oy, oz, dx, dy, dz)
                if tmin < t < tmax:
                    return True
        else:
            stack[top] = left
            top += 1
            stack[top] = data.node_right[node]
            top += 1
    return False


# ---------------------------------------------------------------------------
# sampling

@njit(cache=True, inline="always")
def _cosine_dir(nx, ny, nz, u1, u2):
    """Cosine-weighted direction about the (unit) normal; pdf = cos/pi."""
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    t0x = 1.0 + sign * nx * nx * a
    t0y = sign * b
    t0z = -sign * nx
    t1x = b
    t1y = sign + ny * ny * a
    t1z = -ny
    rad = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    x = rad * math.cos(phi)
    y = rad * math.sin(phi)
    z = math.sqrt(max(0.0, 1.0 - u1))
    return (x * t0x + y * t1x + z * nx,
            x * t0y + y * t1y + z * ny,
            x * t0z + y * t1z + z * nz)


@njit(cache=True, inline="always")
def _albedo_at(data, mat, tri, b1, b2):
    tex = data.mat_tex[mat]
    if tex < 0 or tri < 0:
        return data.mat_albedo[mat, 0], data.mat_albedo[mat, 1], data.mat_albedo[mat, 2]
    b0 = 1.0 - b1 - b2
    u = (b0 * data.tri_uv[tri, 0, 0] + b1 * data.tri_uv[tri, 1, 0]
         + b2 * data.tri_uv[tri, 2, 0])
    v = (b0 * data.tri_uv[tri, 0, 1] + b1 * data.tri_uv[tri, 1, 1]
         + b2 * data.tri_uv[tri, 2, 1])
    u -= math.floor(u)
    v -= math.floor(v)
    w = data.tex_w[tex]
    h = data.tex_h[tex]
    ix = min(int(u * w), w - 1)
    iy = min(int((1.0 - v) * h), h - 1)
    row = data.tex_off[tex] + iy * w + ix
    return data.tex_data[row, 0], data.tex_data[row, 1], data.tex_data[row, 2]


@njit(cache=True)
def light_sample(data, px, py, pz, state):
    """Next-event sample toward one active light.

    Returns (state, Lr, Lg, Lb, wx, wy, wz, pdf, dist, light). The uniform
    light-selection probability is folded into pdf. Delta lights fold their
    geometry term into L (contribution L/pdf = flux / (4 pi d^2) for a
    single point light). pdf == 0 flags a void sample (no lights, light
    behind the horizon of its own panel, zero distance).
    """
    n_lights = data.light_kind.shape[0]
    if n_lights == 0:
        return state, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1
    state, u = next_f64(state)
    li = min(int(u * n_lights), n_lights - 1)
    sel_pdf = 1.0 / n_lights
    kind = data.light_kind[li]
    if kind == 0 or kind == 2:  # point / spot
        dx = data.light_pos[li, 0] - px
        dy = data.light_pos[li, 1] - py
        dz = data.light_pos[li, 2] - pz
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < 1e-12:
            return state, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, li
        dist = math.sqrt(d2)
        wx = dx / dist
        wy = dy / dist
        wz = dz / dist
        scale = 1.0 / (4.0 * math.pi * d2)
        if kind == 2:
            # hard cone about the spot axis
            cosang = -(wx * data.light_dir[li, 0] + wy * data.light_dir[li, 1]
                       + wz * data.light_dir[li, 2])
            if cosang < data.light_cos[li]:
                scale = 0.0
        return (state, data.light_flux[li, 0] * scale,
                data.light_flux[li, 1] * scale, data.light_flux[li, 2] * scale,
                wx, wy, wz, sel_pdf, dist, li)
    # area set: pick a triangle by area, then a uniform point on it
    state, ua = next_f64(state)
    state, u1 = next_f64(state)
    state, u2 = next_f64(state)
    start = data.light_tri_start[li]
    count = data.light_tri_count[li]
    total = data.light_area[li]
    target = ua * total
    k = start
    while k < start + count - 1 and data.ltri_cum[k] < target:
        k += 1
    tri = data.ltri_idx[k]
    su = math.sqrt(u1)
    b1 = su * (1.0 - u2)
    b2 = su * u2
    qx = data.tri_v0[tri, 0] + b1 * data.tri_e1[tri, 0] + b2 * data.tri_e2[tri, 0]
    qy = data.tri_v0[tri, 1] + b1 * data.tri_e1[tri, 1] + b2 * data.tri_e2[tri, 1]
    qz = data.tri_v0[tri, 2] + b1 * data.tri_e1[tri, 2] + b2 * data.tri_e2[tri, 2]
    dx = qx - px
    dy = qy - py
    dz = qz - pz
    d2 = dx * dx + dy * dy + dz * dz
    if d2 < 1e-12:
        return state, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, li
    dist = math.sqrt(d2)
    wx = dx / dist
    wy = dy / dist
    wz = dz / dist
    # one-sided panel: emits only toward its +normal half-space
    cos_l = -(wx * data.tri_n[tri, 0] + wy * data.tri_n[tri, 1]
              + wz * data.tri_n[tri, 2])
    if cos_l <= 1e-12:
        return state, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, li
    pdf = sel_pdf * d2 / (total * cos_l)
    mat = data.tri_mat[tri]
    return (state, data.mat_emit[mat, 0], data.mat_emit[mat, 1],
            data.mat_emit[mat, 2], wx, wy, wz, pdf, dist, li)


# ---------------------------------------------------------------------------
# estimators

@njit(cache=True)
def direct_both(data, px, py, pz, ngx, ngy, ngz, wox, woy, woz,
                mat, tri, b1, b2, state, stack):
    """Direct estimate at a camera hit, shadow-free and shadowed variants.

    Returns (state, fr, fg, fb, sr, sg, sb). The two variants share the
    light sample, so shadowed <= shadow-free holds per channel exactly.
    """
    er = 0.0
    eg = 0.0
    eb = 0.0
    if data.mat_kind[mat] == 1:
        facing = ngx * wox + ngy * woy + ngz * woz
        if facing > 0.0:
            er = data.mat_emit[mat, 0]
            eg = data.mat_emit[mat, 1]
            eb = data.mat_emit[mat, 2]
        return state, er, eg, eb, er, eg, eb
    state, lr, lg, lb, wx, wy, wz, pdf, dist, _ = light_sample(data, px, py, pz, state)
    if pdf <= 0.0:
        return state, er, eg, eb, er, eg, eb
    # shade on the side the viewer sees
    side = 1.0 if (ngx * wox + ngy * woy + ngz * woz) >= 0.0 else -1.0
    nsx = ngx * side
    nsy = ngy * side
    nsz = ngz * side
    cos_s = nsx * wx + nsy * wy + nsz * wz
    if cos_s <= 0.0:
        return state, er, eg, eb, er, eg, eb
    ar, ag, ab = _albedo_at(data, mat, tri, b1, b2)
    scale = cos_s / (math.pi * pdf)
    vr = lr * ar * scale
    vg = lg * ag * scale
    vb = lb * ab * scale
    ox2 = px + nsx * EPS_GEOM
    oy2 = py + nsy * EPS_GEOM
    oz2 = pz + nsz * EPS_GEOM
    blocked = bvh_occluded(data, ox2, oy2, oz2, wx, wy, wz,
                           0.0, dist - 2.0 * EPS_GEOM, stack)
    fr = er + vr
    fg = eg + vg
    fb = eb + vb
    if blocked:
        return state, fr, fg, fb, er, eg, eb
    return state, fr, fg, fb, fr, fg, fb


@njit(cache=True)
def indirect_walk(data, px, py, pz, ngx, ngy, ngz, wox, woy, woz,
                  mat, tri, is_bg, b1, b2, with_shadow,
                  bounce0, trans_depth0, acc0, tr0, tg0, tb0,
                  r_radius, max_bounce, rr_start, segment_mode,
                  path_state, rr_state, stack):
    """Indirect estimator from a surface vertex (see module docstring)."""
    lr = 0.0
    lg = 0.0
    lb = 0.0
    tr = tr0
    tg = tg0
    tb = tb0
    bounce = bounce0
    td = trans_depth0
    acc = acc0
    while True:
        facing = ngx * wox + ngy * woy + ngz * woz
        if data.mat_kind[mat] == 1:
            # emissive vertices terminate; depth 0/1 hits belong to direct
            if bounce > 1 and facing > 0.0:
                lr += tr * data.mat_emit[mat, 0]
                lg += tg * data.mat_emit[mat, 1]
                lb += tb * data.mat_emit[mat, 2]
            break
        if bounce >= max_bounce:
            break
        side = 1.0 if facing >= 0.0 else -1.0
        nsx = ngx * side
        nsy = ngy * side
        nsz = ngz * side
        path_state, u1 = next_f64(path_state)
        path_state, u2 = next_f64(path_state)
        dx, dy, dz = _cosine_dir(nsx, nsy, nsz, u1, u2)
        ar, ag, ab = _albedo_at(data, mat, tri, b1, b2)
        wr = ar
        wg = ag
        wb = ab
        binc = 1
        if (not with_shadow) and bounce == 1 and (not is_bg):
            if (acc <= r_radius) or (td % 2 == 1):
                # transparent continuation: straight through, unit weight
                dx = -wox
                dy = -woy
                dz = -woz
                wr = 1.0
                wg = 1.0
                wb = 1.0
                td += 1
                binc = 0
        if bounce >= rr_start:
            q = max(ar, ag, ab)
            q = min(max(q, 0.05), 0.95)
            rr_state, urr = next_f64(rr_state)
            if urr > q:
                break
            wr /= q
            wg /= q
            wb /= q
        side2 = 1.0 if (dx * ngx + dy * ngy + dz * ngz) >= 0.0 else -1.0
        ox2 = px + ngx * side2 * EPS_GEOM
        oy2 = py + ngy * side2 * EPS_GEOM
        oz2 = pz + ngz * side2 * EPS_GEOM
        t, tri2, nb1, nb2 = bvh_hit(data, ox2, oy2, oz2, dx, dy, dz,
                                    0.0, np.inf, stack)
        if tri2 < 0:
            break  # escaped; environment is black
        tr *= wr
        tg *= wg
        tb *= wb
        if binc == 0 or segment_mode:
            acc = t if segment_mode else acc + t
        elif bounce == 0:
            acc = t  # candidate bounce-1 vertex distance from its origin
        px = ox2 + dx * t
        py = oy2 + dy * t
        pz = oz2 + dz * t
        ngx = data.tri_n[tri2, 0]
        ngy = data.tri_n[tri2, 1]
        ngz = data.tri_n[tri2, 2]
        wox = -dx
        woy = -dy
        woz = -dz
        mat = data.tri_mat[tri2]
        tri = tri2
        is_bg = data.tri_bg[tri2]
        b1 = nb1
        b2 = nb2
        bounce += binc
    return lr, lg, lb


@njit(cache=True)
def radiance_sample(data, ox, oy, oz, dx, dy, dz, seed, pixel, sample,
                    r_radius, max_bounce, rr_start, segment_mode, stack):
    """All four per-sample estimates for one camera ray.

    Returns (dr_f, dr_s, idr_f, idr_s) as 12 floats. The two indirect walks
    start from identical stream states; the shadowed direct value reuses
    the shadow-free light sample.
    """
    t, tri, b1, b2 = bvh_hit(data, ox, oy, oz, dx, dy, dz, 0.0, np.inf, stack)
    if tri < 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    px = ox + dx * t
    py = oy + dy * t
    pz = oz + dz * t
    ngx = data.tri_n[tri, 0]
    ngy = data.tri_n[tri, 1]
    ngz = data.tri_n[tri, 2]
    mat = data.tri_mat[tri]
    light_state = stream_state(seed, pixel, sample, TAG_LIGHT)
    light_state, dfr, dfg, dfb, dsr, dsg, dsb = direct_both(
        data, px, py, pz, ngx, ngy, ngz, -dx, -dy, -dz,
        mat, tri, b1, b2, light_state, stack)
    path0 = stream_state(seed, pixel, sample, TAG_PATH)
    rr0 = stream_state(seed, pixel, sample, TAG_RR)
    ifr, ifg, ifb = indirect_walk(
        data, px, py, pz, ngx, ngy, ngz, -dx, -dy, -dz,
        mat, tri, data.tri_bg[tri], b1, b2, False,
        0, 0, 0.0, 1.0, 1.0, 1.0,
        r_radius, max_bounce, rr_start, segment_mode, path0, rr0, stack)
    isr, isg, isb = indirect_walk(
        data, px, py, pz, ngx, ngy, ngz, -dx, -dy, -dz,
        mat, tri, data.tri_bg[tri], b1, b2, True,
        0, 0, 0.0, 1.0, 1.0, 1.0,
        r_radius, max_bounce, rr_start, segment_mode, path0, rr0, stack)
    return dfr, dfg, dfb, dsr, dsg, dsb, ifr, ifg, ifb, isr, isg, isb


@njit(cache=True, inline="always")
def _pixel_ray(cam, col, row, jx, jy):
    fx = cam[12]
    fy = cam[13]
    cx = cam[14]
    cy = cam[15]
    u = (col + jx - cx) / fx
    v = (row + jy - cy) / fy
    dx = u * cam[3] - v * cam[6] + cam[9]
    dy = u * cam[4] - v * cam[7] + cam[10]
    dz = u * cam[5] - v * cam[8] + cam[11]
    inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
    return dx * inv, dy * inv, dz * inv


@njit(cache=True, parallel=True)
def render_kernel(data, cam, width, height, spp, seed,
                  r_radius, max_bounce, rr_start, segment_mode, per_sample_max,
                  dr_s, idr_s, dr_f, idr_f):
    """Accumulate the four buffers; one pixel never shares state with another."""
    for row in prange(height):
        stack = np.empty(BVH_STACK, dtype=np.int64)
        for col in range(width):
            pixel = U64(row * width + col)
            adfr = 0.0
            adfg = 0.0
            adfb = 0.0
            adsr = 0.0
            adsg = 0.0
            adsb = 0.0
            aifr = 0.0
            aifg = 0.0
            aifb = 0.0
            aisr = 0.0
            aisg = 0.0
            aisb = 0.0
            for s in range(spp):
                su = U64(s)
                pst = stream_state(seed, pixel, su, TAG_PIXEL)
                pst, jx = next_f64(pst)
                pst, jy = next_f64(pst)
                dx, dy, dz = _pixel_ray(cam, col, row, jx, jy)
                (dfr, dfg, dfb, dsr, dsg, dsb,
                 ifr, ifg, ifb, isr, isg, isb) = radiance_sample(
                    data, cam[0], cam[1], cam[2], dx, dy, dz,
                    seed, pixel, su, r_radius, max_bounce, rr_start,
                    segment_mode, stack)
                adfr += dfr
                adfg += dfg
                adfb += dfb
                adsr += dsr
                adsg += dsg
                adsb += dsb
                if per_sample_max:
                    lf = LUM_R * ifr + LUM_G * ifg + LUM_B * ifb
                    ls = LUM_R * isr + LUM_G * isg + LUM_B * isb
                    if ls > lf:
                        ifr = isr
                        ifg = isg
                        ifb = isb
                aifr += ifr
                aifg += ifg
                aifb += ifb
                aisr += isr
                aisg += isg
                aisb += isb
            inv = 1.0 / spp
            dr_f[row, col, 0] = adfr * inv
            dr_f[row, col, 1] = adfg * inv
            dr_f[row, col, 2] = adfb * inv
            dr_s[row, col, 0] = adsr * inv
            dr_s[row, col, 1] = adsg * inv
            dr_s[row, col, 2] = adsb * inv
            idr_f[row, col, 0] = aifr * inv
            idr_f[row, col, 1] = aifg * inv
            idr_f[row, col, 2] = aifb * inv
            idr_s[row, col, 0] = aisr * inv
            idr_s[row, col, 1] = aisg * inv
            idr_s[row, col, 2] = aisb * inv


@njit(cache=True, parallel=True)
def geometry_kernel(data, cam, width, height, depth, normal):
    """Center-ray depth (camera-space z) and camera-space normals.

    Normals are flipped toward the camera (n_z < 0). Missed pixels store
    zeros in both buffers.
    """
    for row in prange(height):
        stack = np.empty(BVH_STACK, dtype=np.int64)
        for col in range(width):
            dx, dy, dz = _pixel_ray(cam, col, row, 0.5, 0.5)
            t, tri, _, _ = bvh_hit(data, cam[0], cam[1], cam[2],
                                   dx, dy, dz, 0.0, np.inf, stack)
            if tri < 0:
                depth[row, col] = 0.0
                normal[row, col, 0] = 0.0
                normal[row, col, 1] = 0.0
                normal[row, col, 2] = 0.0
                continue
            zc = t * (dx * cam[9] + dy * cam[10] + dz * cam[11])
            depth[row, col] = zc
            nx = data.tri_n[tri, 0]
            ny = data.tri_n[tri, 1]
            nz = data.tri_n[tri, 2]
            cnx = nx * cam[3] + ny * cam[4] + nz * cam[5]
            cny = -(nx * cam[6] + ny * cam[7] + nz * cam[8])
            cnz = nx * cam[9] + ny * cam[10] + nz * cam[11]
            if cnz > 0.0:
                cnx = -cnx
                cny = -cny
                cnz = -cnz
            normal[row, col, 0] = cnx
            normal[row, col, 1] = cny
            normal[row, col, 2] = cnz


@njit(cache=True)
def occupancy_kernel(data, cam, width, height, m_rays, seed, counts):
    """Per-furniture nearest-hit counts over m uniformly placed view rays."""
    stack = np.empty(BVH_STACK, dtype=np.int64)
    for k in range(m_rays):
        st = stream_state(seed, U64(k), U64(0), TAG_OCCUPANCY)
        st, ux = next_f64(st)
        st, uy = next_f64(st)
        dx, dy, dz = _pixel_ray(cam, ux * width, uy * height, 0.0, 0.0)
        t, tri, _, _ = bvh_hit(data, cam[0], cam[1], cam[2],
                               dx, dy, dz, 0.0, np.inf, stack)
        if tri >= 0:
            furn = data.tri_furn[tri]
            if furn >= 0:
                counts[furn] += 1
