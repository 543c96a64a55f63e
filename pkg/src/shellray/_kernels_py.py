"""Pure-NumPy kernel implementations.

This module defines the canonical numeric semantics of the hot kernels; the
compiled extension (`_kernels.pyx`) mirrors every expression so both backends
produce bit-identical results.  Keep the two files in sync op for op —
association order of float arithmetic matters here, transcendental functions
do not belong in kernels (callers precompute them with NumPy).
"""

import numpy as np

GRAD_EPS = 1e-8


# ---------------------------------------------------------------------------
# trilinear interpolation
# ---------------------------------------------------------------------------

def _cell_coords(origin, spacing, resolution, points):
    """Clamped cell indices and fractional offsets for each point."""
    u = (points - origin) / spacing
    idx = np.floor(u)
    np.clip(idx, 0.0, resolution.astype(np.float64) - 2.0, out=idx)
    idx = idx.astype(np.int64)
    t = u - idx
    np.clip(t, 0.0, 1.0, out=t)
    return idx, t


def trilinear_gather(channels, origin, spacing, points):
    """Sample all channels at `points` with clamp-to-edge boundary handling.

    channels: (nx, ny, nz, C) float64, points: (N, 3) -> (N, C).
    """
    res = np.asarray(channels.shape[:3], dtype=np.int64)
    idx, t = _cell_coords(origin, spacing, res, points)
    ii, jj, kk = idx[:, 0], idx[:, 1], idx[:, 2]
    wx = (1.0 - t[:, 0], t[:, 0])
    wy = (1.0 - t[:, 1], t[:, 1])
    wz = (1.0 - t[:, 2], t[:, 2])
    acc = None
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                w = (wx[cx] * wy[cy]) * wz[cz]
                vals = channels[ii + cx, jj + cy, kk + cz, :]
                term = w[:, None] * vals
                acc = term if acc is None else acc + term
    return acc


def trilinear_scatter(channels, origin, spacing, points, grads):
    """Accumulate per-point gradients `grads` (N, C) into `channels` in place.

    Addition order is canonical: per corner, a fresh accumulator is filled in
    point order (np.bincount semantics) and added to the grid once.
    """
    nx, ny, nz, C = channels.shape
    res = np.asarray((nx, ny, nz), dtype=np.int64)
    idx, t = _cell_coords(origin, spacing, res, points)
    ii, jj, kk = idx[:, 0], idx[:, 1], idx[:, 2]
    wx = (1.0 - t[:, 0], t[:, 0])
    wy = (1.0 - t[:, 1], t[:, 1])
    wz = (1.0 - t[:, 2], t[:, 2])
    V = nx * ny * nz
    flat = channels.reshape(V, C)
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                w = (wx[cx] * wy[cy]) * wz[cz]
                cell = ((ii + cx) * ny + (jj + cy)) * nz + (kk + cz)
                acc = np.empty((V, C), dtype=np.float64)
                for ch in range(C):
                    acc[:, ch] = np.bincount(cell, weights=w * grads[:, ch], minlength=V)
                flat += acc


# ---------------------------------------------------------------------------
# level-set evolution step
# ---------------------------------------------------------------------------

def _diff(a, axis, h):
    """Central differences in the interior, one-sided at the boundary."""
    g = np.empty_like(a)
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    mid = [slice(None)] * 3
    lo[axis], hi[axis], mid[axis] = slice(0, -2), slice(2, None), slice(1, -1)
    two_h = 2.0 * h
    g[tuple(mid)] = (a[tuple(hi)] - a[tuple(lo)]) / two_h
    first, second = [slice(None)] * 3, [slice(None)] * 3
    first[axis], second[axis] = 0, 1
    g[tuple(first)] = (a[tuple(second)] - a[tuple(first)]) / h
    last, prev = [slice(None)] * 3, [slice(None)] * 3
    last[axis], prev[axis] = -1, -2
    g[tuple(last)] = (a[tuple(last)] - a[tuple(prev)]) / h
    return g


def levelset_step(f, vel, omega, dt, lam, hx, hy, hz):
    """One forward-Euler step: f - dt * omega * |grad f| * (vel + lam * kappa).

    `omega` is the precomputed falloff window on the current iterate.
    """
    gx = _diff(f, 0, hx)
    gy = _diff(f, 1, hy)
    gz = _diff(f, 2, hz)
    mag = np.sqrt((gx * gx + gy * gy) + gz * gz)
    if lam != 0.0:
        ok = mag > GRAD_EPS
        inv = np.divide(1.0, mag, out=np.zeros_like(mag), where=ok)
        kap = (_diff(gx * inv, 0, hx) + _diff(gy * inv, 1, hy)) + _diff(gz * inv, 2, hz)
        kap = np.where(ok, kap, 0.0)
        sp = vel + lam * kap
    else:
        sp = vel
    return f - (dt * omega) * (mag * sp)


# ---------------------------------------------------------------------------
# front-to-back compositing scan
# ---------------------------------------------------------------------------

def composite_padded(alphas, colors, seg_counts, bg, add_bg, t_min):
    """Composite per-ray segment opacities/colors front to back.

    alphas: (R, S) padded with zeros beyond seg_counts, colors: (R, S, 3),
    seg_counts: (R,) int64, bg: (3,), add_bg: (R,) bool-like, t_min: float
    (0 disables early termination).  Returns (color (R,3), T (R,),
    segs_used (R,)) with sequential front-to-back semantics.
    """
    R, S = alphas.shape
    color = np.zeros((R, 3), dtype=np.float64)
    T_end = np.ones(R, dtype=np.float64)
    segs_used = seg_counts.astype(np.int64).copy()
    if S > 0:
        t_run = np.cumprod(1.0 - alphas, axis=1)
        t_before = np.empty_like(t_run)
        t_before[:, 0] = 1.0
        t_before[:, 1:] = t_run[:, :-1]
        terms = (t_before * alphas)[:, :, None] * colors
        csum = np.cumsum(terms, axis=1)
        cols = np.arange(S, dtype=np.int64)[None, :]
        in_ray = cols < seg_counts[:, None]
        if t_min > 0.0:
            below = (t_run < t_min) & in_ray
            cut = np.argmax(below, axis=1)
            has_cut = below.any(axis=1)
            segs_used = np.where(has_cut, cut + 1, segs_used)
        nonempty = segs_used > 0
        last = np.maximum(segs_used - 1, 0)
        rows = np.arange(R)
        color[nonempty] = csum[rows, last][nonempty]
        T_end[nonempty] = t_run[rows, last][nonempty]
    add = np.asarray(add_bg, dtype=bool)
    color[add] += T_end[add, None] * bg[None, :]
    return color, T_end, segs_used


# ---------------------------------------------------------------------------
# BVH all-hits traversal
# ---------------------------------------------------------------------------

def bvh_hits(node_min, node_max, node_left, node_right, node_start, node_count,
             tri_perm, verts, tris, origins, dirs, tnear, tfar, max_hits):
    """All ray/triangle intersections with t in the open (tnear, tfar).

    Nodes are a preorder-flattened tree; node_count > 0 marks a leaf holding
    tri_perm[start : start + count].  Returns (counts (N,), ts (N, max_hits),
    tri_ids (N, max_hits)) with per-ray hits sorted by (t, triangle index).
    A count of -1 flags hit-buffer overflow for that ray.
    """
    n_rays = origins.shape[0]
    counts = np.zeros(n_rays, dtype=np.int64)
    out_t = np.zeros((n_rays, max_hits), dtype=np.float64)
    out_tri = np.zeros((n_rays, max_hits), dtype=np.int64)
    if node_min.shape[0] == 0:
        return counts, out_t, out_tri

    bmin = node_min.tolist()
    bmax = node_max.tolist()
    left = node_left.tolist()
    right = node_right.tolist()
    start = node_start.tolist()
    count = node_count.tolist()
    perm = tri_perm.tolist()
    V = verts.tolist()
    T = tris.tolist()
    O = origins.tolist()
    D = dirs.tolist()
    t0s = tnear.tolist()
    t1s = tfar.tolist()

    for r in range(n_rays):
        ox, oy, oz = O[r]
        dx, dy, dz = D[r]
        t_lo, t_hi = t0s[r], t1s[r]
        hits = []
        stack = [0]
        while stack:
            node = stack.pop()
            # slab test against [t_lo, t_hi]
            nmin = bmin[node]
            nmax = bmax[node]
            tmin, tmax = t_lo, t_hi
            ok = True
            for o, d, lo_, hi_ in ((ox, dx, nmin[0], nmax[0]),
                                   (oy, dy, nmin[1], nmax[1]),
                                   (oz, dz, nmin[2], nmax[2])):
                if d != 0.0:
                    inv = 1.0 / d
                    ta = (lo_ - o) * inv
                    tb = (hi_ - o) * inv
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > tmin:
                        tmin = ta
                    if tb < tmax:
                        tmax = tb
                    if tmin > tmax:
                        ok = False
                        break
                elif o < lo_ or o > hi_:
                    ok = False
                    break
            if not ok:
                continue
            c = count[node]
            if c > 0:
                s = start[node]
                for m in range(s, s + c):
                    tri = perm[m]
                    ia, ib, ic = T[tri]
                    ax, ay, az = V[ia]
                    e1x = V[ib][0] - ax
                    e1y = V[ib][1] - ay
                    e1z = V[ib][2] - az
                    e2x = V[ic][0] - ax
                    e2y = V[ic][1] - ay
                    e2z = V[ic][2] - az
                    px = dy * e2z - dz * e2y
                    py = dz * e2x - dx * e2z
                    pz = dx * e2y - dy * e2x
                    det = e1x * px + e1y * py + e1z * pz
                    if -1e-12 < det < 1e-12:
                        continue
                    inv_det = 1.0 / det
                    tx = ox - ax
                    ty = oy - ay
                    tz = oz - az
                    u = (tx * px + ty * py + tz * pz) * inv_det
                    if u < 0.0 or u > 1.0:
                        continue
                    qx = ty * e1z - tz * e1y
                    qy = tz * e1x - tx * e1z
                    qz = tx * e1y - ty * e1x
                    v = (dx * qx + dy * qy + dz * qz) * inv_det
                    if v < 0.0 or u + v > 1.0:
                        continue
                    t_hit = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                    if t_lo < t_hit < t_hi:
                        hits.append((t_hit, tri))
            else:
                stack.append(right[node])
                stack.append(left[node])
        hits.sort()
        if len(hits) > max_hits:
            counts[r] = -1
            continue
        counts[r] = len(hits)
        for m, (t_hit, tri) in enumerate(hits):
            out_t[r, m] = t_hit
            out_tri[r, m] = tri
    return counts, out_t, out_tri
