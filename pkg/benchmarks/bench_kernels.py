"""Timing comparison of the compiled kernel extension vs the NumPy fallback.

Sizes mirror the pipeline's real workloads: grid sampling and gradient
scatter during training, level-set evolution at extraction resolution,
per-ray compositing scans, and BVH all-hits queries.  Outputs of the two
backends are asserted bit-identical before anything is timed.

Run from the repository root:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from shellray import _kernels_py

try:
    from shellray import _kernels as _compiled
except ImportError:
    _compiled = None

from shellray.trace import TriMesh, build_bvh


def sphere_mesh(nu=64, nv=32, radius=0.6):
    """Lat-long sphere with welded pole vertices, outward winding."""
    us = 2.0 * np.pi * np.arange(nu) / nu
    vs = np.pi * (np.arange(1, nv) / nv)
    ring = np.stack([np.outer(np.sin(vs), np.cos(us)),
                     np.outer(np.sin(vs), np.sin(us)),
                     np.outer(np.cos(vs), np.ones(nu))], axis=-1)
    verts = np.concatenate([[(0.0, 0.0, 1.0)], ring.reshape(-1, 3),
                            [(0.0, 0.0, -1.0)]]) * radius
    tris = []
    def rid(i, j):
        return 1 + i * nu + (j % nu)
    for j in range(nu):
        tris.append((0, rid(0, j), rid(0, j + 1)))
        tris.append((len(verts) - 1, rid(nv - 2, j + 1), rid(nv - 2, j)))
    for i in range(nv - 2):
        for j in range(nu):
            a, b = rid(i, j), rid(i, j + 1)
            c, d = rid(i + 1, j), rid(i + 1, j + 1)
            tris.append((a, c, b))
            tris.append((b, c, d))
    return TriMesh(np.asarray(verts), np.asarray(tris, dtype=np.int64))


def make_workloads(rng):
    out = []

    channels = rng.normal(size=(64, 64, 64, 8))
    origin = np.array([-1.0, -1.0, -1.0])
    spacing = np.full(3, 2.0 / 63)
    points = rng.uniform(-1.0, 1.0, size=(200_000, 3))
    out.append(("trilinear_gather", 5, lambda k: k.trilinear_gather(
        channels, origin, spacing, points)))

    grads = rng.normal(size=(200_000, 8))

    def scatter(k):
        buf = np.zeros((64, 64, 64, 8))
        k.trilinear_scatter(buf, origin, spacing, points, grads)
        return buf
    out.append(("trilinear_scatter", 5, scatter))

    n = 128
    axis = np.linspace(-1.0, 1.0, n)
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
    f = np.sqrt(xx * xx + yy * yy + zz * zz) - 0.5
    vel = np.full_like(f, 0.02)
    omega = 0.5 * (1.0 + np.cos(np.pi * np.clip(f / 0.1, -1.0, 1.0)))
    h = float(axis[1] - axis[0])
    out.append(("levelset_step", 5, lambda k: k.levelset_step(
        f, vel, omega, 0.1, 0.01, h, h, h)))

    rays, segs = 65_536, 24
    alphas = rng.uniform(0.0, 0.3, size=(rays, segs))
    colors = rng.uniform(0.0, 1.0, size=(rays, segs, 3))
    seg_counts = rng.integers(0, segs + 1, size=rays)
    alphas[np.arange(segs)[None, :] >= seg_counts[:, None]] = 0.0
    bg = np.array([0.2, 0.3, 0.4])
    add_bg = (rng.uniform(size=rays) < 0.8).astype(np.uint8)
    out.append(("composite_padded", 5, lambda k: k.composite_padded(
        alphas, colors, seg_counts, bg, add_bg, 1e-4)))

    bvh = build_bvh(sphere_mesh())
    n_rays = 2000
    origins = np.column_stack([rng.uniform(-0.8, 0.8, size=(n_rays, 2)),
                               np.full(n_rays, -2.0)])
    dirs = np.tile(np.array([0.0, 0.0, 1.0]), (n_rays, 1))
    tnear = np.zeros(n_rays)
    tfar = np.full(n_rays, np.inf)
    out.append(("bvh_hits", 2, lambda k: k.bvh_hits(
        bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
        bvh.node_start, bvh.node_count, bvh.tri_perm,
        bvh.mesh.vertices, bvh.mesh.triangles,
        origins, dirs, tnear, tfar, 16)))

    return out


def as_tuple(result):
    return result if isinstance(result, tuple) else (result,)


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(2024)
    workloads = make_workloads(rng)

    if _compiled is None:
        print("compiled extension not importable; timing the fallback only")
    else:
        for name, _, fn in workloads:
            for a, b in zip(as_tuple(fn(_compiled)), as_tuple(fn(_kernels_py))):
                assert np.array_equal(a, b), f"{name}: backends disagree"
        print("outputs bit-identical across backends: yes")

    header = f"{'kernel':<20}{'pure':>12}{'compiled':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, repeats, fn in workloads:
        t_pure = best_of(lambda: fn(_kernels_py), repeats)
        if _compiled is None:
            print(f"{name:<20}{t_pure * 1e3:>10.2f}ms{'--':>12}{'--':>10}")
        else:
            t_comp = best_of(lambda: fn(_compiled), repeats)
            print(f"{name:<20}{t_pure * 1e3:>10.2f}ms{t_comp * 1e3:>10.2f}ms"
                  f"{t_pure / t_comp:>9.1f}x")


if __name__ == "__main__":
    main()
