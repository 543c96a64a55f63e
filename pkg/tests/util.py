"""Shared test helpers: radial surface probing and reference meshes."""

import numpy as np


def octasphere(subdivisions, radius=0.5, center=(0.0, 0.0, 0.0)):
    """Closed sphere mesh from octahedron subdivision, outward winding.

    Vertices are welded exactly via a midpoint cache, so the mesh is
    watertight by construction.  Returns (vertices (V, 3), triangles (F, 3)).
    """
    verts = [(1.0, 0, 0), (-1.0, 0, 0), (0, 1.0, 0),
             (0, -1.0, 0), (0, 0, 1.0), (0, 0, -1.0)]
    faces = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
             (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = np.add(verts[a], verts[b]) / 2.0
                verts.append(tuple(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    v = np.asarray(verts, dtype=np.float64) * radius + np.asarray(center)
    return v, np.asarray(faces, dtype=np.int64)


def probe_directions(n, seed=0):
    """n unit directions drawn from a fixed-seed isotropic Gaussian."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def radial_zero_crossings(sample_fn, directions, r_lo, r_hi, n_steps=601,
                          center=(0.0, 0.0, 0.0)):
    """First negative-to-positive crossing radius along each direction.

    sample_fn maps (N, 3) points to N scalar field values.  Returns an array
    of crossing radii (directions without a crossing are omitted).
    """
    center = np.asarray(center, dtype=np.float64)
    rs = np.linspace(r_lo, r_hi, n_steps)
    pts = center[None, None, :] + directions[:, None, :] * rs[None, :, None]
    vals = np.asarray(sample_fn(pts.reshape(-1, 3))).reshape(len(directions), n_steps)
    radii = []
    for row in vals:
        idx = np.nonzero((row[:-1] <= 0.0) & (row[1:] > 0.0))[0]
        if len(idx):
            i = idx[0]
            t = row[i] / (row[i] - row[i + 1])
            radii.append(rs[i] + t * (rs[i + 1] - rs[i]))
    return np.asarray(radii)
