"""Triangle meshes, BVH construction, and all-hits ray queries.

Queries enumerate every ray/triangle intersection with t strictly inside
(t_near, t_far), sorted by distance, each classified ENTERING when the ray
direction opposes the triangle's geometric normal (counter-clockwise winding
seen from outside).  Hits sharing an identical t are collapsed: a mixed
entering/exiting tie is a grazing pair and drops out entirely, a same-flag
tie keeps the lowest triangle index.  The brute-force path exists as the
correctness oracle for the BVH and uses the same epsilon conventions
(|det| < 1e-12 rejected, inclusive barycentric bounds).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .backend import kernels
from .errors import MeshError

LEAF_SIZE = 4
_DET_EPS = 1e-12
_MAX_HITS_START = 64


class HitFlag(IntEnum):
    ENTERING = 0
    EXITING = 1


@dataclass(frozen=True)
class Hit:
    t: float
    flag: HitFlag
    tri: int


@dataclass
class TriMesh:
    vertices: np.ndarray   # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int64, counter-clockwise from outside

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise MeshError("triangle indices out of range")

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_normals(self) -> np.ndarray:
        """Unnormalized geometric normals, cross(v1 - v0, v2 - v0)."""
        tri = self.vertices[self.triangles]
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


@dataclass
class Bvh:
    """Preorder-flattened median-split tree; count > 0 marks a leaf."""

    mesh: TriMesh
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    tri_perm: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_min)


def build_bvh(mesh: TriMesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Median split on the longest axis of the centroid bounds."""
    nf = mesh.n_triangles
    if nf == 0:
        z3 = np.zeros((0, 3))
        zi = np.zeros(0, dtype=np.int64)
        return Bvh(mesh, z3, z3.copy(), zi, zi.copy(), zi.copy(), zi.copy(), zi.copy())
    tri = mesh.vertices[mesh.triangles]          # (F, 3, 3)
    tri_min = tri.min(axis=1)
    tri_max = tri.max(axis=1)
    centroids = tri.mean(axis=1)

    mins, maxs, lefts, rights, starts, counts = [], [], [], [], [], []
    perm: list[int] = []

    def build(idx: np.ndarray) -> int:
        node = len(mins)
        mins.append(tri_min[idx].min(axis=0))
        maxs.append(tri_max[idx].max(axis=0))
        lefts.append(-1)
        rights.append(-1)
        starts.append(-1)
        counts.append(0)
        if len(idx) <= leaf_size:
            starts[node] = len(perm)
            counts[node] = len(idx)
            perm.extend(int(i) for i in idx)
            return node
        cen = centroids[idx]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        order = idx[np.argsort(cen[:, axis], kind="stable")]
        half = len(order) // 2
        lefts[node] = build(order[:half])
        rights[node] = build(order[half:])
        return node

    build(np.arange(nf, dtype=np.int64))
    return Bvh(
        mesh,
        np.ascontiguousarray(mins, dtype=np.float64),
        np.ascontiguousarray(maxs, dtype=np.float64),
        np.asarray(lefts, dtype=np.int64),
        np.asarray(rights, dtype=np.int64),
        np.asarray(starts, dtype=np.int64),
        np.asarray(counts, dtype=np.int64),
        np.asarray(perm, dtype=np.int64),
    )


def _dedupe(ts: np.ndarray, tris: np.ndarray, entering: np.ndarray) -> list[Hit]:
    """Collapse exact-t ties; mixed-flag groups are grazes and vanish."""
    hits: list[Hit] = []
    i = 0
    n = len(ts)
    while i < n:
        j = i + 1
        while j < n and ts[j] == ts[i]:
            j += 1
        group = entering[i:j]
        if np.all(group == group[0]):
            flag = HitFlag.ENTERING if group[0] else HitFlag.EXITING
            hits.append(Hit(float(ts[i]), flag, int(tris[i])))
        i = j
    return hits


def _classify(mesh: TriMesh, dirs: np.ndarray, ray_ids: np.ndarray,
              tri_ids: np.ndarray) -> np.ndarray:
    normals = mesh.triangle_normals()
    dots = np.einsum("ij,ij->i", dirs[ray_ids], normals[tri_ids])
    return dots < 0.0


def cast_all_hits_batch(bvh: Bvh, origins: np.ndarray, dirs: np.ndarray,
                        t_near, t_far) -> list[list[Hit]]:
    """All-hits query for a batch of rays; one deduplicated Hit list each."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = len(origins)
    t_near = np.ascontiguousarray(np.broadcast_to(t_near, (n,)), dtype=np.float64)
    t_far = np.ascontiguousarray(np.broadcast_to(t_far, (n,)), dtype=np.float64)
    out: list[list[Hit]] = [[] for _ in range(n)]
    if bvh.n_nodes == 0:
        return out

    pending = np.arange(n)
    max_hits = _MAX_HITS_START
    while len(pending):
        counts, ts, tris = kernels.bvh_hits(
            bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
            bvh.node_start, bvh.node_count, bvh.tri_perm,
            bvh.mesh.vertices, bvh.mesh.triangles,
            origins[pending], dirs[pending], t_near[pending], t_far[pending],
            max_hits)
        done = counts >= 0
        if done.any():
            rows = np.nonzero(done)[0]
            flat_rows = np.repeat(rows, counts[rows])
            offsets = np.concatenate([np.arange(c) for c in counts[rows]]) \
                if len(flat_rows) else np.zeros(0, dtype=np.int64)
            ray_ids = pending[flat_rows]
            hit_t = ts[flat_rows, offsets]
            hit_tri = tris[flat_rows, offsets]
            entering = _classify(bvh.mesh, dirs, ray_ids, hit_tri)
            bounds = np.concatenate([[0], np.cumsum(counts[rows])])
            for k, row in enumerate(rows):
                lo, hi = bounds[k], bounds[k + 1]
                out[pending[row]] = _dedupe(hit_t[lo:hi], hit_tri[lo:hi],
                                            entering[lo:hi])
        pending = pending[~done]
        max_hits *= 8
        if max_hits > 1 << 20:
            raise MeshError("ray intersects an implausible number of triangles")
    return out


def cast_all_hits(bvh: Bvh, ray) -> list[Hit]:
    """Single-ray convenience wrapper over the batched query."""
    return cast_all_hits_batch(
        bvh, ray.o[None, :], ray.d[None, :],
        np.array([ray.t_near]), np.array([ray.t_far]))[0]


def brute_force_all_hits(mesh: TriMesh, origins: np.ndarray, dirs: np.ndarray,
                         t_near, t_far) -> list[list[Hit]]:
    """Reference all-hits query testing every triangle, for oracle tests."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = len(origins)
    t_near = np.broadcast_to(np.asarray(t_near, dtype=np.float64), (n,))
    t_far = np.broadcast_to(np.asarray(t_far, dtype=np.float64), (n,))
    out: list[list[Hit]] = [[] for _ in range(n)]
    if mesh.n_triangles == 0:
        return out
    tri = mesh.vertices[mesh.triangles]
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    for r in range(n):
        d = dirs[r]
        p = np.cross(np.broadcast_to(d, e2.shape), e2)
        det = np.einsum("ij,ij->i", e1, p)
        valid = np.abs(det) >= _DET_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_det = np.where(valid, 1.0 / det, 0.0)
            tvec = origins[r] - v0
            u = np.einsum("ij,ij->i", tvec, p) * inv_det
            q = np.cross(tvec, e1)
            v = np.einsum("j,ij->i", d, q) * inv_det
            t = np.einsum("ij,ij->i", e2, q) * inv_det
        ok = valid & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0) \
            & (t > t_near[r]) & (t < t_far[r])
        ids = np.nonzero(ok)[0]
        if len(ids) == 0:
            continue
        order = np.lexsort((ids, t[ids]))
        ids = ids[order]
        ts = t[ids]
        entering = _classify(mesh, dirs[r:r + 1],
                             np.zeros(len(ids), dtype=np.int64), ids)
        out[r] = _dedupe(ts, ids, entering)
    return out
