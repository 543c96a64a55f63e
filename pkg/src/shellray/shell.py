"""Two-mesh shell extraction around the visually significant density.

From a signed-distance grid f0 and kernel-size grid s, a per-vertex opacity
probe drives two windowed level-set evolutions: a dilation moving the surface
outward where opacity is non-negligible, and an erosion moving it inward at a
rate inversely proportional to opacity.  Clamping against f0 makes the moves
strict, and marching cubes turns the two resulting grids into the outer and
inner boundary meshes.  Sharp surfaces (tiny s) produce a thin shell; fuzzy
regions (large s) produce a thick one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _mc_tables as mc
from .errors import DomainError, MeshError
from .field import alpha_interval
from .grids import ScalarGrid
from .levelset import EvolutionParams, evolve
from .trace import TriMesh

_EDGE_AXIS = np.zeros(12, dtype=np.int64)
_EDGE_BASE = np.zeros((12, 3), dtype=np.int64)
for _e, (_a, _b) in enumerate(mc.EDGE_CORNERS):
    _oa = np.array(mc.CORNER_OFFSETS[_a])
    _ob = np.array(mc.CORNER_OFFSETS[_b])
    _EDGE_AXIS[_e] = int(np.nonzero(_oa != _ob)[0][0])
    _EDGE_BASE[_e] = np.minimum(_oa, _ob)

# the stored triples wind the other way; swapping two corners makes the
# geometric normals face toward increasing field values
_TRI_ARRAYS = [np.asarray(t, dtype=np.int64).reshape(-1, 3)[:, [0, 2, 1]]
               for t in mc.TRI_TABLE]


def default_evolution_dilate() -> EvolutionParams:
    return EvolutionParams(steps=50, dt=0.1, zeta=0.1, lambda_curv=0.01)


def default_evolution_erode() -> EvolutionParams:
    return EvolutionParams(steps=50, dt=0.1, zeta=0.05, lambda_curv=0.0)


@dataclass(frozen=True)
class ShellParams:
    beta_d: float = 1.0
    sigma_min: float = 0.01
    beta_e: float = 0.001
    v_max: float = 100.0
    tau_d: float | None = None  # None: use the smallest grid spacing
    dilation: EvolutionParams = dc_field(default_factory=default_evolution_dilate)
    erosion: EvolutionParams = dc_field(default_factory=default_evolution_erode)

    def __post_init__(self):
        for name in ("beta_d", "sigma_min", "beta_e", "v_max"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"{name} must be positive")
        if self.tau_d is not None and self.tau_d <= 0.0:
            raise DomainError("tau_d must be positive")


@dataclass
class Shell:
    outer: TriMesh          # dilated boundary
    inner: TriMesh          # eroded boundary, possibly empty
    sdf_plus: ScalarGrid    # min(f0, dilated field)
    sdf_minus: ScalarGrid   # max(f0, eroded field)


def opacity_grid(f: ScalarGrid, s: ScalarGrid, tau_d: float) -> ScalarGrid:
    """Per-vertex opacity of a tau_d-long probe crossing the vertex."""
    if not f.layout.congruent(s.layout):
        raise DomainError("opacity probe needs congruent f and s grids")
    if tau_d <= 0.0:
        raise DomainError("tau_d must be positive")
    half = 0.5 * tau_d
    alpha = alpha_interval(f.values + half, s.values, f.values - half, s.values)
    return ScalarGrid(f.layout, alpha)


def dilation_velocity(alpha: ScalarGrid, beta_d: float, sigma_min: float) -> ScalarGrid:
    """beta_d * alpha where alpha exceeds sigma_min strictly, else exactly 0."""
    out = np.where(alpha.values > sigma_min, beta_d * alpha.values, 0.0)
    return ScalarGrid(alpha.layout, out)


def erosion_velocity(alpha: ScalarGrid, beta_e: float, v_max: float) -> ScalarGrid:
    """min(v_max, beta_e / alpha); fully transparent vertices erode at v_max."""
    a = alpha.values
    positive = a > 0.0
    with np.errstate(divide="ignore", over="ignore"):
        q = beta_e / np.where(positive, a, 1.0)
    out = np.where(positive, np.minimum(v_max, q), v_max)
    return ScalarGrid(alpha.layout, out)


def marching_cubes(grid: ScalarGrid, iso: float = 0.0) -> TriMesh:
    """Triangulate the iso level set of a vertex-sampled scalar grid.

    Vertices sit at the linear zero crossing of each cut cell edge and are
    welded by exact grid-edge identity; triangle winding puts geometric
    normals toward increasing field values.  Degenerate (exactly zero area)
    triangles from iso crossings at grid vertices are dropped.
    """
    v = grid.values
    nx, ny, nz = v.shape
    if min(nx, ny, nz) < 2:
        return TriMesh.empty()
    inside = v < iso
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for corner, (ox, oy, oz) in enumerate(mc.CORNER_OFFSETS):
        case |= inside[ox:nx - 1 + ox, oy:ny - 1 + oy, oz:nz - 1 + oz].astype(np.int64) << corner

    ci, cj, ck = np.nonzero((case != 0) & (case != 255))
    if len(ci) == 0:
        return TriMesh.empty()
    cvals = case[ci, cj, ck]

    cell_blocks = []
    edge_blocks = []
    for c in range(1, 255):
        sel = np.nonzero(cvals == c)[0]
        if len(sel) == 0:
            continue
        triples = _TRI_ARRAYS[c]
        if len(triples) == 0:
            continue
        cells = np.stack([ci[sel], cj[sel], ck[sel]], axis=1)       # (n, 3)
        cell_blocks.append(np.repeat(cells, len(triples), axis=0))  # (n*m, 3)
        edge_blocks.append(np.tile(triples, (len(sel), 1)))         # (n*m, 3)
    cells = np.concatenate(cell_blocks, axis=0)
    edges = np.concatenate(edge_blocks, axis=0)

    # canonical grid-edge key for each triangle corner: lower vertex + axis
    base = cells[:, None, :] + _EDGE_BASE[edges]                    # (T, 3, 3)
    axis = _EDGE_AXIS[edges]                                        # (T, 3)
    keys = ((base[..., 0] * ny + base[..., 1]) * nz + base[..., 2]) * 3 + axis
    uniq, inverse = np.unique(keys.ravel(), return_index=False,
                              return_inverse=True)
    tri_idx = inverse.reshape(-1, 3)

    # interpolate one position per unique grid edge
    u_axis = uniq % 3
    rest = uniq // 3
    bz = rest % nz
    rest //= nz
    by = rest % ny
    bx = rest // ny
    step = np.zeros((len(uniq), 3), dtype=np.int64)
    step[np.arange(len(uniq)), u_axis] = 1
    va = v[bx, by, bz]
    vb = v[bx + step[:, 0], by + step[:, 1], bz + step[:, 2]]
    t = (iso - va) / (vb - va)
    coords = np.stack([bx, by, bz], axis=1).astype(np.float64)
    coords[np.arange(len(uniq)), u_axis] += t
    positions = grid.layout.origin[None, :] + grid.layout.spacing[None, :] * coords

    # drop exactly degenerate triangles
    p = positions[tri_idx]
    area2 = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    keep = np.einsum("ij,ij->i", area2, area2) > 0.0
    tri_idx = tri_idx[keep]

    # compact away vertices only referenced by dropped triangles
    used, tri_compact = np.unique(tri_idx.ravel(), return_inverse=True)
    return TriMesh(positions[used], tri_compact.reshape(-1, 3))


def extract_shell(f0: ScalarGrid, s: ScalarGrid, p: ShellParams | None = None) -> Shell:
    """Dilate and erode the zero level set into the two boundary meshes.

    The evolution engine moves surfaces outward for positive velocity, so
    the erosion rates enter with their sign flipped.  Both results are
    clamped against f0, making the dilation and erosion strict.
    """
    if p is None:
        p = ShellParams()
    if not f0.layout.congruent(s.layout):
        raise DomainError("extract_shell needs congruent f and s grids")
    tau_d = p.tau_d if p.tau_d is not None else float(np.min(f0.layout.spacing))
    alpha = opacity_grid(f0, s, tau_d)
    v_dil = dilation_velocity(alpha, p.beta_d, p.sigma_min)
    v_ero = erosion_velocity(alpha, p.beta_e, p.v_max)
    dilated = evolve(f0, v_dil, p.dilation)
    eroded = evolve(f0, ScalarGrid(f0.layout, -v_ero.values), p.erosion)
    sdf_plus = ScalarGrid(f0.layout, np.minimum(f0.values, dilated.values))
    sdf_minus = ScalarGrid(f0.layout, np.maximum(f0.values, eroded.values))
    return Shell(
        outer=marching_cubes(sdf_plus, 0.0),
        inner=marching_cubes(sdf_minus, 0.0),
        sdf_plus=sdf_plus,
        sdf_minus=sdf_minus,
    )


# ---------------------------------------------------------------------------
# mesh and bundle I/O
# ---------------------------------------------------------------------------

def save_obj(path, mesh: TriMesh) -> None:
    """ASCII OBJ with v/f records, 1-based indices, lossless float text."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.triangles.tolist():
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def load_obj(path) -> TriMesh:
    verts = []
    tris = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: malformed vertex record")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshError(
                        f"{path}:{lineno}: only triangle faces are supported")
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if any(i <= 0 for i in idx):
                    raise MeshError(
                        f"{path}:{lineno}: indices must be positive (1-based)")
                tris.append([i - 1 for i in idx])
    if not verts:
        return TriMesh.empty()
    return TriMesh(np.asarray(verts, dtype=np.float64),
                   np.asarray(tris, dtype=np.int64).reshape(-1, 3))


def save_shell(dirpath, shell: Shell) -> None:
    """Bundle directory: two OBJ meshes plus the two clamped SDF grids."""
    os.makedirs(dirpath, exist_ok=True)
    save_obj(os.path.join(dirpath, "outer.obj"), shell.outer)
    save_obj(os.path.join(dirpath, "inner.obj"), shell.inner)
    shell.sdf_plus.save(os.path.join(dirpath, "sdf_plus.sgrd"))
    shell.sdf_minus.save(os.path.join(dirpath, "sdf_minus.sgrd"))


def load_shell(dirpath) -> Shell:
    return Shell(
        outer=load_obj(os.path.join(dirpath, "outer.obj")),
        inner=load_obj(os.path.join(dirpath, "inner.obj")),
        sdf_plus=ScalarGrid.load(os.path.join(dirpath, "sdf_plus.sgrd")),
        sdf_minus=ScalarGrid.load(os.path.join(dirpath, "sdf_minus.sgrd")),
    )
