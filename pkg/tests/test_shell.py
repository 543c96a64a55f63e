"""Tests for opacity probes, front velocities, marching cubes, and shells."""

import warnings

import numpy as np
import pytest

from shellray.errors import DomainError, MeshError
from shellray.field import AnalyticScene, Sphere, bake_scalar_grids
from shellray.grids import GridLayout, ScalarGrid
from shellray.levelset import EvolutionParams
from shellray.shell import (
    Shell,
    ShellParams,
    dilation_velocity,
    erosion_velocity,
    extract_shell,
    load_obj,
    load_shell,
    marching_cubes,
    opacity_grid,
    save_obj,
    save_shell,
)
from shellray.trace import TriMesh

from util import octasphere, probe_directions, radial_zero_crossings

# Opacity of a probe of length tau_d = s centred on the zero level:
# the transmittance ratio collapses to exp(-1/2).  [DERIVED]
ALPHA_CENTERED_UNIT_PROBE = 0.3934693402873666


def cube_layout(res, half=1.0):
    return GridLayout(np.full(3, -half), np.full(3, 2 * half),
                      np.full(3, res, dtype=np.int64))


def sphere_grid(res, radius=0.5, center=(0.0, 0.0, 0.0)):
    layout = cube_layout(res)
    p = layout.vertex_positions()
    vals = np.linalg.norm(p - np.asarray(center), axis=-1) - radius
    return ScalarGrid(layout, vals)


def edge_multiplicity(triangles):
    e = np.sort(triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    return np.unique(e, axis=0, return_counts=True)


# ---------------------------------------------------------------------------
# opacity probe


def test_opacity_centered_probe_value():
    layout = cube_layout(2)
    for s in (1.0, 0.25, 1e-3):
        f = ScalarGrid(layout, np.zeros((2, 2, 2)))
        sg = ScalarGrid(layout, np.full((2, 2, 2), s))
        alpha = opacity_grid(f, sg, tau_d=s)
        assert alpha.values == pytest.approx(ALPHA_CENTERED_UNIT_PROBE,
                                             rel=1e-12)


def test_opacity_limits_and_monotonicity():
    layout = cube_layout(2)
    sg = ScalarGrid(layout, np.full((2, 2, 2), 0.01))
    deep = opacity_grid(ScalarGrid(layout, np.full((2, 2, 2), 1.0)), sg, 0.02)
    assert np.all(deep.values < 1e-12)  # far outside: transparent
    near_sharp = opacity_grid(ScalarGrid(layout, np.zeros((2, 2, 2))),
                              ScalarGrid(layout, np.full((2, 2, 2), 1e-9)),
                              0.02)
    assert np.all(near_sharp.values > 1.0 - 1e-12)  # hard surface: opaque
    f = ScalarGrid(layout, np.zeros((2, 2, 2)))
    short = opacity_grid(f, sg, 0.01)
    longer = opacity_grid(f, sg, 0.03)
    assert np.all(longer.values > short.values)


def test_opacity_validation():
    layout = cube_layout(2)
    f = ScalarGrid(layout, np.zeros((2, 2, 2)))
    with pytest.raises(DomainError):
        opacity_grid(f, ScalarGrid(cube_layout(3), np.ones((3, 3, 3))), 0.01)
    with pytest.raises(DomainError):
        opacity_grid(f, ScalarGrid(layout, np.ones((2, 2, 2))), 0.0)


# ---------------------------------------------------------------------------
# front velocities


def test_dilation_velocity_strict_threshold():
    layout = cube_layout(2)
    alpha = ScalarGrid(layout, np.full((2, 2, 2), 0.5))
    assert np.all(dilation_velocity(alpha, 2.0, 0.01).values == 1.0)
    at_threshold = ScalarGrid(layout, np.full((2, 2, 2), 0.01))
    assert np.all(dilation_velocity(at_threshold, 1.0, 0.01).values == 0.0)
    just_above = ScalarGrid(layout, np.full((2, 2, 2), np.nextafter(0.01, 1)))
    out = dilation_velocity(just_above, 1.0, 0.01)
    assert np.all(out.values > 0.0)
    zero = ScalarGrid(layout, np.zeros((2, 2, 2)))
    assert np.all(dilation_velocity(zero, 1.0, 0.01).values == 0.0)


def test_erosion_velocity_cap_and_transparent_limit():
    layout = cube_layout(2)

    def ero(a):
        g = ScalarGrid(layout, np.full((2, 2, 2), a))
        return erosion_velocity(g, beta_e=0.001, v_max=100.0).values

    assert np.all(ero(1.0) == 0.001)
    assert np.all(ero(0.5) == 0.002)
    assert np.all(ero(1e-6) == 100.0)   # 1000 uncapped
    assert np.all(ero(0.0) == 100.0)    # fully transparent erodes at the cap
    assert np.all(ero(0.001 / 100.0) == 100.0)  # exactly at the knee


def test_shell_params_validation():
    with pytest.raises(DomainError):
        ShellParams(beta_d=0.0)
    with pytest.raises(DomainError):
        ShellParams(sigma_min=-1.0)
    with pytest.raises(DomainError):
        ShellParams(tau_d=0.0)
    assert ShellParams().tau_d is None


# ---------------------------------------------------------------------------
# marching cubes


def test_mc_uniform_sign_gives_empty_mesh():
    layout = cube_layout(8)
    for fill in (1.0, -1.0):
        mesh = marching_cubes(ScalarGrid(layout, np.full((8, 8, 8), fill)))
        assert mesh.n_triangles == 0 and mesh.n_vertices == 0


def test_mc_single_interior_vertex_makes_octahedron():
    layout = cube_layout(5)
    vals = np.ones((5, 5, 5))
    vals[2, 2, 2] = -1.0
    mesh = marching_cubes(ScalarGrid(layout, vals))
    assert mesh.n_vertices == 6 and mesh.n_triangles == 8
    edges, mult = edge_multiplicity(mesh.triangles)
    assert len(edges) == 12 and np.all(mult == 2)
    # crossings at edge midpoints, half a spacing from the centre vertex
    h = layout.spacing[0]
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert r == pytest.approx(h / 2, rel=1e-12)
    # normals face increasing values: away from the negative centre
    tri = mesh.vertices[mesh.triangles]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    assert np.all(np.einsum("ij,ij->i", n, tri.mean(axis=1)) > 0)


def test_mc_sphere_topology_accuracy_orientation():
    center = (0.013, -0.0071, 0.0042)  # keep grid vertices off the level set
    grid = sphere_grid(64, radius=0.5, center=center)
    mesh = marching_cubes(grid)
    edges, mult = edge_multiplicity(mesh.triangles)
    assert np.all(mult == 2)  # closed surface
    chi = mesh.n_vertices - len(edges) + mesh.n_triangles
    assert chi == 2
    # vertices welded: positions are unique
    assert len(np.unique(mesh.vertices, axis=0)) == mesh.n_vertices
    h = grid.layout.spacing[0]
    r = np.linalg.norm(mesh.vertices - np.asarray(center), axis=1)
    assert np.max(np.abs(r - 0.5)) < h
    tri = mesh.vertices[mesh.triangles]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    out = np.einsum("ij,ij->i", n, tri.mean(axis=1) - np.asarray(center))
    assert (out > 0).mean() >= 0.99


def test_mc_linear_field_is_exact():
    layout = cube_layout(9)
    x = layout.vertex_positions()[..., 0]
    mesh = marching_cubes(ScalarGrid(layout, x - 0.3))
    assert mesh.n_triangles > 0
    assert np.max(np.abs(mesh.vertices[:, 0] - 0.3)) < 1e-12
    tri = mesh.vertices[mesh.triangles]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    assert np.all(n[:, 0] > 0)  # toward increasing field


def test_mc_nonzero_iso():
    layout = cube_layout(9)
    x = layout.vertex_positions()[..., 0]
    mesh = marching_cubes(ScalarGrid(layout, x), iso=0.1)
    assert mesh.n_triangles > 0
    assert np.max(np.abs(mesh.vertices[:, 0] - 0.1)) < 1e-12


def test_mc_drops_point_degeneracies():
    # A zero vertex inside a negative sea cuts its six edges at t == 1,
    # collapsing every triangle of that cell complex to a point.
    layout = cube_layout(5)
    vals = np.full((5, 5, 5), -1.0)
    vals[2, 2, 2] = 0.0
    mesh = marching_cubes(ScalarGrid(layout, vals))
    assert mesh.n_triangles == 0 and mesh.n_vertices == 0


def test_mc_refines_toward_true_radius():
    errs = []
    for res in (16, 32, 64):
        mesh = marching_cubes(sphere_grid(res, center=(0.003, 0.001, -0.002)))
        r = np.linalg.norm(mesh.vertices - [0.003, 0.001, -0.002], axis=1)
        errs.append(np.max(np.abs(r - 0.5)))
    assert errs[0] > errs[1] > errs[2]


# ---------------------------------------------------------------------------
# shell extraction


def no_curvature_params():
    """Purely opacity-driven fronts; isolates the adaptive-width mechanism."""
    return ShellParams(dilation=EvolutionParams(50, 0.1, 0.1, 0.0))


@pytest.fixture(scope="module")
def sharp_shell():
    scene = AnalyticScene([Sphere((0, 0, 0), 0.5, 1e-3, (1, 1, 1))])
    f, s = bake_scalar_grids(scene, (-1, -1, -1), (2, 2, 2), 96)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # erosion cap trips the CFL advisory
        return f, extract_shell(f, s, no_curvature_params())


def test_extract_clamps_and_nesting(sharp_shell):
    f0, shell = sharp_shell
    assert np.all(shell.sdf_plus.values <= f0.values)
    assert np.all(shell.sdf_minus.values >= f0.values)
    inside_minus = shell.sdf_minus.values < 0
    inside_f0 = f0.values < 0
    inside_plus = shell.sdf_plus.values < 0
    assert np.all(~inside_minus | inside_f0)   # minus region within original
    assert np.all(~inside_f0 | inside_plus)    # original within plus region
    assert shell.outer.n_triangles > 0 and shell.inner.n_triangles > 0


def test_sharp_scene_shell_is_thin(sharp_shell):
    f0, shell = sharp_shell
    h = float(f0.layout.spacing[0])
    dirs = probe_directions(200)
    outer_r = radial_zero_crossings(shell.sdf_plus.sample, dirs, 0.3, 0.9)
    inner_r = radial_zero_crossings(shell.sdf_minus.sample, dirs, 0.1, 0.9)
    assert np.all(np.isfinite(outer_r)) and np.all(np.isfinite(inner_r))
    thickness = outer_r - inner_r
    assert np.all(thickness > 0)
    assert np.max(thickness) < 5 * h
    assert np.all(outer_r >= 0.5 - h)  # surface sits inside the outer mesh
    assert np.all(inner_r <= 0.5 + 1e-9)


def test_default_params_respect_evolution_windows():
    scene = AnalyticScene([Sphere((0, 0, 0), 0.5, 1e-3, (1, 1, 1))])
    f, s = bake_scalar_grids(scene, (-1, -1, -1), (2, 2, 2), 64)
    p = ShellParams()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        shell = extract_shell(f, s, p)
    dirs = probe_directions(200)
    outer_r = radial_zero_crossings(shell.sdf_plus.sample, dirs, 0.3, 0.9)
    inner_r = radial_zero_crossings(shell.sdf_minus.sample, dirs, 0.1, 0.9)
    h = float(f.layout.spacing[0])
    # vertices with |f0| >= zeta never move, so the fronts stay inside the
    # respective windows no matter how long the evolutions run
    assert np.all(outer_r < 0.5 + p.dilation.zeta + h)
    assert np.all(inner_r > 0.5 - p.erosion.zeta - h)
    assert np.all(outer_r - inner_r > 0)


def test_fuzzy_scene_shell_is_strictly_thicker(sharp_shell):
    f0, shell = sharp_shell
    scene = AnalyticScene([Sphere((0, 0, 0), 0.5, 0.1, (1, 1, 1))])
    f, s = bake_scalar_grids(scene, (-1, -1, -1), (2, 2, 2), 96)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fuzzy = extract_shell(f, s, no_curvature_params())
    dirs = probe_directions(200)
    sharp_t = (radial_zero_crossings(shell.sdf_plus.sample, dirs, 0.3, 0.9)
               - radial_zero_crossings(shell.sdf_minus.sample, dirs, 0.1, 0.9))
    fuzzy_t = (radial_zero_crossings(fuzzy.sdf_plus.sample, dirs, 0.3, 0.9)
               - radial_zero_crossings(fuzzy.sdf_minus.sample, dirs, 0.1, 0.9))
    assert np.all(np.isfinite(fuzzy_t))
    assert np.all(fuzzy_t > sharp_t)


def test_no_opacity_in_window_leaves_field_untouched():
    # Zero level far outside the domain: every vertex is frozen by the
    # window, so both clamped fields equal the input bitwise.
    scene = AnalyticScene([Sphere((5, 0, 0), 0.5, 1e-3, (1, 1, 1))])
    f, s = bake_scalar_grids(scene, (-1, -1, -1), (2, 2, 2), 16)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        shell = extract_shell(f, s)
    assert np.array_equal(shell.sdf_plus.values, f.values)
    assert np.array_equal(shell.sdf_minus.values, f.values)
    assert shell.outer.n_triangles == 0 and shell.inner.n_triangles == 0


def test_extract_validation():
    scene = AnalyticScene([Sphere((0, 0, 0), 0.5, 1e-3, (1, 1, 1))])
    f, _ = bake_scalar_grids(scene, (-1, -1, -1), (2, 2, 2), 8)
    _, s = bake_scalar_grids(scene, (-1, -1, -1), (2, 2, 2), 9)
    with pytest.raises(DomainError):
        extract_shell(f, s)


# ---------------------------------------------------------------------------
# mesh and bundle I/O


def test_obj_round_trip_is_lossless(tmp_path):
    v, f = octasphere(2, radius=0.4837, center=(0.1, -0.2, 1e-7))
    mesh = TriMesh(v, f)
    path = tmp_path / "m.obj"
    save_obj(path, mesh)
    back = load_obj(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)


def test_obj_empty_round_trip(tmp_path):
    path = tmp_path / "empty.obj"
    save_obj(path, TriMesh.empty())
    back = load_obj(path)
    assert back.n_vertices == 0 and back.n_triangles == 0


def test_obj_accepts_comments_and_slash_indices(tmp_path):
    path = tmp_path / "m.obj"
    path.write_text(
        "# comment\n\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2//2 3/3/3\n")
    mesh = load_obj(path)
    assert mesh.n_vertices == 3
    assert np.array_equal(mesh.triangles, [[0, 1, 2]])


@pytest.mark.parametrize("body, hint", [
    ("v 1 2\n", "vertex"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n", "triangle"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", "positive"),
])
def test_obj_rejects_malformed_records(tmp_path, body, hint):
    path = tmp_path / "bad.obj"
    path.write_text(body)
    with pytest.raises(MeshError, match=hint):
        load_obj(path)


def test_shell_bundle_round_trip(tmp_path):
    grid = sphere_grid(12, center=(0.01, 0.02, 0.03))
    mesh = marching_cubes(grid)
    shell = Shell(outer=mesh, inner=TriMesh.empty(),
                  sdf_plus=grid, sdf_minus=grid)
    save_shell(tmp_path / "bundle", shell)
    back = load_shell(tmp_path / "bundle")
    assert np.array_equal(back.outer.vertices, mesh.vertices)
    assert np.array_equal(back.outer.triangles, mesh.triangles)
    assert back.inner.n_triangles == 0
    # grid payloads are 32-bit on disk
    want = grid.values.astype(np.float32).astype(np.float64)
    assert np.array_equal(back.sdf_plus.values, want)
    assert np.array_equal(back.sdf_minus.values, want)
    assert back.sdf_plus.layout.congruent(grid.layout)
