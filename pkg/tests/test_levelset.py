"""Level-set evolution tests.

The transport oracle is analytic: a sphere SDF advected at constant normal
speed v for total time T*dt moves its zero level by v*T*dt, up to the
compression the falloff window introduces; the spec tolerance of one grid
spacing absorbs both that and the first-order discretization error.
"""

import numpy as np
import pytest

from shellray.errors import DomainError, NumericalError
from shellray.field import AnalyticScene, Sphere, bake_scalar_grids
from shellray.grids import GridLayout, ScalarGrid
from shellray.levelset import EvolutionParams, curvature, evolve, falloff, gradient

from util import probe_directions, radial_zero_crossings


def sphere_sdf_grid(res, radius=0.5):
    scene = AnalyticScene([Sphere((0, 0, 0), radius, 0.01, (1, 0, 0))])
    f, _ = bake_scalar_grids(scene, (-1, -1, -1), (2, 2, 2), res)
    return f


def linear_grid(res, coeff=(2.0, 0.0, 0.0), const=0.0):
    layout = GridLayout((-1, -1, -1), (2, 2, 2), (res, res, res))
    pts = layout.vertex_positions()
    vals = const + coeff[0] * pts[..., 0] + coeff[1] * pts[..., 1] \
        + coeff[2] * pts[..., 2]
    return ScalarGrid(layout, vals)


class TestFalloff:
    def test_frozen_values(self):
        assert falloff(0.0, 0.1) == 1.0
        assert falloff(0.1, 0.1) == 0.0
        assert falloff(-0.1, 0.1) == 0.0
        assert falloff(0.05, 0.1) == pytest.approx(0.5, abs=1e-12)

    def test_exactly_zero_outside_window(self):
        # the clamp hits +-1 and cos(pi) is exactly -1 in IEEE double
        assert falloff(0.35, 0.1) == 0.0
        assert falloff(-2.0, 0.1) == 0.0

    def test_array_input_and_range(self):
        f = np.linspace(-0.3, 0.3, 101)
        w = falloff(f, 0.1)
        assert w.shape == f.shape
        assert np.all((w >= 0.0) & (w <= 1.0))
        # even function
        np.testing.assert_allclose(w, w[::-1], atol=1e-15)

    def test_rejects_bad_zeta(self):
        with pytest.raises(DomainError):
            falloff(0.0, 0.0)


class TestGradient:
    def test_linear_field_exact_everywhere(self):
        g = linear_grid(17, coeff=(2.0, -0.5, 0.25))
        grad = gradient(g)
        np.testing.assert_allclose(grad[..., 0], 2.0, atol=1e-12)
        np.testing.assert_allclose(grad[..., 1], -0.5, atol=1e-12)
        np.testing.assert_allclose(grad[..., 2], 0.25, atol=1e-12)

    def test_constant_field(self):
        layout = GridLayout((0, 0, 0), (1, 1, 1), (9, 9, 9))
        g = ScalarGrid(layout, np.full((9, 9, 9), 3.7))
        assert np.all(gradient(g) == 0.0)

    def test_single_vertex_query(self):
        g = linear_grid(9, coeff=(2.0, 0.0, 0.0))
        np.testing.assert_allclose(gradient(g, (4, 4, 4)), [2.0, 0.0, 0.0],
                                   atol=1e-12)

    def test_sphere_sdf_unit_gradient(self):
        g = sphere_sdf_grid(65)
        mag = np.linalg.norm(gradient(g), axis=-1)
        # away from the center singularity and the domain boundary
        interior = mag[8:-8, 8:-8, 8:-8]
        pts = g.layout.vertex_positions()[8:-8, 8:-8, 8:-8]
        r = np.linalg.norm(pts, axis=-1)
        sel = r > 0.3
        np.testing.assert_allclose(interior[sel], 1.0, atol=5e-3)


class TestCurvature:
    def test_planar_field_is_flat(self):
        g = linear_grid(17, coeff=(1.0, 0.0, 0.0))
        np.testing.assert_allclose(curvature(g), 0.0, atol=1e-12)

    def test_constant_field_guarded_to_zero(self):
        layout = GridLayout((0, 0, 0), (1, 1, 1), (9, 9, 9))
        g = ScalarGrid(layout, np.ones((9, 9, 9)))
        assert np.all(curvature(g) == 0.0)

    def test_sphere_curvature_near_surface(self):
        radius = 0.5
        g = sphere_sdf_grid(81, radius=radius)
        kap = curvature(g)
        pts = g.layout.vertex_positions()
        r = np.linalg.norm(pts, axis=-1)
        near = np.abs(r - radius) < 0.5 * g.layout.spacing[0]
        expected = 2.0 / r[near]  # mean curvature of the r-sphere, outward f
        got = kap[near]
        rel = np.abs(got - expected) / expected
        assert np.max(rel) < 0.10

    def test_single_vertex_query(self):
        g = sphere_sdf_grid(33)
        val = curvature(g, (24, 16, 16))  # vertex at (0.5, 0, 0)
        assert val == pytest.approx(2.0 / 0.5, rel=0.1)


class TestEvolutionParams:
    def test_validation(self):
        with pytest.raises(DomainError):
            EvolutionParams(steps=-1, dt=0.1, zeta=0.1)
        with pytest.raises(DomainError):
            EvolutionParams(steps=10, dt=0.0, zeta=0.1)
        with pytest.raises(DomainError):
            EvolutionParams(steps=10, dt=0.1, zeta=-0.5)
        with pytest.raises(DomainError):
            EvolutionParams(steps=10, dt=0.1, zeta=0.1, lambda_curv=-1.0)


class TestEvolve:
    def test_zero_velocity_identity(self):
        f0 = sphere_sdf_grid(33)
        vel = ScalarGrid(f0.layout, np.zeros_like(f0.values))
        out = evolve(f0, vel, EvolutionParams(steps=20, dt=0.1, zeta=0.1))
        assert np.array_equal(out.values, f0.values)

    def test_outward_transport_radius(self):
        res = 64
        f0 = sphere_sdf_grid(res)
        vel = ScalarGrid(f0.layout, np.full(f0.values.shape, 0.02))
        out = evolve(f0, vel,
                     EvolutionParams(steps=50, dt=0.1, zeta=0.1, lambda_curv=0.0))
        radii = radial_zero_crossings(out.sample, probe_directions(200), 0.3, 0.9)
        h = 2.0 / (res - 1)
        assert len(radii) == 200
        assert abs(radii.mean() - 0.6) < h

    def test_inward_transport_radius(self):
        res = 64
        f0 = sphere_sdf_grid(res)
        vel = ScalarGrid(f0.layout, np.full(f0.values.shape, -0.02))
        out = evolve(f0, vel,
                     EvolutionParams(steps=50, dt=0.1, zeta=0.1, lambda_curv=0.0))
        radii = radial_zero_crossings(out.sample, probe_directions(200), 0.2, 0.9)
        h = 2.0 / (res - 1)
        assert abs(radii.mean() - 0.4) < h

    def test_refinement_improves_transport(self):
        errs = []
        for res in (32, 64):
            f0 = sphere_sdf_grid(res)
            vel = ScalarGrid(f0.layout, np.full(f0.values.shape, 0.02))
            out = evolve(f0, vel, EvolutionParams(steps=50, dt=0.1, zeta=0.1))
            radii = radial_zero_crossings(out.sample, probe_directions(200),
                                          0.3, 0.9)
            errs.append(abs(radii.mean() - 0.6))
        assert errs[1] < errs[0]

    def test_dilation_is_pointwise_non_increasing(self):
        f0 = sphere_sdf_grid(33)
        vel = ScalarGrid(f0.layout, np.full(f0.values.shape, 0.05))
        out = evolve(f0, vel, EvolutionParams(steps=30, dt=0.1, zeta=0.1))
        assert np.all(out.values <= f0.values)

    def test_window_locality_bitwise(self):
        f0 = sphere_sdf_grid(33)
        vel = ScalarGrid(f0.layout, np.full(f0.values.shape, 0.02))
        zeta = 0.1
        out = evolve(f0, vel, EvolutionParams(steps=50, dt=0.1, zeta=zeta))
        # dilation only lowers f, so vertices that end at f >= zeta stayed
        # outside the window the whole way; vertices starting at f <= -zeta
        # can only sink further.  Both must be bitwise untouched.
        mask = (out.values >= zeta) | (f0.values <= -zeta)
        assert mask.any()
        assert np.array_equal(out.values[mask], f0.values[mask])

    def test_curvature_term_shrinks_high_curvature_bumps(self):
        # pure curvature flow (v = 0) moves a small sphere inward: kappa > 0
        # on the surface, so f increases and the enclosed region shrinks
        f0 = sphere_sdf_grid(49, radius=0.4)
        vel = ScalarGrid(f0.layout, np.zeros(f0.values.shape))
        out = evolve(f0, vel,
                     EvolutionParams(steps=20, dt=0.05, zeta=0.2, lambda_curv=0.05))
        radii = radial_zero_crossings(out.sample, probe_directions(100), 0.2, 0.7)
        assert radii.mean() < 0.4

    def test_incongruent_velocity_rejected(self):
        f0 = sphere_sdf_grid(17)
        other = GridLayout((-1, -1, -1), (2, 2, 2), (9, 9, 9))
        vel = ScalarGrid(other, np.zeros((9, 9, 9)))
        with pytest.raises(DomainError):
            evolve(f0, vel, EvolutionParams(steps=1, dt=0.1, zeta=0.1))

    def test_nan_blowup_names_the_step(self):
        f0 = sphere_sdf_grid(17)
        vel = ScalarGrid(f0.layout, np.full(f0.values.shape, np.inf))
        with pytest.warns(RuntimeWarning):
            with pytest.raises(NumericalError, match="step 0"):
                evolve(f0, vel, EvolutionParams(steps=5, dt=0.1, zeta=0.1))

    def test_cfl_advisory_warning(self):
        f0 = sphere_sdf_grid(17)
        h = f0.layout.spacing[0]
        hot = ScalarGrid(f0.layout, np.full(f0.values.shape, 2.0 * h / 0.1))
        with pytest.warns(RuntimeWarning, match="unstable"):
            evolve(f0, hot, EvolutionParams(steps=1, dt=0.1, zeta=0.1))

    def test_no_warning_when_stable(self, recwarn):
        f0 = sphere_sdf_grid(17)
        vel = ScalarGrid(f0.layout, np.full(f0.values.shape, 0.01))
        evolve(f0, vel, EvolutionParams(steps=2, dt=0.1, zeta=0.1))
        assert len(recwarn) == 0
