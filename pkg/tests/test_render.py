"""Camera, compositing, dense renderer, PSNR, and PPM tests."""

import math

import numpy as np
import pytest

from shellray.errors import ConfigError, DomainError
from shellray.field import AnalyticScene, Sphere
from shellray.ppm import read_ppm, write_ppm
from shellray.render import (
    Camera,
    RenderOutput,
    composite,
    generate_rays,
    psnr,
    render_full,
)


def lookat_camera(width=9, height=9, fov=60.0, dist=3.0):
    return Camera(position=(0.0, 0.0, dist), look_at=(0.0, 0.0, 0.0),
                  up=(0.0, 1.0, 0.0), vertical_fov=fov,
                  width=width, height=height)


class TestCamera:
    def test_validation(self):
        with pytest.raises(ConfigError):
            Camera((0, 0, 0), (0, 0, 0))
        with pytest.raises(ConfigError):
            Camera((0, 0, 3), (0, 0, 0), up=(0, 0, 1))
        with pytest.raises(ConfigError):
            Camera((0, 0, 3), (0, 0, 0), vertical_fov=0.0)
        with pytest.raises(ConfigError):
            Camera((0, 0, 3), (0, 0, 0), vertical_fov=180.0)
        with pytest.raises(ConfigError):
            Camera((0, 0, 3), (0, 0, 0), width=0)

    def test_center_pixel_points_at_target(self):
        cam = lookat_camera(width=9, height=9)
        rays = generate_rays(cam)
        center = rays[9 * 4 + 4]
        np.testing.assert_allclose(center.d, [0, 0, -1], atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(center.d), 1.0, atol=1e-12)

    def test_two_by_two_symmetry(self):
        cam = lookat_camera(width=2, height=2)
        rays = generate_rays(cam)
        assert len(rays) == 4
        forward = np.array([0.0, 0.0, -1.0])
        angles = [np.dot(rays[i].d, forward) for i in range(4)]
        np.testing.assert_allclose(angles, angles[0], atol=1e-14)
        # offsets cancel pairwise around the optical axis
        total = sum(rays[i].d for i in range(4))
        np.testing.assert_allclose(total / np.linalg.norm(total), forward,
                                   atol=1e-14)

    def test_corner_angle_at_fov_90(self):
        n = 4
        cam = lookat_camera(width=n, height=n, fov=90.0)
        rays = generate_rays(cam)
        # corner pixel center sits at (1 - 1/n) of the half-extent on both
        # axes; with tan(45°) = 1 the offset vector is (k, k) for k = 0.75
        k = 1.0 - 1.0 / n
        expected_cos = 1.0 / math.sqrt(1.0 + 2.0 * k * k)
        got = np.dot(rays[0].d, [0, 0, -1])
        assert got == pytest.approx(expected_cos, abs=1e-12)

    def test_row_major_top_first(self):
        cam = lookat_camera(width=3, height=3)
        rays = generate_rays(cam)
        # first ray is the top-left pixel: +y in camera frame means up
        assert rays[0].d[1] > 0
        assert rays[0].d[0] < 0
        assert rays[8].d[1] < 0

    def test_all_unit_length(self):
        rays = generate_rays(lookat_camera(width=7, height=5, fov=100))
        norms = np.linalg.norm(rays.dirs, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)


class TestComposite:
    def test_empty(self):
        color, t = composite([], [])
        np.testing.assert_array_equal(color, np.zeros(3))
        assert t == 1.0

    def test_opaque_first_sample(self):
        c = np.array([0.2, 0.5, 0.9])
        color, t = composite([1.0], [c])
        np.testing.assert_allclose(color, c)
        assert t == 0.0

    def test_two_half_alphas(self):
        red = np.array([1.0, 0.0, 0.0])
        blue = np.array([0.0, 0.0, 1.0])
        color, t = composite([0.5, 0.5], [red, blue])
        np.testing.assert_allclose(color, 0.5 * red + 0.25 * blue)
        assert t == pytest.approx(0.25)

    def test_zero_alpha_is_noop(self):
        alphas = [0.3, 0.6]
        colors = [[0.9, 0.1, 0.0], [0.2, 0.2, 0.7]]
        base = composite(alphas, colors)
        padded = composite(alphas + [0.0], colors + [[1.0, 1.0, 1.0]])
        np.testing.assert_array_equal(base[0], padded[0])
        assert base[1] == padded[1]

    def test_order_matters_for_color_not_t(self):
        a = [0.9, 0.2]
        cs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        c1, t1 = composite(a, cs)
        c2, t2 = composite(a[::-1], cs[::-1])
        assert not np.allclose(c1, c2)
        assert t1 == pytest.approx(t2, rel=1e-15)

    def test_rejects_out_of_range_alpha(self):
        with pytest.raises(DomainError):
            composite([1.5], [[1, 1, 1]])
        with pytest.raises(DomainError):
            composite([-0.1], [[1, 1, 1]])

    @pytest.mark.parametrize("sigma_l", [0.5, 1.0, 5.0])
    def test_homogeneous_medium_transmittance(self, sigma_l):
        # constant density sigma over length L, 1024 segments: the composited
        # transmittance telescopes to exp(-sigma * L)
        n = 1024
        delta = 1.0 / n
        alpha = 1.0 - math.exp(-sigma_l * delta)
        _, t = composite(np.full(n, alpha), np.zeros((n, 3)))
        assert t == pytest.approx(math.exp(-sigma_l), rel=1e-3)
        # and in fact far tighter, since the product telescopes exactly
        assert t == pytest.approx(math.exp(-sigma_l), rel=1e-10)


def sphere_scene(s=0.01, radius=0.5, color=(0.8, 0.3, 0.1)):
    return AnalyticScene([Sphere((0, 0, 0), radius, s, color)])


class TestRenderFull:
    def test_empty_scene_is_background(self):
        # a tiny sphere far outside the domain: f > 0.9 everywhere inside,
        # so with sharp s every segment opacity underflows to exactly zero
        scene = AnalyticScene([Sphere((50, 0, 0), 0.01, 1e-3, (1, 0, 0))])
        cam = lookat_camera(width=8, height=8)
        out = render_full(scene, cam, 32, background=(0.1, 0.2, 0.3))
        assert np.all(out.image == np.array([0.1, 0.2, 0.3]))
        assert np.all(out.transmittance == 1.0)

    def test_solid_wall_pixel(self):
        scene = sphere_scene(s=1e-4)
        cam = lookat_camera(width=9, height=9, fov=30)
        out = render_full(scene, cam, 256, background=(1.0, 1.0, 1.0))
        center = out.image[4, 4]
        np.testing.assert_allclose(center, [0.8, 0.3, 0.1], atol=1e-3)
        assert out.transmittance[4, 4] < 1e-3

    def test_sample_count_bookkeeping(self):
        scene = sphere_scene()
        cam = lookat_camera(width=6, height=4, fov=20)
        out = render_full(scene, cam, 64, background=(0, 0, 0))
        assert out.samples_per_ray.shape == (4, 6)
        assert np.all(out.samples_per_ray == 64)
        assert out.mean_samples == 64.0

    def test_riemann_convergence(self):
        scene = sphere_scene(s=0.05)
        cam = lookat_camera(width=16, height=16, fov=40)
        img_a = render_full(scene, cam, 256, background=(0, 0, 0)).image
        img_b = render_full(scene, cam, 512, background=(0, 0, 0)).image
        assert np.max(np.abs(img_a - img_b)) < 1e-3

    def test_workers_bit_identical(self):
        scene = sphere_scene(s=0.02)
        cam = lookat_camera(width=96, height=64, fov=50)
        out1 = render_full(scene, cam, 48, background=(0.2, 0.2, 0.2), workers=1)
        out4 = render_full(scene, cam, 48, background=(0.2, 0.2, 0.2), workers=4)
        assert np.array_equal(out1.image, out4.image)
        assert np.array_equal(out1.transmittance, out4.transmittance)

    def test_early_termination_opt_in(self):
        scene = sphere_scene(s=1e-4)
        cam = lookat_camera(width=9, height=9, fov=30)
        base = render_full(scene, cam, 256, background=(1, 1, 1))
        cut = render_full(scene, cam, 256, background=(1, 1, 1), t_min=1e-4)
        # wall pixels stop early, and the dropped tail is below the threshold
        assert cut.samples_per_ray[4, 4] < 256
        np.testing.assert_allclose(cut.image, base.image, atol=2e-4)

    def test_rejects_too_few_samples(self):
        with pytest.raises(DomainError):
            render_full(sphere_scene(), lookat_camera(), 1, background=(0, 0, 0))

    def test_deterministic_across_runs(self):
        scene = sphere_scene(s=0.03)
        cam = lookat_camera(width=12, height=12)
        a = render_full(scene, cam, 32, background=(0.5, 0.5, 0.5))
        b = render_full(scene, cam, 32, background=(0.5, 0.5, 0.5))
        assert np.array_equal(a.image, b.image)


class TestPsnr:
    def test_identical_images_infinite(self):
        img = np.random.default_rng(0).uniform(size=(4, 4, 3))
        assert psnr(img, img) == math.inf

    def test_uniform_difference(self):
        a = np.zeros((8, 8, 3))
        b = np.full((8, 8, 3), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, rel=1e-12)

    def test_black_vs_white(self):
        assert psnr(np.zeros((2, 2, 3)), np.ones((2, 2, 3))) == pytest.approx(0.0, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            psnr(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


class TestPpm:
    def test_roundtrip_8bit(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.uniform(size=(5, 7, 3))
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_roundtrip_16bit(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.uniform(size=(3, 4, 3))
        path = tmp_path / "img16.ppm"
        write_ppm(path, img, depth=16)
        back = read_ppm(path)
        assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-15

    def test_write_is_deterministic(self, tmp_path):
        img = np.random.default_rng(3).uniform(size=(4, 4, 3))
        p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
        write_ppm(p1, img)
        write_ppm(p2, img)
        assert p1.read_bytes() == p2.read_bytes()

    def test_out_of_range_clips(self, tmp_path):
        img = np.array([[[-0.5, 0.5, 1.5]]])
        path = tmp_path / "clip.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        np.testing.assert_allclose(back[0, 0], [0.0, 0.5, 1.0], atol=0.5 / 255)

    def test_header_with_comment(self, tmp_path):
        path = tmp_path / "c.ppm"
        payload = bytes([10, 20, 30])
        path.write_bytes(b"P6\n# a comment\n1 1\n255\n" + payload)
        img = read_ppm(path)
        np.testing.assert_allclose(img[0, 0] * 255, [10, 20, 30], atol=1e-12)

    def test_rejects_bad_inputs(self, tmp_path):
        with pytest.raises(DomainError):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4)))
        with pytest.raises(DomainError):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4, 3)), depth=12)
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(DomainError):
            read_ppm(bad)
