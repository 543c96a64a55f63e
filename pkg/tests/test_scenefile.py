"""Scene description parsing, validation, and TOML round trips."""

import numpy as np
import pytest

from shellray.errors import ConfigError
from shellray.field import BoxPrim, Sphere, Torus
from shellray.scenefile import (
    SceneSpec,
    dump_toml,
    format_toml_value,
    load_scene,
    parse_scene,
    scene_to_toml,
)

FULL_SCENE = """
name = "demo"
background = [0.5, 0.25, 0.125]

[domain]
lo = [-2.0, -1.0, -1.0]
hi = [2.0, 1.0, 1.0]

[[primitive]]
kind = "sphere"
center = [-0.45, 0.0, 0.0]
radius = 0.35
kernel_size = 0.005
color = [0.85, 0.3, 0.2]

[[primitive]]
kind = "box"
center = [0.5, 0.0, 0.0]
half_extent = [0.2, 0.3, 0.2]
kernel_size = 0.02
color = [0.2, 0.7, 0.3]
op = "intersect"

[[primitive]]
kind = "torus"
center = [0.0, 0.0, 0.0]
major_radius = 0.5
minor_radius = 0.12
kernel_size = 0.05
color = [0.9, 0.8, 0.2]

[[camera]]
position = [0.0, 0.0, -2.5]
look_at = [0.0, 0.0, 0.0]
up = [0.0, 1.0, 0.0]
vertical_fov = 35.0
width = 48
height = 32
"""


class TestParse:
    def test_full_document(self):
        spec = parse_scene(FULL_SCENE)
        assert spec.name == "demo"
        assert spec.background == (0.5, 0.25, 0.125)
        kinds = [type(p) for p in spec.scene.primitives]
        assert kinds == [Sphere, BoxPrim, Torus]
        assert spec.scene.primitives[1].op == "intersect"
        np.testing.assert_array_equal(spec.scene.domain.lo, [-2, -1, -1])
        cam = spec.cameras[0]
        assert (cam.width, cam.height, cam.vertical_fov) == (48, 32, 35.0)

    def test_defaults(self):
        spec = parse_scene("""
            [[primitive]]
            kind = "sphere"
            center = [0.0, 0.0, 0.0]
            radius = 0.5
            kernel_size = 0.01
            color = [1.0, 1.0, 1.0]

            [[camera]]
            position = [0.0, 0.0, -2.0]
            look_at = [0.0, 0.0, 0.0]
        """)
        assert spec.name == "scene"
        assert spec.background == (0.0, 0.0, 0.0)
        np.testing.assert_array_equal(spec.scene.domain.lo, [-1, -1, -1])
        np.testing.assert_array_equal(spec.scene.domain.hi, [1, 1, 1])
        assert spec.scene.primitives[0].op == "union"
        cam = spec.cameras[0]
        assert cam.up == (0.0, 1.0, 0.0)
        assert (cam.vertical_fov, cam.width, cam.height) == (45.0, 128, 128)

    @pytest.mark.parametrize("text, hint", [
        ("junk ][", "invalid TOML"),
        ("[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]", "primitive"),
        ("[[primitive]]\nkind='sphere'\ncenter=[0,0,0]\nradius=0.5\n"
         "kernel_size=0.01\ncolor=[1,1,1]", "camera"),
        ("bogus_top = 1\n[[primitive]]\nkind='sphere'\ncenter=[0,0,0]\n"
         "radius=0.5\nkernel_size=0.01\ncolor=[1,1,1]\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]", "bogus_top"),
        ("[[primitive]]\nkind='cone'\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]", "cone"),
        ("[[primitive]]\nkind='sphere'\ncenter=[0,0,0]\nradius=0.5\n"
         "kernel_size=0.01\ncolor=[1,1,1]\nextra=2\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]", "extra"),
        ("[[primitive]]\nkind='sphere'\ncenter=[0,0,0]\n"
         "kernel_size=0.01\ncolor=[1,1,1]\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]", "radius"),
        ("[[primitive]]\nkind='sphere'\ncenter=[0,0]\nradius=0.5\n"
         "kernel_size=0.01\ncolor=[1,1,1]\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]", "center"),
        ("[[primitive]]\nkind='sphere'\ncenter=[0,0,0]\nradius='big'\n"
         "kernel_size=0.01\ncolor=[1,1,1]\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]", "radius"),
        ("[[primitive]]\nkind='sphere'\ncenter=[0,0,0]\nradius=0.5\n"
         "kernel_size=0.01\ncolor=[1,1,1]\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]\ntilt=3", "tilt"),
        ("[[primitive]]\nkind='sphere'\ncenter=[0,0,0]\nradius=0.5\n"
         "kernel_size=0.01\ncolor=[1,1,1]\n"
         "[[camera]]\nposition=[0,0,-2]\nlook_at=[0,0,0]\nwidth=true", "width"),
    ])
    def test_rejects(self, text, hint):
        with pytest.raises(ConfigError, match=hint):
            parse_scene(text)

    def test_load_missing_file_names_path(self, tmp_path):
        path = tmp_path / "absent.toml"
        with pytest.raises(ConfigError, match="absent.toml"):
            load_scene(path)

    def test_load_reads_file(self, tmp_path):
        path = tmp_path / "scene.toml"
        path.write_text(FULL_SCENE)
        spec = load_scene(path)
        assert len(spec.scene.primitives) == 3


class TestRoundTrip:
    def test_parse_emit_parse_is_stable(self):
        spec = parse_scene(FULL_SCENE)
        text = scene_to_toml(spec)
        again = parse_scene(text)
        assert again.scene.primitives == spec.scene.primitives
        assert again.cameras == spec.cameras
        assert again.background == spec.background
        assert scene_to_toml(again) == text

    def test_repo_scenes_round_trip(self):
        for name in ("sphere", "two_spheres", "mixed"):
            spec = load_scene(f"scenes/{name}.toml")
            again = parse_scene(scene_to_toml(spec))
            assert again.scene.primitives == spec.scene.primitives
            assert again.cameras == spec.cameras


class TestEmitter:
    def test_values(self):
        assert format_toml_value(True) == "true"
        assert format_toml_value(3) == "3"
        assert format_toml_value(0.1) == "0.1"
        assert format_toml_value(np.float64(0.25)) == "0.25"
        assert format_toml_value(np.int64(7)) == "7"
        assert format_toml_value('say "hi"\\n') == '"say \\"hi\\"\\\\n"'
        assert format_toml_value([1, 2.5]) == "[1, 2.5]"
        with pytest.raises(ConfigError):
            format_toml_value(object())

    def test_dump_sections(self):
        import tomli

        doc = {"a": 1, "sub": {"x": [1.0, 2.0]},
               "items": [{"k": "u"}, {"k": "v"}]}
        text = dump_toml(doc)
        assert tomli.loads(text) == {"a": 1, "sub": {"x": [1.0, 2.0]},
                                     "items": [{"k": "u"}, {"k": "v"}]}
