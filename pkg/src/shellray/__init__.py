"""shellray: narrow-band volumetric rendering on signed-distance fields.

A small, deterministic pipeline: sigmoid-kernel SDF fields on trilinear
grids, windowed level-set dilation/erosion that brackets the fuzzy region
between two meshes, BVH-driven narrow-band ray sampling, and a two-stage
gradient-descent trainer that fits a grid field to posed images.
"""

from .backend import BACKEND
from .band import SamplingParams, build_shell_bvhs, render_band
from .errors import (
    ConfigError,
    DomainError,
    MeshError,
    NumericalError,
    ShellrayError,
)
from .field import (
    AnalyticScene,
    Box,
    BoxPrim,
    GridLayout,
    GridScene,
    Sphere,
    Torus,
    bake_grid,
    bake_scalar_grids,
)
from .render import Camera, psnr, render_full
from .scenefile import SceneSpec, load_scene, parse_scene
from .shell import Shell, ShellParams, extract_shell, load_shell, save_shell
from .train import TrainConfig, init_field, train_two_stage

__version__ = "0.1.0"

__all__ = [
    "AnalyticScene",
    "BACKEND",
    "Box",
    "BoxPrim",
    "Camera",
    "ConfigError",
    "DomainError",
    "GridLayout",
    "GridScene",
    "MeshError",
    "NumericalError",
    "SamplingParams",
    "SceneSpec",
    "Shell",
    "ShellParams",
    "ShellrayError",
    "Sphere",
    "Torus",
    "TrainConfig",
    "bake_grid",
    "bake_scalar_grids",
    "build_shell_bvhs",
    "extract_shell",
    "init_field",
    "load_scene",
    "load_shell",
    "parse_scene",
    "psnr",
    "render_band",
    "render_full",
    "save_shell",
    "train_two_stage",
    "__version__",
]
