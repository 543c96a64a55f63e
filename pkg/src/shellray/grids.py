"""Regular-grid containers and their binary serialization.

Axis-aligned vertex grids over a box [origin, origin + extent], with
`resolution` vertices per axis (so spacing = extent / (resolution - 1)).
Out-of-domain samples clamp to the boundary value.

Binary formats (all little-endian, C payload order with z fastest):

* ScalarGrid ``.sgrd``: magic ``SGRD``, uint32 version=1, 3x uint32
  resolution, 3x float64 origin, 3x float64 extent, then nx*ny*nz float32.
* GridField ``.gfld``: magic ``GFLD``, uint32 version=1, 3x uint32
  resolution, 3x float64 origin, 3x float64 extent, then nx*ny*nz*8 float64
  (channel-interleaved: f, log_s, c0, c1, c2, n0, n1, n2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .errors import ConfigError, DomainError

_SGRD_MAGIC = b"SGRD"
_GFLD_MAGIC = b"GFLD"

# GridField channel layout
CH_F = 0
CH_LOG_S = 1
CH_C = slice(2, 5)
CH_N = slice(5, 8)
N_CHANNELS = 8


def _check_layout(origin, extent, resolution):
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    extent = np.asarray(extent, dtype=np.float64).reshape(3)
    resolution = np.asarray(resolution, dtype=np.int64).reshape(3)
    if not np.all(np.isfinite(origin)) or not np.all(np.isfinite(extent)):
        raise DomainError("grid origin/extent must be finite")
    if np.any(extent <= 0):
        raise DomainError(f"grid extent must be positive, got {extent}")
    if np.any(resolution < 2):
        raise DomainError(f"grid resolution must be >= 2 per axis, got {resolution}")
    return origin, extent, resolution


@dataclass
class GridLayout:
    """Geometry of a vertex grid: box placement and vertex counts."""

    origin: np.ndarray
    extent: np.ndarray
    resolution: np.ndarray

    def __post_init__(self):
        self.origin, self.extent, self.resolution = _check_layout(
            self.origin, self.extent, self.resolution
        )

    @property
    def spacing(self) -> np.ndarray:
        return self.extent / (self.resolution - 1)

    def axis_coords(self, axis: int) -> np.ndarray:
        n = int(self.resolution[axis])
        return self.origin[axis] + np.arange(n) * self.spacing[axis]

    def vertex_positions(self) -> np.ndarray:
        """All vertex positions, shape (nx, ny, nz, 3)."""
        xs, ys, zs = (self.axis_coords(a) for a in range(3))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def congruent(self, other: "GridLayout") -> bool:
        return (
            np.array_equal(self.resolution, other.resolution)
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.extent, other.extent)
        )


@dataclass
class ScalarGrid:
    """A single float64 channel on a GridLayout."""

    layout: GridLayout
    values: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.layout.resolution)
        if self.values is None:
            self.values = np.zeros(shape, dtype=np.float64)
        else:
            self.values = np.ascontiguousarray(self.values, dtype=np.float64)
            if self.values.shape != shape:
                raise DomainError(
                    f"values shape {self.values.shape} != resolution {shape}"
                )

    def copy(self) -> "ScalarGrid":
        return ScalarGrid(self.layout, self.values.copy())

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear samples at (N, 3) points, clamped to the domain."""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        out = kernels.trilinear_gather(
            self.values[..., None], self.layout.origin, self.layout.spacing, pts
        )
        return out[:, 0]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_SGRD_MAGIC)
            fh.write(struct.pack("<I", 1))
            fh.write(struct.pack("<3I", *(int(n) for n in self.layout.resolution)))
            fh.write(struct.pack("<3d", *self.layout.origin))
            fh.write(struct.pack("<3d", *self.layout.extent))
            fh.write(self.values.astype("<f4").tobytes(order="C"))

    @staticmethod
    def load(path) -> "ScalarGrid":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _SGRD_MAGIC:
                raise ConfigError(f"{path}: not a ScalarGrid file (magic {magic!r})")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != 1:
                raise ConfigError(f"{path}: unsupported ScalarGrid version {version}")
            res = struct.unpack("<3I", fh.read(12))
            origin = struct.unpack("<3d", fh.read(24))
            extent = struct.unpack("<3d", fh.read(24))
            n = res[0] * res[1] * res[2]
            payload = np.frombuffer(fh.read(4 * n), dtype="<f4")
            if payload.size != n:
                raise ConfigError(f"{path}: truncated payload")
        layout = GridLayout(np.array(origin), np.array(extent), np.array(res))
        return ScalarGrid(layout, payload.astype(np.float64).reshape(res))


@dataclass
class GridField:
    """Trainable field: channels f, log_s, color (3), normal (3) on one grid."""

    layout: GridLayout
    channels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.layout.resolution) + (N_CHANNELS,)
        if self.channels is None:
            self.channels = np.zeros(shape, dtype=np.float64)
        else:
            self.channels = np.ascontiguousarray(self.channels, dtype=np.float64)
            if self.channels.shape != shape:
                raise DomainError(
                    f"channels shape {self.channels.shape} != expected {shape}"
                )

    @property
    def f(self) -> np.ndarray:
        return self.channels[..., CH_F]

    @property
    def log_s(self) -> np.ndarray:
        return self.channels[..., CH_LOG_S]

    @property
    def c(self) -> np.ndarray:
        return self.channels[..., CH_C]

    @property
    def n(self) -> np.ndarray:
        return self.channels[..., CH_N]

    def copy(self) -> "GridField":
        return GridField(self.layout, self.channels.copy())

    def sample_channels(self, points: np.ndarray) -> np.ndarray:
        """Raw trilinear channel samples at (N, 3) points -> (N, 8)."""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        return kernels.trilinear_gather(
            self.channels, self.layout.origin, self.layout.spacing, pts
        )

    def scalar_grid(self, channel: int) -> ScalarGrid:
        return ScalarGrid(self.layout, self.channels[..., channel].copy())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_GFLD_MAGIC)
            fh.write(struct.pack("<I", 1))
            fh.write(struct.pack("<3I", *(int(n) for n in self.layout.resolution)))
            fh.write(struct.pack("<3d", *self.layout.origin))
            fh.write(struct.pack("<3d", *self.layout.extent))
            fh.write(self.channels.astype("<f8").tobytes(order="C"))

    @staticmethod
    def load(path) -> "GridField":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _GFLD_MAGIC:
                raise ConfigError(f"{path}: not a GridField file (magic {magic!r})")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != 1:
                raise ConfigError(f"{path}: unsupported GridField version {version}")
            res = struct.unpack("<3I", fh.read(12))
            origin = struct.unpack("<3d", fh.read(24))
            extent = struct.unpack("<3d", fh.read(24))
            n = res[0] * res[1] * res[2] * N_CHANNELS
            payload = np.frombuffer(fh.read(8 * n), dtype="<f8")
            if payload.size != n:
                raise ConfigError(f"{path}: truncated payload")
        layout = GridLayout(np.array(origin), np.array(extent), np.array(res))
        shape = res + (N_CHANNELS,)
        return GridField(layout, payload.astype(np.float64).reshape(shape))
