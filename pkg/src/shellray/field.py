"""Sigmoid-kernel signed-distance fields.

The appearance model maps a signed distance f and a spatially-varying kernel
size s to opacity through the logistic CDF phi(f, s) = 1 / (1 + exp(-f/s)).
Density is max(-phi'(f) * df/dtau / phi(f), 0) for a ray derivative df/dtau,
and the discrete opacity of a ray segment with endpoint samples (f_a, s_a),
(f_b, s_b) is clamp((phi_a - phi_b) / phi_a, 0, 1), which telescopes along
monotone descents and vanishes on ascents.

Scenes are either closed-form primitive compositions (AnalyticScene) or a
trainable trilinear grid (GridScene over a GridField).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .grids import CH_C, CH_F, CH_LOG_S, CH_N, GridField, GridLayout, ScalarGrid

_FD_STEP = 1e-4  # central-difference step for analytic normals


# ---------------------------------------------------------------------------
# pointwise model
# ---------------------------------------------------------------------------

def _check_fs(f, s):
    f = np.asarray(f, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise DomainError("f must be finite")
    if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
        raise DomainError("kernel size s must be finite and positive")
    return f, s


def phi(f, s):
    """Logistic CDF of the signed distance: 1 / (1 + exp(-f/s))."""
    f, s = _check_fs(f, s)
    x = f / s
    out = np.where(
        x >= 0.0,
        1.0 / (1.0 + np.exp(-np.abs(x))),
        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))),
    )
    if out.ndim == 0:
        return float(out)
    return out


def density(f, s, df_dtau):
    """Instantaneous extinction along a ray: max(-phi' * df_dtau / phi, 0).

    phi'(f)/phi(f) reduces to (1 - phi(f))/s, which stays finite deep inside
    the surface where phi underflows.
    """
    f, s = _check_fs(f, s)
    df = np.asarray(df_dtau, dtype=np.float64)
    sigma = np.maximum(-(1.0 - phi(f, s)) * df / s, 0.0)
    if sigma.ndim == 0:
        return float(sigma)
    return sigma


def alpha_interval(f_a, s_a, f_b, s_b):
    """Opacity of a ray segment from endpoint samples, clamped to [0, 1].

    Evaluates clamp(1 - phi_b/phi_a, 0, 1) in log space so the ratio stays
    accurate where both CDFs underflow (deep inside a surface).  Each
    endpoint uses its own kernel size.
    """
    f_a, s_a = _check_fs(f_a, s_a)
    f_b, s_b = _check_fs(f_b, s_b)
    a = f_a / s_a
    b = f_b / s_b
    log_ratio = np.logaddexp(0.0, -a) - np.logaddexp(0.0, -b)
    # positive log-ratio means an ascending segment, clamped to zero opacity;
    # capping before exp avoids a harmless overflow there
    out = np.clip(1.0 - np.exp(np.minimum(log_ratio, 0.0)), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# scene containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned domain box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64).reshape(3))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64).reshape(3))
        if np.any(self.hi <= self.lo):
            raise DomainError("domain box must have positive extent")

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def layout(self, resolution) -> GridLayout:
        return GridLayout(self.lo, self.extent, np.broadcast_to(resolution, (3,)))

    def clip_rays(self, origins: np.ndarray, dirs: np.ndarray):
        """Entry/exit parameters of rays against the box (slab method).

        Returns (t_enter, t_exit); rays that miss get t_enter > t_exit.
        """
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (self.lo[None, :] - origins) * inv
            t2 = (self.hi[None, :] - origins) * inv
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        # axes with zero direction: inside -> (-inf, inf), outside -> miss
        zero = dirs == 0.0
        inside = (origins >= self.lo[None, :]) & (origins <= self.hi[None, :])
        lo = np.where(zero, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(zero, np.where(inside, np.inf, -np.inf), hi)
        return lo.max(axis=1), hi.min(axis=1)


@dataclass
class FieldSample:
    """Field evaluation at one point."""

    f: float
    s: float
    c: np.ndarray
    n: np.ndarray
    normalized: bool = True


@dataclass
class FieldBatch:
    """Vectorized field evaluation at N points."""

    f: np.ndarray          # (N,)
    s: np.ndarray          # (N,)
    c: np.ndarray          # (N, 3)
    n: np.ndarray | None = None  # (N, 3) when requested


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    kernel_size: float
    color: tuple
    op: str = "union"

    def sdf(self, p: np.ndarray) -> np.ndarray:
        d = p - np.asarray(self.center, dtype=np.float64)[None, :]
        return np.sqrt((d * d).sum(axis=1)) - self.radius


@dataclass(frozen=True)
class BoxPrim:
    center: tuple
    half_extent: tuple
    kernel_size: float
    color: tuple
    op: str = "union"

    def sdf(self, p: np.ndarray) -> np.ndarray:
        q = np.abs(p - np.asarray(self.center, dtype=np.float64)[None, :]) \
            - np.asarray(self.half_extent, dtype=np.float64)[None, :]
        outside = np.sqrt((np.maximum(q, 0.0) ** 2).sum(axis=1))
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Torus:
    """Torus around the +z axis through `center`."""

    center: tuple
    major_radius: float
    minor_radius: float
    kernel_size: float
    color: tuple
    op: str = "union"

    def sdf(self, p: np.ndarray) -> np.ndarray:
        d = p - np.asarray(self.center, dtype=np.float64)[None, :]
        q = np.hypot(d[:, 0], d[:, 1]) - self.major_radius
        return np.hypot(q, d[:, 2]) - self.minor_radius


Primitive = Sphere | BoxPrim | Torus


def _validate_primitive(prim: Primitive) -> None:
    if prim.kernel_size <= 0.0:
        raise DomainError("primitive kernel_size must be positive")
    c = np.asarray(prim.color, dtype=np.float64)
    if c.shape != (3,) or np.any(c < 0.0) or np.any(c > 1.0):
        raise DomainError("primitive color must be an RGB triple in [0, 1]")
    if prim.op not in ("union", "intersect"):
        raise DomainError(f"unknown CSG op {prim.op!r}")


@dataclass
class AnalyticScene:
    """Closed-form SDF composition with piecewise kernel size and color.

    Primitives fold left to right under their `op` (union keeps the smaller
    SDF, intersect the larger); kernel size and color follow the winning
    primitive.
    """

    primitives: Sequence[Primitive]
    domain: Box = dc_field(default_factory=lambda: Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)))

    def __post_init__(self):
        self.primitives = list(self.primitives)
        if not self.primitives:
            raise DomainError("scene needs at least one primitive")
        for prim in self.primitives:
            _validate_primitive(prim)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        f, _ = self._sdf_winner(points)
        return f

    def _sdf_winner(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        f = self.primitives[0].sdf(pts)
        winner = np.zeros(len(pts), dtype=np.int64)
        for i, prim in enumerate(self.primitives[1:], start=1):
            fi = prim.sdf(pts)
            if prim.op == "union":
                take = fi < f
            else:
                take = fi > f
            f = np.where(take, fi, f)
            winner = np.where(take, i, winner)
        return f, winner

    def eval_batch(self, points: np.ndarray, with_normals: bool = False) -> FieldBatch:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        f, winner = self._sdf_winner(pts)
        s_tab = np.array([p.kernel_size for p in self.primitives], dtype=np.float64)
        c_tab = np.array([p.color for p in self.primitives], dtype=np.float64)
        batch = FieldBatch(f=f, s=s_tab[winner], c=c_tab[winner])
        if with_normals:
            batch.n = self.normals(pts)
        return batch

    def normals(self, points: np.ndarray) -> np.ndarray:
        """Unit normals by central differences of the composed SDF."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        g = np.empty_like(pts)
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = _FD_STEP
            g[:, axis] = (self.sdf(pts + e) - self.sdf(pts - e)) / (2.0 * _FD_STEP)
        norm = np.sqrt((g * g).sum(axis=1))
        return g / np.maximum(norm, 1e-12)[:, None]

    def sample(self, x, d=None) -> FieldSample:
        pts = np.asarray(x, dtype=np.float64).reshape(1, 3)
        batch = self.eval_batch(pts, with_normals=True)
        return FieldSample(
            f=float(batch.f[0]),
            s=float(batch.s[0]),
            c=batch.c[0],
            n=batch.n[0],
            normalized=True,
        )


@dataclass
class GridScene:
    """Field stored on a trainable trilinear grid."""

    field: GridField
    clip_colors: bool = True

    @property
    def domain(self) -> Box:
        lo = self.field.layout.origin
        return Box(lo, lo + self.field.layout.extent)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        return self.eval_batch(points).f

    def eval_batch(self, points: np.ndarray, with_normals: bool = False) -> FieldBatch:
        ch = self.field.sample_channels(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        c = ch[:, CH_C]
        if self.clip_colors:
            c = np.clip(c, 0.0, 1.0)
        batch = FieldBatch(f=ch[:, CH_F], s=np.exp(ch[:, CH_LOG_S]), c=c)
        if with_normals:
            batch.n = ch[:, CH_N]
        return batch

    def sample(self, x, d=None) -> FieldSample:
        batch = self.eval_batch(np.asarray(x).reshape(1, 3), with_normals=True)
        return FieldSample(
            f=float(batch.f[0]),
            s=float(batch.s[0]),
            c=batch.c[0],
            n=batch.n[0],
            normalized=False,
        )


# ---------------------------------------------------------------------------
# baking
# ---------------------------------------------------------------------------

def bake_grid(scene, origin, extent, resolution, with_normals: bool = True) -> GridField:
    """Sample a scene's view-independent channels onto a vertex grid."""
    layout = GridLayout(origin, extent, np.broadcast_to(resolution, (3,)))
    pts = layout.vertex_positions().reshape(-1, 3)
    batch = scene.eval_batch(pts, with_normals=with_normals)
    gf = GridField(layout)
    shape = tuple(int(n) for n in layout.resolution)
    gf.channels[..., CH_F] = batch.f.reshape(shape)
    gf.channels[..., CH_LOG_S] = np.log(batch.s).reshape(shape)
    gf.channels[..., CH_C] = batch.c.reshape(shape + (3,))
    if with_normals and batch.n is not None:
        gf.channels[..., CH_N] = batch.n.reshape(shape + (3,))
    return gf


def bake_scalar_grids(scene, origin, extent, resolution):
    """Vertex-sampled (signed distance, kernel size) grids for a scene."""
    layout = GridLayout(origin, extent, np.broadcast_to(resolution, (3,)))
    pts = layout.vertex_positions().reshape(-1, 3)
    batch = scene.eval_batch(pts)
    shape = tuple(int(n) for n in layout.resolution)
    return (
        ScalarGrid(layout, batch.f.reshape(shape)),
        ScalarGrid(layout, batch.s.reshape(shape)),
    )
