"""Pinhole cameras, ray generation, dense volume rendering, and PSNR.

The dense renderer is the correctness baseline: every ray takes `n_samples`
field evaluations at the midpoints of a uniform partition of its segment
inside the scene's domain box, converts consecutive sample pairs to segment
opacities, and alpha-composites front to back.  It is deterministic (no
jitter) so renders are bit-reproducible.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field as dc_field

import numpy as np

from .backend import kernels
from .errors import ConfigError, DomainError
from .field import alpha_interval

_RAY_CHUNK = 4096  # rays evaluated per batch, bounds peak memory


@dataclass(frozen=True)
class Camera:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 1.0, 0.0)
    vertical_fov: float = 45.0
    width: int = 128
    height: int = 128

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.look_at, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        if pos.shape != (3,) or tgt.shape != (3,) or up.shape != (3,):
            raise ConfigError("camera vectors must be 3-vectors")
        if not (0.0 < self.vertical_fov < 180.0):
            raise ConfigError("vertical_fov must be in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise ConfigError("image dimensions must be positive")
        view = tgt - pos
        if np.linalg.norm(view) < 1e-12:
            raise ConfigError("camera position and look_at coincide")
        if np.linalg.norm(np.cross(view, up)) < 1e-12:
            raise ConfigError("camera up vector is parallel to the view direction")

    def basis(self):
        """Orthonormal (right, up, forward) camera frame."""
        pos = np.asarray(self.position, dtype=np.float64)
        forward = np.asarray(self.look_at, dtype=np.float64) - pos
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(self.up, dtype=np.float64))
        right = right / np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return right, true_up, forward


@dataclass(frozen=True)
class Ray:
    o: np.ndarray
    d: np.ndarray
    t_near: float = 0.0
    t_far: float = math.inf


@dataclass
class RayBundle:
    """Per-pixel rays in row-major order (row 0 is the top of the image)."""

    origins: np.ndarray   # (N, 3)
    dirs: np.ndarray      # (N, 3), unit length
    t_near: np.ndarray    # (N,)
    t_far: np.ndarray     # (N,)

    def __len__(self):
        return len(self.origins)

    def __getitem__(self, i) -> Ray:
        return Ray(self.origins[i], self.dirs[i],
                   float(self.t_near[i]), float(self.t_far[i]))


@dataclass
class RenderOutput:
    image: np.ndarray            # (H, W, 3) in [0, 1]
    transmittance: np.ndarray    # (H, W)
    samples_per_ray: np.ndarray  # (H, W) int64
    mean_samples: float = dc_field(init=False)

    def __post_init__(self):
        self.mean_samples = float(self.samples_per_ray.mean())


def generate_rays(cam: Camera) -> RayBundle:
    """One ray through every pixel center, row-major from the top-left."""
    right, true_up, forward = cam.basis()
    tan_half = math.tan(math.radians(cam.vertical_fov) / 2.0)
    aspect = cam.width / cam.height
    xs = (2.0 * (np.arange(cam.width) + 0.5) / cam.width - 1.0) * tan_half * aspect
    ys = (1.0 - 2.0 * (np.arange(cam.height) + 0.5) / cam.height) * tan_half
    px, py = np.meshgrid(xs, ys)  # (H, W)
    dirs = (forward[None, :]
            + px.reshape(-1, 1) * right[None, :]
            + py.reshape(-1, 1) * true_up[None, :])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    n = cam.width * cam.height
    origins = np.broadcast_to(np.asarray(cam.position, dtype=np.float64), (n, 3)).copy()
    return RayBundle(origins=origins, dirs=dirs,
                     t_near=np.zeros(n), t_far=np.full(n, math.inf))


def composite(alphas, colors):
    """Front-to-back alpha compositing of one ray.

    Returns (color, transmittance) with color = sum_i T_i * alpha_i * c_i and
    T = prod(1 - alpha_i).  Pure; empty input gives (black, 1).
    """
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3) if len(alphas) \
        else np.zeros((0, 3))
    if len(alphas) != len(colors):
        raise DomainError("alphas and colors must have equal length")
    if np.any(alphas < 0.0) or np.any(alphas > 1.0):
        raise DomainError("alpha values must lie in [0, 1]")
    color = np.zeros(3)
    t = 1.0
    for a, c in zip(alphas, colors):
        color = color + (t * a) * c
        t = t * (1.0 - a)
    return color, t


def render_full(scene, cam: Camera, n_samples: int, background,
                t_min: float | None = None, workers: int = 1) -> RenderOutput:
    """Dense baseline render.

    Every ray that intersects the scene's domain box is sampled at the
    midpoints of `n_samples` uniform subintervals; consecutive samples form
    segments whose opacity comes from the endpoint SDF values, colored by the
    nearer sample.  Remaining transmittance picks up the background.  Rays
    that miss the box entirely return the background with zero samples.

    `t_min`, when set, stops compositing once transmittance drops below it;
    samples_per_ray then reports only the samples the composite consumed.
    By default it is off so every box-crossing ray reports exactly
    `n_samples`.
    """
    if n_samples < 2:
        raise DomainError("n_samples must be at least 2")
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    bundle = generate_rays(cam)
    n_rays = len(bundle)
    t0, t1 = scene.domain.clip_rays(bundle.origins, bundle.dirs)
    t0 = np.maximum(t0, bundle.t_near)
    t1 = np.minimum(t1, bundle.t_far)
    hit = t0 < t1

    image = np.zeros((n_rays, 3))
    trans = np.ones(n_rays)
    counts = np.zeros(n_rays, dtype=np.int64)
    image[~hit] = bg

    tmin_val = 0.0 if t_min is None else float(t_min)

    def run_chunk(lo, hi):
        idx = np.nonzero(hit[lo:hi])[0] + lo
        if len(idx) == 0:
            return
        a = t0[idx]
        b = t1[idx]
        offs = (np.arange(n_samples) + 0.5) / n_samples
        taus = a[:, None] + (b - a)[:, None] * offs[None, :]   # (R, S)
        pts = bundle.origins[idx, None, :] + taus[..., None] * bundle.dirs[idx, None, :]
        batch = scene.eval_batch(pts.reshape(-1, 3))
        f = batch.f.reshape(len(idx), n_samples)
        s = batch.s.reshape(len(idx), n_samples)
        c = batch.c.reshape(len(idx), n_samples, 3)
        alphas = alpha_interval(f[:, :-1], s[:, :-1], f[:, 1:], s[:, 1:])
        seg_colors = np.ascontiguousarray(c[:, :-1])
        seg_counts = np.full(len(idx), n_samples - 1, dtype=np.int64)
        add_bg = np.ones(len(idx), dtype=np.uint8)
        color, t_end, used = kernels.composite_padded(
            np.ascontiguousarray(alphas), seg_colors, seg_counts,
            bg, add_bg, tmin_val)
        image[idx] = color
        trans[idx] = t_end
        if t_min is None:
            counts[idx] = n_samples
        else:
            counts[idx] = np.minimum(used + 1, n_samples)

    chunks = [(lo, min(lo + _RAY_CHUNK, n_rays)) for lo in range(0, n_rays, _RAY_CHUNK)]
    if workers <= 1 or len(chunks) == 1:
        for lo, hi in chunks:
            run_chunk(lo, hi)
    else:
        pool = [threading.Thread(target=lambda block=block: [run_chunk(*c) for c in block])
                for block in _split(chunks, workers)]
        for th in pool:
            th.start()
        for th in pool:
            th.join()

    shape = (cam.height, cam.width)
    return RenderOutput(image=image.reshape(shape + (3,)),
                        transmittance=trans.reshape(shape),
                        samples_per_ray=counts.reshape(shape))


def _split(items, k):
    """Deal items round-robin into at most k non-empty groups."""
    groups = [items[i::k] for i in range(min(k, len(items)))]
    return [g for g in groups if g]


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against a peak of 1.0.

    Identical images return math.inf.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
