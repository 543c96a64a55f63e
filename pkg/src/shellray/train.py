"""Two-stage fitting of a trilinear grid field to posed target images.

Stage one renders full rays through the domain box and descends on a color
loss plus eikonal, kernel-smoothness, and normal-consistency regularizers;
the shell is then extracted from the fitted field, and stage two fine-tunes
color only through narrow-band rendering inside that shell.

Gradients are exact reverse-mode derivatives of the rendering-and-loss
pipeline, hand-written over the grid channels: trilinear interpolation,
segment opacities, front-to-back compositing, and the finite-difference
stencils are each differentiated and accumulated with deterministic
ordering, so a fixed seed reproduces training bit for bit.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .backend import kernels
from .band import SamplingParams, band_structure, build_shell_bvhs, padded_segments
from .errors import DomainError, NumericalError
from .field import Box
from .grids import CH_C, CH_F, CH_LOG_S, CH_N, GridField, GridLayout, ScalarGrid
from .render import generate_rays
from .shell import Shell, ShellParams, extract_shell

_GRAD_EPS = 1e-8    # gradient norms below this contribute nothing
_TINY = 1e-12

# rng stream labels: every draw comes from default_rng([seed, iteration, label])
_BATCH_DRAW = 1
_SMOOTH_DRAW = 2

_CHANNEL_NAMES = ("f", "log_s", "c0", "c1", "c2", "n0", "n1", "n2")


class TrainMode(enum.Enum):
    FULL_RAY = "full_ray"
    NARROW_BAND = "narrow_band"


@dataclass(frozen=True)
class TrainConfig:
    """Loss weights, optimizer constants, and batch shape."""

    lambda_c: float = 1.0
    lambda_e: float = 0.1
    lambda_n: float = 0.1
    lambda_s: float = 0.01
    epsilon: float = 0.05        # kernel-smoothness perturbation std
    learning_rate: float = 1000.0
    n1: int = 2000
    n2: int = 500
    batch_rays: int = 1024
    rng_seed: int = 0
    n_samples: int = 64          # stage-one samples per ray
    color_norm: str = "l1"       # per-ray residual norm: "l1" or "l2"
    fd_step: float | None = None  # stencil step; None -> grid spacing
    background: tuple = (0.0, 0.0, 0.0)
    sampling: SamplingParams = dc_field(default_factory=SamplingParams)

    def __post_init__(self):
        for name in ("lambda_c", "lambda_e", "lambda_n", "lambda_s"):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be non-negative")
        if self.epsilon <= 0.0:
            raise DomainError("epsilon must be positive")
        if self.learning_rate < 0.0:
            raise DomainError("learning_rate must be non-negative")
        if self.n1 < 0 or self.n2 < 0:
            raise DomainError("stage iteration counts must be non-negative")
        if self.batch_rays < 1:
            raise DomainError("batch_rays must be positive")
        if self.n_samples < 2:
            raise DomainError("n_samples must be at least 2")
        if self.color_norm not in ("l1", "l2"):
            raise DomainError("color_norm must be 'l1' or 'l2'")
        if self.fd_step is not None and self.fd_step <= 0.0:
            raise DomainError("fd_step must be positive")


@dataclass
class TargetView:
    """One posed ground-truth image."""

    camera: object                # render.Camera
    image: np.ndarray             # (H, W, 3) in [0, 1]


@dataclass
class RayBatch:
    origins: np.ndarray
    dirs: np.ndarray
    t_near: np.ndarray
    t_far: np.ndarray
    targets: np.ndarray           # (N, 3)

    def __len__(self):
        return len(self.origins)


@dataclass
class TrainState:
    field: GridField
    iteration: int = 0
    history: list = dc_field(default_factory=list)


# ---------------------------------------------------------------------------
# loss terms (forward values)
# ---------------------------------------------------------------------------

def loss_color(rendered, target, norm: str = "l1") -> float:
    """Mean per-ray residual norm between rendered and target colors."""
    rendered = np.asarray(rendered, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(rendered) == 0:
        raise DomainError("color loss needs at least one ray")
    if rendered.shape != target.shape:
        raise DomainError("rendered/target shape mismatch")
    resid = rendered - target
    if norm == "l1":
        per_ray = np.abs(resid).sum(axis=1)
    elif norm == "l2":
        per_ray = np.sqrt((resid * resid).sum(axis=1))
    else:
        raise DomainError("norm must be 'l1' or 'l2'")
    return float(per_ray.mean())


def _channel_block(field: GridField, sel) -> np.ndarray:
    """Contiguous single-block channel view suitable for the gather kernel."""
    block = field.channels[..., sel]
    if block.ndim == 3:
        block = block[..., None]
    return np.ascontiguousarray(block)


def _gather(field: GridField, block: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return kernels.trilinear_gather(
        block, field.layout.origin, field.layout.spacing,
        np.ascontiguousarray(pts, dtype=np.float64))


def _stencil_points(pts: np.ndarray, h: float) -> np.ndarray:
    """Stencil offsets stacked [+x; -x; +y; -y; +z; -z], (6N, 3)."""
    blocks = []
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        blocks.append(pts + e)
        blocks.append(pts - e)
    return np.concatenate(blocks, axis=0)


def _fd_gradient(field: GridField, pts: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of the interpolated f channel, (N, 3)."""
    n = len(pts)
    f_block = _channel_block(field, CH_F)
    vals = _gather(field, f_block, _stencil_points(pts, h))[:, 0]
    g = np.empty((n, 3))
    for axis in range(3):
        plus = vals[2 * axis * n:(2 * axis + 1) * n]
        minus = vals[(2 * axis + 1) * n:(2 * axis + 2) * n]
        g[:, axis] = (plus - minus) / (2.0 * h)
    return g


def default_fd_step(layout: GridLayout) -> float:
    return float(layout.spacing.min())


def loss_eikonal(field: GridField, points, fd_step: float) -> float:
    """Mean squared deviation of the SDF gradient norm from one."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return 0.0
    g = _fd_gradient(field, pts, fd_step)
    norm = np.sqrt((g * g).sum(axis=1))
    return float(((norm - 1.0) ** 2).mean())


def loss_kernel_smooth(field: GridField, points, epsilon: float, rng) -> float:
    """Mean |log s(x) - log s(x + delta)| for Gaussian delta of std epsilon."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return 0.0
    block = _channel_block(field, CH_LOG_S)
    perturbed = pts + rng.normal(0.0, epsilon, pts.shape)
    ls_x = _gather(field, block, pts)[:, 0]
    ls_y = _gather(field, block, perturbed)[:, 0]
    return float(np.abs(ls_x - ls_y).mean())


def loss_normal(field: GridField, points, fd_step: float) -> float:
    """Mean distance between the stored normal and the normalized gradient."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return 0.0
    n_pred = _gather(field, _channel_block(field, CH_N), pts)
    g = _fd_gradient(field, pts, fd_step)
    norm = np.sqrt((g * g).sum(axis=1))
    ok = norm > _GRAD_EPS
    ghat = np.where(ok[:, None], g / np.maximum(norm, _TINY)[:, None], 0.0)
    r = n_pred - ghat
    dist = np.sqrt((r * r).sum(axis=1))
    return float(np.where(ok, dist, 0.0).mean())


def total_loss(parts, cfg: TrainConfig) -> float:
    """Weighted objective from unweighted parts (L_c, L_e, L_s, L_n)."""
    l_c, l_e, l_s, l_n = (float(p) for p in parts)
    return (cfg.lambda_c * l_c + cfg.lambda_e * l_e
            + cfg.lambda_s * l_s + cfg.lambda_n * l_n)


# ---------------------------------------------------------------------------
# differentiable renderer
# ---------------------------------------------------------------------------

@dataclass
class SegmentGraph:
    """Evaluation points plus segment indexing, one batch of rays.

    Shares the flat-index convention of band.BandStructure: end_a/end_b and
    color_src index into pts, row/col into the padded per-ray segment grid.
    """

    pts: np.ndarray
    row: np.ndarray
    col: np.ndarray
    end_a: np.ndarray
    end_b: np.ndarray
    color_src: np.ndarray
    seg_counts: np.ndarray
    add_bg: np.ndarray
    n_rays: int


def _full_ray_graph(layout: GridLayout, batch: RayBatch, n_samples: int) -> SegmentGraph:
    """Uniform midpoint samples over the domain box, as the dense renderer."""
    lo = layout.origin
    hi = layout.origin + layout.extent
    t0, t1 = Box(lo, hi).clip_rays(batch.origins, batch.dirs)
    t0 = np.maximum(t0, batch.t_near)
    t1 = np.minimum(t1, batch.t_far)
    hit = t0 < t1
    idx = np.nonzero(hit)[0]
    n_rays = len(batch)

    a = t0[idx]
    b = t1[idx]
    offs = (np.arange(n_samples) + 0.5) / n_samples
    taus = a[:, None] + (b - a)[:, None] * offs[None, :]
    pts = batch.origins[idx, None, :] + taus[..., None] * batch.dirs[idx, None, :]

    n_hit = len(idx)
    segs = n_samples - 1
    first = (np.arange(n_hit)[:, None] * n_samples + np.arange(segs)[None, :]).ravel()
    seg_counts = np.zeros(n_rays, dtype=np.int64)
    seg_counts[idx] = segs
    return SegmentGraph(
        pts=pts.reshape(-1, 3),
        row=np.repeat(idx, segs),
        col=np.tile(np.arange(segs, dtype=np.int64), n_hit),
        end_a=first,
        end_b=first + 1,
        color_src=first,
        seg_counts=seg_counts,
        add_bg=np.ones(n_rays, dtype=np.uint8),
        n_rays=n_rays,
    )


def _band_graph(bvhs, batch: RayBatch, p: SamplingParams) -> SegmentGraph:
    st = band_structure(bvhs, batch.origins, batch.dirs,
                        batch.t_near, batch.t_far, p)
    return SegmentGraph(
        pts=st.points(batch.origins, batch.dirs),
        row=st.row, col=st.col, end_a=st.end_a, end_b=st.end_b,
        color_src=st.color_src, seg_counts=st.seg_counts,
        add_bg=st.add_bg, n_rays=len(batch),
    )


@dataclass
class _Forward:
    graph: SegmentGraph
    raw: np.ndarray          # (N, 8) channel samples at graph.pts
    s: np.ndarray            # (N,) exp(log_s)
    x: np.ndarray            # (N,) f / s
    log_phi_neg: np.ndarray  # (N,) logaddexp(0, -x)
    alphas: np.ndarray       # (R, W)
    colors: np.ndarray       # (R, W, 3)
    t_before: np.ndarray     # (R, W) transmittance entering each segment
    rendered: np.ndarray     # (R, 3)
    t_end: np.ndarray        # (R,)
    bg: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _render_forward(field: GridField, graph: SegmentGraph, bg) -> _Forward:
    bg = np.asarray(bg, dtype=np.float64).reshape(3)
    n_pts = len(graph.pts)
    if n_pts:
        raw = field.sample_channels(graph.pts)
        s = np.exp(raw[:, CH_LOG_S])
        x = raw[:, CH_F] / s
        alphas, colors = padded_segments(graph, raw[:, CH_F], s, raw[:, CH_C])
    else:
        raw = np.zeros((0, 8))
        s = np.zeros(0)
        x = np.zeros(0)
        alphas = np.zeros((graph.n_rays, 1))
        colors = np.zeros((graph.n_rays, 1, 3))
    rendered, t_end, _ = kernels.composite_padded(
        alphas, colors, graph.seg_counts, bg, graph.add_bg, 0.0)
    t_run = np.cumprod(1.0 - alphas, axis=1)
    t_before = np.empty_like(t_run)
    t_before[:, 0] = 1.0
    t_before[:, 1:] = t_run[:, :-1]
    return _Forward(graph=graph, raw=raw, s=s, x=x,
                    log_phi_neg=np.logaddexp(0.0, -x),
                    alphas=alphas, colors=colors, t_before=t_before,
                    rendered=rendered, t_end=t_end, bg=bg)


def _color_backward(fwd: _Forward, g_ray: np.ndarray) -> np.ndarray:
    """Per-point channel gradients of dot(g_ray, rendered), (N, 8).

    Works backward through compositing with the suffix recursion
    B_j = alpha_j c_j + (1 - alpha_j) B_{j+1} (B past the last segment is the
    background where it applies), giving dC/dalpha_j = T_j (c_j - B_{j+1})
    and dC/dc_j = T_j alpha_j.
    """
    graph = fwd.graph
    n_pts = len(graph.pts)
    grads = np.zeros((n_pts, 8))
    if n_pts == 0 or len(graph.row) == 0:
        return grads
    n_rays, width = fwd.alphas.shape
    d_alpha = np.zeros((n_rays, width))
    d_color = np.zeros((n_rays, width, 3))
    b_next = np.where(graph.add_bg.astype(bool)[:, None], fwd.bg[None, :], 0.0)
    for j in range(width - 1, -1, -1):
        aj = fwd.alphas[:, j]
        cj = fwd.colors[:, j]
        d_alpha[:, j] = fwd.t_before[:, j] * (g_ray * (cj - b_next)).sum(axis=1)
        d_color[:, j] = (fwd.t_before[:, j] * aj)[:, None] * g_ray
        b_next = aj[:, None] * cj + (1.0 - aj)[:, None] * b_next

    d_seg = d_alpha[graph.row, graph.col]
    d_col = d_color[graph.row, graph.col]

    # through alpha = 1 - exp(D), D = logaddexp(0,-x_a) - logaddexp(0,-x_b),
    # active only on descending segments (D < 0; ascents clamp to zero)
    ea, eb = graph.end_a, graph.end_b
    D = fwd.log_phi_neg[ea] - fwd.log_phi_neg[eb]
    act = D < 0.0
    eD = np.where(act, np.exp(np.minimum(D, 0.0)), 0.0)
    da = d_seg * eD * _sigmoid(-fwd.x[ea])      # dL/dx_a
    db = -d_seg * eD * _sigmoid(-fwd.x[eb])     # dL/dx_b

    ends = np.concatenate([ea, eb])
    d_end = np.concatenate([da, db])
    grads[:, CH_F] = np.bincount(ends, weights=d_end / fwd.s[ends],
                                 minlength=n_pts)
    grads[:, CH_LOG_S] = np.bincount(ends, weights=d_end * (-fwd.x[ends]),
                                     minlength=n_pts)
    for ch in range(3):
        grads[:, 2 + ch] = np.bincount(graph.color_src, weights=d_col[:, ch],
                                       minlength=n_pts)
    return grads


def _reg_forward_backward(field: GridField, pts: np.ndarray, cfg: TrainConfig,
                          h: float, rng, grad: np.ndarray):
    """Eikonal, kernel-smoothness, and normal losses with their gradients.

    Returns unweighted (l_e, l_s, l_n); accumulates the lambda-weighted
    channel gradients into `grad` in place.
    """
    n = len(pts)
    if n == 0:
        return 0.0, 0.0, 0.0
    layout = field.layout

    stencil = _stencil_points(pts, h)
    f_vals = _gather(field, _channel_block(field, CH_F), stencil)[:, 0]
    g = np.empty((n, 3))
    for axis in range(3):
        plus = f_vals[2 * axis * n:(2 * axis + 1) * n]
        minus = f_vals[(2 * axis + 1) * n:(2 * axis + 2) * n]
        g[:, axis] = (plus - minus) / (2.0 * h)
    norm = np.sqrt((g * g).sum(axis=1))
    ok = norm > _GRAD_EPS
    safe = np.maximum(norm, _TINY)

    l_e = float(((norm - 1.0) ** 2).mean())
    ghat = np.where(ok[:, None], g / safe[:, None], 0.0)
    d_g = np.where(ok[:, None],
                   (2.0 * (norm - 1.0) / n)[:, None] * ghat, 0.0)

    n_pred = _gather(field, _channel_block(field, CH_N), pts)
    r = n_pred - ghat
    r_norm = np.sqrt((r * r).sum(axis=1))
    l_n = float(np.where(ok, r_norm, 0.0).mean())
    rhat = np.where((ok & (r_norm > _TINY))[:, None],
                    r / np.maximum(r_norm, _TINY)[:, None], 0.0)
    d_n_pred = rhat / n
    # d(normalized g)/dg projects out the radial component
    radial = (ghat * rhat).sum(axis=1)[:, None] * ghat
    d_g_normal = np.where(ok[:, None], -(rhat - radial) / safe[:, None] / n, 0.0)

    d_g_total = cfg.lambda_e * d_g + cfg.lambda_n * d_g_normal

    perturbed = pts + rng.normal(0.0, cfg.epsilon, pts.shape)
    ls_block = _channel_block(field, CH_LOG_S)
    ls_x = _gather(field, ls_block, pts)[:, 0]
    ls_y = _gather(field, ls_block, perturbed)[:, 0]
    diff = ls_x - ls_y
    l_s = float(np.abs(diff).mean())
    d_ls = cfg.lambda_s * np.sign(diff) / n

    # scatter each channel block separately so the stencil points (which only
    # carry f-gradients) do not drag zero weights through every channel
    grid_shape = tuple(int(r) for r in layout.resolution)
    stencil_grads = np.empty((6 * n, 1))
    for axis in range(3):
        w = d_g_total[:, axis] / (2.0 * h)
        stencil_grads[2 * axis * n:(2 * axis + 1) * n, 0] = w
        stencil_grads[(2 * axis + 1) * n:(2 * axis + 2) * n, 0] = -w
    tmp_f = np.zeros(grid_shape + (1,))
    kernels.trilinear_scatter(tmp_f, layout.origin, layout.spacing,
                              np.ascontiguousarray(stencil), stencil_grads)
    grad[..., CH_F] += tmp_f[..., 0]

    tmp_n = np.zeros(grid_shape + (3,))
    kernels.trilinear_scatter(tmp_n, layout.origin, layout.spacing,
                              np.ascontiguousarray(pts),
                              cfg.lambda_n * d_n_pred)
    grad[..., CH_N] += tmp_n

    tmp_ls = np.zeros(grid_shape + (1,))
    kernels.trilinear_scatter(
        tmp_ls, layout.origin, layout.spacing,
        np.ascontiguousarray(np.concatenate([pts, perturbed], axis=0)),
        np.concatenate([d_ls, -d_ls])[:, None])
    grad[..., CH_LOG_S] += tmp_ls[..., 0]
    return l_e, l_s, l_n


def loss_and_gradient(field: GridField, batch: RayBatch, cfg: TrainConfig,
                      mode: TrainMode, bvhs=None, iteration: int = 0):
    """Objective value, unweighted parts, and dL/d(grid channels).

    Pure: neither the field nor any global state is modified.  The
    kernel-smoothness perturbation is drawn from a stream keyed on
    (rng_seed, iteration), so repeated calls at one iteration agree bitwise.
    """
    if mode == TrainMode.NARROW_BAND:
        if bvhs is None:
            raise DomainError("narrow-band training requires shell BVHs")
        graph = _band_graph(bvhs, batch, cfg.sampling)
    else:
        graph = _full_ray_graph(field.layout, batch, cfg.n_samples)

    fwd = _render_forward(field, graph, cfg.background)
    resid = fwd.rendered - batch.targets
    n_rays = len(batch)
    if cfg.color_norm == "l1":
        l_c = float(np.abs(resid).sum(axis=1).mean())
        g_ray = (cfg.lambda_c / n_rays) * np.sign(resid)
    else:
        per_ray = np.sqrt((resid * resid).sum(axis=1))
        l_c = float(per_ray.mean())
        scale = np.where(per_ray > _TINY, 1.0 / np.maximum(per_ray, _TINY), 0.0)
        g_ray = (cfg.lambda_c / n_rays) * resid * scale[:, None]

    grad = np.zeros_like(field.channels)
    point_grads = _color_backward(fwd, g_ray)
    if len(graph.pts):
        kernels.trilinear_scatter(grad, field.layout.origin,
                                  field.layout.spacing,
                                  np.ascontiguousarray(graph.pts), point_grads)

    if mode == TrainMode.FULL_RAY:
        h = cfg.fd_step if cfg.fd_step is not None else default_fd_step(field.layout)
        rng = np.random.default_rng([cfg.rng_seed, iteration, _SMOOTH_DRAW])
        l_e, l_s, l_n = _reg_forward_backward(field, graph.pts, cfg, h, rng, grad)
        parts = (l_c, l_e, l_s, l_n)
        total = total_loss(parts, cfg)
    else:
        parts = (l_c, 0.0, 0.0, 0.0)
        total = cfg.lambda_c * l_c
    return total, parts, grad


def _first_bad_parameter(grad: np.ndarray) -> str:
    bad = ~np.isfinite(grad)
    flat = int(np.argmax(bad))
    i, j, k, ch = np.unravel_index(flat, grad.shape)
    return f"{_CHANNEL_NAMES[ch]}[{i},{j},{k}]"


def gradient_step(state: TrainState, batch: RayBatch, cfg: TrainConfig,
                  mode: TrainMode, bvhs=None):
    """One plain gradient-descent update; returns (total, parts)."""
    total, parts, grad = loss_and_gradient(state.field, batch, cfg, mode,
                                           bvhs, state.iteration)
    if not np.all(np.isfinite(grad)):
        name = _first_bad_parameter(grad)
        raise NumericalError(
            f"non-finite gradient for parameter {name} "
            f"at iteration {state.iteration}")
    state.field.channels -= cfg.learning_rate * grad
    if not np.all(np.isfinite(state.field.channels)):
        name = _first_bad_parameter(state.field.channels)
        raise NumericalError(
            f"parameter {name} became non-finite at iteration {state.iteration}")
    state.history.append((state.iteration,) + parts + (total,))
    state.iteration += 1
    return total, parts


# ---------------------------------------------------------------------------
# the two-stage loop
# ---------------------------------------------------------------------------

def collect_rays(views) -> RayBatch:
    """Flatten posed images into one ray/target table."""
    origins, dirs, t_near, t_far, targets = [], [], [], [], []
    for view in views:
        bundle = generate_rays(view.camera)
        img = np.asarray(view.image, dtype=np.float64)
        if img.shape != (view.camera.height, view.camera.width, 3):
            raise DomainError(
                f"target image shape {img.shape} does not match camera "
                f"{view.camera.height}x{view.camera.width}")
        origins.append(bundle.origins)
        dirs.append(bundle.dirs)
        t_near.append(bundle.t_near)
        t_far.append(bundle.t_far)
        targets.append(img.reshape(-1, 3))
    return RayBatch(*(np.concatenate(arr) for arr in
                      (origins, dirs, t_near, t_far, targets)))


def _draw_batch(rays: RayBatch, cfg: TrainConfig, iteration: int) -> RayBatch:
    n = len(rays)
    if cfg.batch_rays >= n:
        idx = np.arange(n)
    else:
        rng = np.random.default_rng([cfg.rng_seed, iteration, _BATCH_DRAW])
        idx = rng.choice(n, size=cfg.batch_rays, replace=False)
    return RayBatch(rays.origins[idx], rays.dirs[idx], rays.t_near[idx],
                    rays.t_far[idx], rays.targets[idx])


def init_field(layout: GridLayout, *, radius_frac: float = 0.25,
               kernel_size: float = 0.1, color: float = 0.5) -> GridField:
    """Spherical signed-distance start: centered ball, constant kernel/color."""
    gf = GridField(layout)
    pos = layout.vertex_positions()
    center = layout.origin + 0.5 * layout.extent
    d = pos - center
    rr = np.sqrt((d * d).sum(axis=-1))
    gf.channels[..., CH_F] = rr - radius_frac * float(layout.extent.min())
    gf.channels[..., CH_LOG_S] = np.log(kernel_size)
    gf.channels[..., CH_C] = color
    gf.channels[..., CH_N] = d / np.maximum(rr, _TINY)[..., None]
    return gf


def field_shell(field: GridField, shell_params: ShellParams | None = None) -> Shell:
    """Extract the shell from the field's own vertex values."""
    f_grid = ScalarGrid(field.layout, field.f.copy())
    s_grid = ScalarGrid(field.layout, np.exp(field.log_s))
    return extract_shell(f_grid, s_grid, shell_params or ShellParams())


def train_two_stage(views, cfg: TrainConfig, layout: GridLayout,
                    field: GridField | None = None,
                    shell_params: ShellParams | None = None,
                    log_fn=None, log_every: int = 100,
                    snapshot_fn=None, snapshot_every: int = 0,
                    stage1_fn=None):
    """Fit, extract the shell, fine-tune inside it; returns (state, shell).

    `log_fn` receives formatted loss lines; `snapshot_fn` receives the
    TrainState whenever `snapshot_every` iterations elapse; `stage1_fn`
    receives it once, after the last full-ray step and before shell
    extraction.
    """
    if not views:
        raise DomainError("training needs at least one target view")
    rays = collect_rays(views)
    state = TrainState(field if field is not None else init_field(layout))

    def maybe_report(total, parts):
        it = state.iteration - 1
        if log_fn is not None and (it % max(log_every, 1) == 0):
            l_c, l_e, l_s, l_n = parts
            log_fn(f"iter {it:6d}  L_c {l_c:.6f}  L_e {l_e:.6f}  "
                   f"L_s {l_s:.6f}  L_n {l_n:.6f}  total {total:.6f}")
        if snapshot_fn is not None and snapshot_every > 0 \
                and it % snapshot_every == 0:
            snapshot_fn(state)

    for _ in range(cfg.n1):
        batch = _draw_batch(rays, cfg, state.iteration)
        total, parts = gradient_step(state, batch, cfg, TrainMode.FULL_RAY)
        maybe_report(total, parts)

    if stage1_fn is not None:
        stage1_fn(state)
    shell = field_shell(state.field, shell_params)
    bvhs = build_shell_bvhs(shell)

    for _ in range(cfg.n2):
        batch = _draw_batch(rays, cfg, state.iteration)
        total, parts = gradient_step(state, batch, cfg,
                                     TrainMode.NARROW_BAND, bvhs)
        maybe_report(total, parts)
    return state, shell


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(base_path, field: GridField, cfg: TrainConfig) -> None:
    """Write <base>.gfld (grid) and <base>.json (config echo)."""
    base = str(base_path)
    field.save(base + ".gfld")
    with open(base + ".json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(base_path):
    base = str(base_path)
    field = GridField.load(base + ".gfld")
    with open(base + ".json") as fh:
        raw = json.load(fh)
    raw["sampling"] = SamplingParams(**raw["sampling"])
    raw["background"] = tuple(raw["background"])
    return field, TrainConfig(**raw)
