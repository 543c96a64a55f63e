"""Narrow-band sampling: ray samples placed only inside shell intervals.

Rays are cast against the outer and inner shell meshes; field samples are
placed only inside the outer entry/exit intervals, clipped against the first
entry into the inner (solid) mesh.  Interval sample counts adapt to interval
width, so fuzzy regions get dense coverage while a thin shell around a sharp
surface costs a handful of evaluations.  Compositing matches the dense
renderer segment for segment; batching across rays never changes results.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .errors import DomainError
from .field import alpha_interval
from .render import _RAY_CHUNK, RenderOutput, _split, generate_rays
from .trace import Bvh, HitFlag, build_bvh, cast_all_hits_batch

# Nudge applied to the spacing quotient before the ceiling so that binary
# rounding of w - w_s cannot overshoot an exact integer boundary (e.g.
# (0.05 - 0.02) / 0.01 evaluates slightly above 3).
_CEIL_NUDGE = 1e-9


@dataclass(frozen=True)
class SamplingParams:
    """Narrow-band sample placement constants."""

    delta_s: float = 0.01   # target inter-sample spacing
    w_s: float = 0.02       # below this width an interval gets one sample
    n_max: int = 16         # per-interval sample cap
    dp_max: int = 20        # max outer-mesh hits processed per ray

    def __post_init__(self):
        if self.delta_s <= 0.0:
            raise DomainError("delta_s must be positive")
        if self.w_s < 0.0:
            raise DomainError("w_s must be non-negative")
        if self.n_max < 1 or self.dp_max < 1:
            raise DomainError("n_max and dp_max must be positive integers")


@dataclass
class ShellBvhs:
    """Ray-query acceleration structures for the two shell meshes."""

    outer: Bvh
    inner: Bvh


def build_shell_bvhs(shell) -> ShellBvhs:
    return ShellBvhs(outer=build_bvh(shell.outer), inner=build_bvh(shell.inner))


def interval_sample_count(w: float, p: SamplingParams | None = None) -> int:
    """Samples for an interval of width w: min(ceil(max(w - w_s, 0)/delta_s) + 1, n_max)."""
    if p is None:
        p = SamplingParams()
    if w < 0.0:
        raise DomainError("interval width must be non-negative")
    q = max(w - p.w_s, 0.0) / p.delta_s
    return min(math.ceil(q - _CEIL_NUDGE) + 1, p.n_max) if q > 0.0 \
        else 1


def _first_inner_entry(inner_hits) -> float:
    for h in inner_hits:
        if h.flag == HitFlag.ENTERING:
            return h.t
    return math.inf


def _plan(outer_hits, inner_hits, t_near: float, p: SamplingParams):
    """Per-ray sample plan: (taus, intervals, terminated_at_inner).

    intervals is a list of (n_samples, enter, exit) records; taus holds the
    n interior points of the (n+2)-point equispaced partition of each
    interval, concatenated in ray order.  Malformed flag runs are tolerated:
    an initial EXITING hit opens at t_near, a repeated ENTERING closes the
    earlier interval where the new one opens, and a boundary beyond the
    first inner entry stops processing.
    """
    d_minus = _first_inner_entry(inner_hits)
    taus: list[float] = []
    intervals: list[tuple[int, float, float]] = []
    terminated = False
    pending = None

    def emit(enter, raw_exit):
        exit_ = min(raw_exit, d_minus)
        if exit_ <= enter:
            return
        n = interval_sample_count(exit_ - enter, p)
        intervals.append((n, enter, exit_))
        taus.extend(np.linspace(enter, exit_, n + 2)[1:-1].tolist())

    for k, h in enumerate(outer_hits):
        if k >= p.dp_max:
            break
        if h.flag == HitFlag.ENTERING:
            if pending is not None:
                emit(pending, h.t)
            pending = h.t
        else:
            if pending is None:
                if k > 0:
                    continue        # stray exit with nothing open
                pending = t_near    # origin already inside the band
            emit(pending, h.t)
            pending = None
        if h.t > d_minus:
            terminated = True
            break
    return taus, intervals, terminated


def narrow_band_samples(outer_hits, inner_hits, r,
                        p: SamplingParams | None = None):
    """Sample distances along one ray, and whether it ended inside the solid.

    Hit lists must be sorted ascending (as produced by the all-hits queries).
    """
    if p is None:
        p = SamplingParams()
    taus, _, terminated = _plan(outer_hits, inner_hits, float(r.t_near), p)
    return taus, terminated


@dataclass
class BandStructure:
    """Sample placement and segment indexing for a block of rays.

    The field evaluation points of the block are the concatenation
    [interval samples, interval enter probes, interval exit probes]; the
    segment arrays index into that flat order.  Every interval contributes
    its n samples plus the two probes (n + 2 evaluations) and n + 1
    segments -- margin segments against each probe around the interior
    consecutive-sample segments, or one probe-to-probe segment when n = 1.
    """

    tau_ray: np.ndarray      # (P,) ray row of each sample
    tau_vals: np.ndarray     # (P,) distance along the ray
    probe_ray: np.ndarray    # (Q,) ray row of each interval
    probe_enter: np.ndarray  # (Q,)
    probe_exit: np.ndarray   # (Q,)
    row: np.ndarray          # (S,) ray row of each segment
    col: np.ndarray          # (S,) position in the ray's padded segment list
    end_a: np.ndarray        # (S,) flat point index of the nearer endpoint
    end_b: np.ndarray        # (S,) flat point index of the farther endpoint
    color_src: np.ndarray    # (S,) flat index of the sample coloring the segment
    seg_counts: np.ndarray   # (R,) segments per ray
    add_bg: np.ndarray       # (R,) uint8, 0 where the ray ended in the solid
    evals: np.ndarray        # (R,) field evaluations per ray

    @property
    def n_points(self) -> int:
        return len(self.tau_ray) + 2 * len(self.probe_ray)

    def points(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Evaluation positions, (n_points, 3), in flat point order."""
        return np.concatenate([
            origins[self.tau_ray] + self.tau_vals[:, None] * dirs[self.tau_ray],
            origins[self.probe_ray] + self.probe_enter[:, None] * dirs[self.probe_ray],
            origins[self.probe_ray] + self.probe_exit[:, None] * dirs[self.probe_ray],
        ], axis=0)


def band_structure(bvhs: ShellBvhs, origins, dirs, t_near, t_far,
                   p: SamplingParams | None = None) -> BandStructure:
    """Cast a block of rays against the shell and index all their segments."""
    if p is None:
        p = SamplingParams()
    outer = cast_all_hits_batch(bvhs.outer, origins, dirs, t_near, t_far)
    inner = cast_all_hits_batch(bvhs.inner, origins, dirs, t_near, t_far)
    nrows = len(outer)

    tau_vals: list[float] = []
    tau_ray: list[int] = []
    probe_ray: list[int] = []
    probe_enter: list[float] = []
    probe_exit: list[float] = []
    # interior segments between consecutive samples: sample pair (a, b)
    seg_row: list[int] = []
    seg_col: list[int] = []
    seg_a: list[int] = []
    seg_b: list[int] = []
    # margin segments against the interval's endpoint probes
    ent_row: list[int] = []   # [enter -> first sample]
    ent_col: list[int] = []
    ent_tau: list[int] = []
    ent_probe: list[int] = []
    ext_row: list[int] = []   # [last sample -> exit]
    ext_col: list[int] = []
    ext_tau: list[int] = []
    ext_probe: list[int] = []
    # single-sample intervals: one segment straight across
    sing_row: list[int] = []
    sing_col: list[int] = []
    sing_center: list[int] = []
    sing_probe: list[int] = []
    seg_counts = np.zeros(nrows, dtype=np.int64)
    add_bg = np.ones(nrows, dtype=np.uint8)
    evals = np.zeros(nrows, dtype=np.int64)

    for r in range(nrows):
        taus, intervals, terminated = _plan(outer[r], inner[r],
                                            float(t_near[r]), p)
        if terminated:
            add_bg[r] = 0
        base = len(tau_vals)
        col = 0
        pos = 0
        for n, enter, exit_ in intervals:
            q = len(probe_ray)
            probe_ray.append(r)
            probe_enter.append(enter)
            probe_exit.append(exit_)
            if n == 1:
                sing_row.append(r)
                sing_col.append(col)
                sing_center.append(base + pos)
                sing_probe.append(q)
                col += 1
            else:
                ent_row.append(r)
                ent_col.append(col)
                ent_tau.append(base + pos)
                ent_probe.append(q)
                col += 1
                for j in range(n - 1):
                    seg_row.append(r)
                    seg_col.append(col)
                    seg_a.append(base + pos + j)
                    seg_b.append(base + pos + j + 1)
                    col += 1
                ext_row.append(r)
                ext_col.append(col)
                ext_tau.append(base + pos + n - 1)
                ext_probe.append(q)
                col += 1
            pos += n
        tau_vals.extend(taus)
        tau_ray.extend([r] * len(taus))
        seg_counts[r] = col
        evals[r] = len(taus) + 2 * len(intervals)

    P = len(tau_vals)
    Q = len(probe_ray)
    ai = np.asarray

    def flat(kind_lists, offsets):
        return np.concatenate([ai(lst, dtype=np.int64) + off
                               for lst, off in zip(kind_lists, offsets)])

    # enter probes live at P + q, exit probes at P + Q + q in flat order
    row = flat((seg_row, ent_row, ext_row, sing_row), (0, 0, 0, 0))
    col = flat((seg_col, ent_col, ext_col, sing_col), (0, 0, 0, 0))
    end_a = flat((seg_a, ent_probe, ext_tau, sing_probe), (0, P, 0, P))
    end_b = flat((seg_b, ent_tau, ext_probe, sing_probe), (0, 0, P + Q, P + Q))
    color_src = flat((seg_a, ent_tau, ext_tau, sing_center), (0, 0, 0, 0))
    return BandStructure(
        tau_ray=ai(tau_ray, dtype=np.int64),
        tau_vals=ai(tau_vals, dtype=np.float64),
        probe_ray=ai(probe_ray, dtype=np.int64),
        probe_enter=ai(probe_enter, dtype=np.float64),
        probe_exit=ai(probe_exit, dtype=np.float64),
        row=row, col=col, end_a=end_a, end_b=end_b, color_src=color_src,
        seg_counts=seg_counts, add_bg=add_bg, evals=evals,
    )


def padded_segments(st: BandStructure, f, s, c):
    """Padded per-ray (alphas, colors) from channel samples in flat order."""
    nrows = len(st.seg_counts)
    width = max(int(st.seg_counts.max()), 1) if nrows else 1
    alphas = np.zeros((nrows, width))
    colors = np.zeros((nrows, width, 3))
    if len(st.row):
        alphas[st.row, st.col] = alpha_interval(f[st.end_a], s[st.end_a],
                                                f[st.end_b], s[st.end_b])
        colors[st.row, st.col] = c[st.color_src]
    return alphas, colors


def render_band(scene, bvhs: ShellBvhs, cam, p: SamplingParams | None = None,
                background=(0.0, 0.0, 0.0), workers: int = 1) -> RenderOutput:
    """Render through the shell, evaluating the field only inside it.

    Every interval absorbs over its full [enter, exit] extent: the field is
    probed at both interval endpoints, and the margins before the first and
    after the last sample contribute segments alongside the consecutive-
    sample segments, so a surface crossing can never slip between the exit
    and the last sample unnoticed.  An interval narrower than w_s contributes
    a single segment whose opacity comes from the endpoint probes, colored by
    its center sample.  Either way an n-sample interval costs n + 2 field
    evaluations.  Rays that end inside the inner mesh composite no
    background.  samples_per_ray counts field evaluations.
    """
    if p is None:
        p = SamplingParams()
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    bundle = generate_rays(cam)
    n_rays = len(bundle)

    image = np.zeros((n_rays, 3))
    trans = np.ones(n_rays)
    counts = np.zeros(n_rays, dtype=np.int64)

    def run_chunk(lo, hi):
        idx = np.arange(lo, hi)
        origins = bundle.origins[idx]
        dirs = bundle.dirs[idx]
        st = band_structure(bvhs, origins, dirs,
                            bundle.t_near[idx], bundle.t_far[idx], p)
        if st.n_points:
            batch = scene.eval_batch(st.points(origins, dirs))
            alphas, colors = padded_segments(st, batch.f, batch.s, batch.c)
        else:
            alphas = np.zeros((len(idx), 1))
            colors = np.zeros((len(idx), 1, 3))
        color, t_end, _ = kernels.composite_padded(alphas, colors,
                                                   st.seg_counts,
                                                   bg, st.add_bg, 0.0)
        image[idx] = color
        trans[idx] = t_end
        counts[idx] = st.evals

    chunks = [(lo, min(lo + _RAY_CHUNK, n_rays))
              for lo in range(0, n_rays, _RAY_CHUNK)]
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
