"""Anti-fog experiments: background color, init kernel size, step rate."""
import sys
import time
import warnings
import numpy as np

import shellray.train as T
from shellray.grids import GridLayout
from shellray.field import AnalyticScene, Sphere, GridScene
from shellray.render import Camera, render_full, psnr
from shellray.band import build_shell_bvhs, render_band

SPHERES = [
    Sphere((-0.45, 0.0, 0.0), 0.35, 0.005, (0.85, 0.3, 0.2)),
    Sphere((0.45, 0.0, 0.0), 0.35, 0.1, (0.2, 0.45, 0.85)),
]


def make_views(bg, n_views=16, size=64, n_samples=512):
    scene = AnalyticScene(SPHERES)
    views = []
    for i in range(n_views):
        ang = 2 * np.pi * i / n_views
        el = 0.35 * np.sin(3 * ang)
        pos = 2.3 * np.array([np.sin(ang) * np.cos(el), np.sin(el),
                              -np.cos(ang) * np.cos(el)])
        cam = Camera(position=tuple(pos), look_at=(0, 0, 0), width=size, height=size)
        out = render_full(scene, cam, n_samples=n_samples, background=bg)
        views.append(T.TargetView(cam, out.image))
    return views


def full_psnr(field, views, bg, n_samples=512):
    scene = GridScene(field)
    return float(np.mean([psnr(render_full(scene, v.camera, n_samples=n_samples,
                                           background=bg).image, v.image)
                          for v in views]))


def band_psnr(field, bvhs, views, bg):
    scene = GridScene(field)
    vals, samples = [], []
    for v in views:
        out = render_band(scene, bvhs, v.camera, background=bg)
        vals.append(psnr(out.image, v.image))
        samples.append(out.mean_samples)
    return float(np.mean(vals)), float(np.mean(samples))


def run(tag, bg, s0, lr, iters, n_samples=64):
    views = make_views(bg)
    layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                        np.array([32, 32, 32]))
    cfg = T.TrainConfig(learning_rate=lr, n1=iters, n2=0, background=bg,
                        n_samples=n_samples)
    field = T.init_field(layout, kernel_size=s0)
    t0 = time.time()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state, shell = T.train_two_stage(views, cfg, layout, field=field)
        bvhs = build_shell_bvhs(shell)
    fp = full_psnr(state.field, views[:4], bg)
    bp, ms = band_psnr(state.field, bvhs, views[:4], bg)
    s = np.exp(state.field.log_s)
    near = np.abs(state.field.f) < 0.1
    print(f"{tag}: {time.time()-t0:.0f}s  full {fp:.2f} dB  band {bp:.2f} dB  "
          f"samples {ms:.1f}  s_near {np.median(s[near]):.3f} "
          f"s_max {s.max():.2f}  L_c {state.history[-1][1]:.4f}", flush=True)


if __name__ == "__main__":
    which = sys.argv[1:] or ["E1", "E2", "E3"]
    if "E1" in which:
        run("E1 bg=white s0=0.10 lr200", (1.0, 1.0, 1.0), 0.10, 200.0, 600)
    if "E2" in which:
        run("E2 bg=white s0=0.02 lr200", (1.0, 1.0, 1.0), 0.02, 200.0, 600)
    if "E3" in which:
        run("E3 bg=gray  s0=0.05 lr300", (0.5, 0.5, 0.5), 0.05, 300.0, 600)
    if "E4" in which:
        run("E4 bg=black s0=0.02 lr200", (0.0, 0.0, 0.0), 0.02, 200.0, 600)
