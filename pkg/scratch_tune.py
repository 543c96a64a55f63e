"""Learning-rate sweep on the two-sphere toy task (short runs)."""
import sys
import time
import warnings
import numpy as np

import shellray.train as T
from shellray.grids import GridLayout
from shellray.field import AnalyticScene, Sphere, GridScene
from shellray.render import Camera, render_full, psnr

SPHERES = [
    Sphere((-0.45, 0.0, 0.0), 0.35, 0.005, (0.85, 0.3, 0.2)),
    Sphere((0.45, 0.0, 0.0), 0.35, 0.1, (0.2, 0.45, 0.85)),
]
BG = (0.0, 0.0, 0.0)


def make_views(n_views=16, width=64, height=64, n_samples=512):
    scene = AnalyticScene(SPHERES)
    views = []
    for i in range(n_views):
        ang = 2 * np.pi * i / n_views
        # tilt alternate cameras off the equator for vertical coverage
        el = 0.35 * np.sin(3 * ang)
        pos = 2.3 * np.array([np.sin(ang) * np.cos(el), np.sin(el), -np.cos(ang) * np.cos(el)])
        cam = Camera(position=tuple(pos), look_at=(0, 0, 0), width=width, height=height)
        out = render_full(scene, cam, n_samples=n_samples, background=BG)
        views.append(T.TargetView(cam, out.image))
    return views


def eval_psnr(field, views, n_samples=512):
    scene = GridScene(field)
    vals = []
    for v in views:
        out = render_full(scene, v.camera, n_samples=n_samples, background=BG)
        vals.append(psnr(out.image, v.image))
    return float(np.mean(vals))


def main():
    t0 = time.time()
    views = make_views()
    print(f"targets rendered in {time.time()-t0:.1f}s")
    layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                        np.array([32, 32, 32]))
    rates = [float(a) for a in sys.argv[1:]] or [300.0, 1000.0, 3000.0]
    iters = 400
    for lr in rates:
        cfg = T.TrainConfig(learning_rate=lr, n1=iters, n2=0, background=BG)
        t0 = time.time()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            state, shell = T.train_two_stage(
                views, cfg, layout,
                log_fn=lambda s: print("   ", s), log_every=100)
        dt = time.time() - t0
        p = eval_psnr(state.field, views[:4])
        print(f"lr={lr:8.1f}  {iters} iters in {dt:6.1f}s "
              f"({1000*dt/iters:.0f} ms/iter)  psnr(4 views)={p:.2f} dB")


if __name__ == "__main__":
    main()
