import numpy as np
import shellray.train as T
from shellray.grids import GridLayout, GridField

rng = np.random.default_rng(7)
layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                    np.array([16, 16, 16]))
gf = GridField(layout)
pos = layout.vertex_positions()
rr = np.sqrt((pos ** 2).sum(-1))
gf.channels[..., 0] = rr - 0.5 + 0.05 * rng.standard_normal(rr.shape)
gf.channels[..., 1] = np.log(0.08) + 0.3 * rng.standard_normal(rr.shape)
gf.channels[..., 2:5] = rng.uniform(0.1, 0.9, rr.shape + (3,))
n = rng.standard_normal(rr.shape + (3,))
gf.channels[..., 5:8] = n / np.linalg.norm(n, axis=-1, keepdims=True)

nrays = 8
origins = np.tile([[0.0, 0.0, -2.0]], (nrays, 1)) + 0.1 * rng.standard_normal((nrays, 3))
dirs = rng.standard_normal((nrays, 3)) * 0.2 + [0, 0, 1.0]
dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
batch = T.RayBatch(origins, dirs, np.zeros(nrays), np.full(nrays, np.inf),
                   rng.uniform(0, 1, (nrays, 3)))

for norm in ("l1", "l2"):
    cfg = T.TrainConfig(n_samples=12, color_norm=norm, background=(0.2, 0.1, 0.4))
    total0, parts0, grad = T.loss_and_gradient(gf, batch, cfg, T.TrainMode.FULL_RAY)
    print(norm, "total", total0, "parts", parts0)

    step = 1e-4
    idx = [np.unravel_index(i, gf.channels.shape)
           for i in rng.choice(gf.channels.size, 120, replace=False)]
    worst = 0.0
    nz = 0
    for ix in idx:
        saved = gf.channels[ix]
        gf.channels[ix] = saved + step
        lp = T.loss_and_gradient(gf, batch, cfg, T.TrainMode.FULL_RAY)[0]
        gf.channels[ix] = saved - step
        lm = T.loss_and_gradient(gf, batch, cfg, T.TrainMode.FULL_RAY)[0]
        gf.channels[ix] = saved
        fd = (lp - lm) / (2 * step)
        an = grad[ix]
        if abs(fd) > 1e-10 or abs(an) > 1e-10:
            nz += 1
            rel = abs(fd - an) / max(abs(fd), abs(an))
            if rel > worst:
                worst = rel
                print(f"  worst so far: ch {ix} fd={fd:.8g} an={an:.8g} rel={rel:.3g}")
    print(norm, "nonzero params checked:", nz, "worst rel err:", worst)
