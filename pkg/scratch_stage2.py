import warnings
import numpy as np
import shellray.train as T
from shellray.grids import GridLayout, GridField
from shellray.field import GridScene
from shellray.render import Camera, generate_rays, render_full
from shellray.band import build_shell_bvhs, render_band
from shellray.shell import ShellParams

rng = np.random.default_rng(3)
layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                    np.array([24, 24, 24]))
gf = T.init_field(layout, kernel_size=0.05)
gf.channels[..., 2:5] = rng.uniform(0.2, 0.8, gf.channels.shape[:3] + (3,))

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    shell = T.field_shell(gf, ShellParams())
print("shell tris:", len(shell.outer.triangles), len(shell.inner.triangles))
bvhs = build_shell_bvhs(shell)

cam = Camera(position=(0.0, 0.0, -2.2), look_at=(0, 0, 0), width=6, height=6)
bundle = generate_rays(cam)
targets = rng.uniform(0, 1, (36, 3))
batch = T.RayBatch(bundle.origins, bundle.dirs, bundle.t_near, bundle.t_far, targets)

cfg = T.TrainConfig(background=(0.3, 0.2, 0.1))
total0, parts0, grad = T.loss_and_gradient(gf, batch, cfg, T.TrainMode.NARROW_BAND, bvhs)
print("stage2 total", total0, "parts", parts0)

step = 1e-4
nzidx = np.argwhere(np.abs(grad) > 1e-9)
sel = nzidx[rng.choice(len(nzidx), min(60, len(nzidx)), replace=False)]
worst = 0.0
for ix in map(tuple, sel):
    saved = gf.channels[ix]
    gf.channels[ix] = saved + step
    lp = T.loss_and_gradient(gf, batch, cfg, T.TrainMode.NARROW_BAND, bvhs)[0]
    gf.channels[ix] = saved - step
    lm = T.loss_and_gradient(gf, batch, cfg, T.TrainMode.NARROW_BAND, bvhs)[0]
    gf.channels[ix] = saved
    fd = (lp - lm) / (2 * step)
    an = grad[ix]
    rel = abs(fd - an) / max(abs(fd), abs(an), 1e-12)
    worst = max(worst, rel)
print("stage2 worst rel err over", len(sel), "params:", worst)

# forward parity: trainer stage-1 forward vs render_full on raw-color scene
scene = GridScene(gf, clip_colors=False)
cfg2 = T.TrainConfig(n_samples=33, background=(0.3, 0.2, 0.1))
graph = T._full_ray_graph(layout, batch, cfg2.n_samples)
fwd = T._render_forward(gf, graph, cfg2.background)
out = render_full(scene, cam, n_samples=33, background=(0.3, 0.2, 0.1))
print("stage1 forward bitwise:", np.array_equal(fwd.rendered, out.image.reshape(-1, 3)),
      np.array_equal(fwd.t_end, out.transmittance.reshape(-1)))

# stage-2 forward parity vs render_band (band renderer clips colors? it uses scene eval)
fwd2 = T._render_forward(gf, T._band_graph(bvhs, batch, cfg.sampling), cfg.background)
out2 = render_band(scene, bvhs, cam, p=cfg.sampling, background=(0.3, 0.2, 0.1))
print("stage2 forward bitwise:", np.array_equal(fwd2.rendered, out2.image.reshape(-1, 3)))
