"""Erosion depth scaling vs band fidelity on the trained field."""
import warnings
import numpy as np
import shellray.train as T
from shellray.field import GridScene
from shellray.render import Camera, render_full, psnr
from shellray.band import build_shell_bvhs, render_band
from shellray.shell import ShellParams

field, cfg = T.load_checkpoint("/tmp/stage1")
BG = (0.0, 0.0, 0.0)
cam = Camera(position=(0.0, 0.0, -2.3), look_at=(0, 0, 0), width=64, height=64)
scene = GridScene(field)
full = render_full(scene, cam, n_samples=512, background=BG)

for beta_e in (0.001, 0.01, 0.05, 0.2):
    p = ShellParams(beta_e=beta_e)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        shell = T.field_shell(field, p)
    bvhs = build_shell_bvhs(shell)
    band = render_band(scene, bvhs, cam, background=BG)
    print(f"beta_e {beta_e:6.3f}: inner tris {len(shell.inner.triangles):5d} "
          f"band-vs-full {psnr(band.image, full.image):6.2f} dB "
          f"samples {band.mean_samples:6.2f}")
