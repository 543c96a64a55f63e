"""Shell windows wide enough for fuzzy media at coarse grids."""
import warnings
import numpy as np
import shellray.train as T
from shellray.field import GridScene
from shellray.render import Camera, render_full, psnr
from shellray.band import build_shell_bvhs, render_band
from shellray.shell import ShellParams
from shellray.levelset import EvolutionParams

field, cfg = T.load_checkpoint("/tmp/stage1")
BG = (0.0, 0.0, 0.0)
cam = Camera(position=(0.0, 0.0, -2.3), look_at=(0, 0, 0), width=64, height=64)
scene = GridScene(field)
full = render_full(scene, cam, n_samples=512, background=BG)

def trial(tag, p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        shell = T.field_shell(field, p)
    bvhs = build_shell_bvhs(shell)
    band = render_band(scene, bvhs, cam, background=BG)
    print(f"{tag}: outer {len(shell.outer.triangles):5d} inner "
          f"{len(shell.inner.triangles):5d}  band-vs-full "
          f"{psnr(band.image, full.image):6.2f} dB  samples {band.mean_samples:6.2f}")

trial("defaults             ", ShellParams())
trial("zeta 0.5             ", ShellParams(
    beta_e=0.05,
    dilation=EvolutionParams(50, 0.1, 0.5, 0.01),
    erosion=EvolutionParams(50, 0.1, 0.5, 0.0)))
trial("zeta 0.5, 200 steps  ", ShellParams(
    beta_e=0.05,
    dilation=EvolutionParams(200, 0.1, 0.5, 0.01),
    erosion=EvolutionParams(200, 0.1, 0.5, 0.0)))
trial("zeta 0.8, 400 steps  ", ShellParams(
    beta_e=0.05,
    dilation=EvolutionParams(400, 0.1, 0.8, 0.01),
    erosion=EvolutionParams(400, 0.1, 0.8, 0.0)))
