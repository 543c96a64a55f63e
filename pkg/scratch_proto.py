"""Full two-stage protocol with scale-matched shell windows."""
import sys, time, warnings
import numpy as np
import shellray.train as T
from shellray.grids import GridLayout
from shellray.field import GridScene
from shellray.render import Camera, render_full, psnr
from shellray.band import build_shell_bvhs, render_band
from shellray.shell import ShellParams
from shellray.levelset import EvolutionParams
from scratch_exp import make_views, full_psnr, band_psnr

BG = (0.5, 0.5, 0.5)
LR = float(sys.argv[1]) if len(sys.argv) > 1 else 300.0
S0 = float(sys.argv[2]) if len(sys.argv) > 2 else 0.05

SHELL = ShellParams(
    beta_e=0.05,
    dilation=EvolutionParams(50, 0.1, 0.5, 0.01),
    erosion=EvolutionParams(50, 0.1, 0.5, 0.0))

t0 = time.time()
views = make_views(BG)
layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                    np.array([32, 32, 32]))
cfg = T.TrainConfig(learning_rate=LR, n1=2000, n2=500, background=BG)
field = T.init_field(layout, kernel_size=S0)

stage1_psnr = {}
class Hook:
    def __init__(self):
        self.stage1_done = False
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    # run the stages manually to measure between them
    rays = T.collect_rays(views)
    state = T.TrainState(field)
    for _ in range(cfg.n1):
        batch = T._draw_batch(rays, cfg, state.iteration)
        T.gradient_step(state, batch, cfg, T.TrainMode.FULL_RAY)
    t1 = time.time()
    p_full = full_psnr(state.field, views, BG)
    shell = T.field_shell(state.field, SHELL)
    bvhs = build_shell_bvhs(shell)
    p_band0, ms0 = band_psnr(state.field, bvhs, views, BG)
    print(f"stage1 {t1-t0:.0f}s: full {p_full:.2f} dB; band-before-ft "
          f"{p_band0:.2f} dB ({ms0:.1f} samples)", flush=True)
    for _ in range(cfg.n2):
        batch = T._draw_batch(rays, cfg, state.iteration)
        T.gradient_step(state, batch, cfg, T.TrainMode.NARROW_BAND, bvhs)
    t2 = time.time()
    p_band1, ms1 = band_psnr(state.field, bvhs, views, BG)
s = np.exp(state.field.log_s)
near = np.abs(state.field.f) < 0.1
print(f"stage2 {t2-t1:.0f}s: band-after-ft {p_band1:.2f} dB ({ms1:.1f} samples)")
print(f"delta vs stage1-full: {p_band1-p_full:+.2f} dB   "
      f"outer {len(shell.outer.triangles)} inner {len(shell.inner.triangles)}")
print(f"s_near {np.median(s[near]):.3f} s_max {s.max():.2f}  total {time.time()-t0:.0f}s")
T.save_checkpoint("/tmp/proto", state.field, cfg)
