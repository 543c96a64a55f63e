"""Protocol variant: finer stage-1 sampling, wider dilation, longer stage 2."""
import sys, time, warnings
import numpy as np
import shellray.train as T
from shellray.grids import GridLayout
from shellray.shell import ShellParams
from shellray.levelset import EvolutionParams
from shellray.band import build_shell_bvhs
from scratch_exp import make_views, full_psnr, band_psnr

BG = (0.5, 0.5, 0.5)
SHELL = ShellParams(
    beta_e=0.05,
    dilation=EvolutionParams(100, 0.1, 0.6, 0.01),
    erosion=EvolutionParams(100, 0.1, 0.6, 0.0))

t0 = time.time()
views = make_views(BG)
layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                    np.array([32, 32, 32]))
cfg = T.TrainConfig(learning_rate=300.0, n1=2000, n2=1000, background=BG,
                    n_samples=96)
field = T.init_field(layout, kernel_size=0.05)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
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
    print(f"stage1 {t1-t0:.0f}s: full {p_full:.2f} dB; band-before "
          f"{p_band0:.2f} dB ({ms0:.1f} samples)", flush=True)
    for _ in range(cfg.n2):
        batch = T._draw_batch(rays, cfg, state.iteration)
        T.gradient_step(state, batch, cfg, T.TrainMode.NARROW_BAND, bvhs)
    t2 = time.time()
    p_band1, ms1 = band_psnr(state.field, bvhs, views, BG)
print(f"stage2 {t2-t1:.0f}s: band-after {p_band1:.2f} dB")
print(f"delta vs stage1-full: {p_band1-p_full:+.2f} dB  "
      f"outer {len(shell.outer.triangles)} inner {len(shell.inner.triangles)} "
      f"samples {ms1:.1f}  total {time.time()-t0:.0f}s")
