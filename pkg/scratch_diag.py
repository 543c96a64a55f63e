"""Diagnose the band-vs-full gap on the trained stage-1 field."""
import warnings
import numpy as np

import shellray.train as T
from shellray.field import GridScene
from shellray.render import Camera, render_full, psnr, generate_rays
from shellray.band import build_shell_bvhs, render_band, band_structure, SamplingParams
from shellray.grids import CH_F, CH_LOG_S

field, cfg = T.load_checkpoint("/tmp/stage1")
BG = (0.0, 0.0, 0.0)

# channel statistics
f = field.f
s = np.exp(field.log_s)
print(f"f:  min {f.min():.3f} max {f.max():.3f}")
print(f"s:  min {s.min():.4f} med {np.median(s):.4f} max {s.max():.4f}")
# where is s large vs small relative to surface distance
near = np.abs(f) < 0.1
print(f"s near surface (|f|<0.1): med {np.median(s[near]):.4f}  "
      f"far: med {np.median(s[~near]):.4f}")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    shell = T.field_shell(field)
print(f"outer tris {len(shell.outer.triangles)}  inner tris {len(shell.inner.triangles)}")
bvhs = build_shell_bvhs(shell)

cam = Camera(position=(0.0, 0.0, -2.3), look_at=(0, 0, 0), width=64, height=64)
scene = GridScene(field)
full = render_full(scene, cam, n_samples=512, background=BG)
band = render_band(scene, bvhs, cam, background=BG)
print(f"band vs full PSNR: {psnr(band.image, full.image):.2f} dB")
print(f"mean band samples/ray: {band.mean_samples:.2f}")

bundle = generate_rays(cam)
st = band_structure(bvhs, bundle.origins, bundle.dirs, bundle.t_near,
                    bundle.t_far, SamplingParams())
n_rays = len(bundle.origins)
no_samples = np.sum(st.seg_counts == 0)
terminated = np.sum(st.add_bg == 0)
print(f"rays: {n_rays}  no-sample rays: {no_samples}  terminated: {terminated}")

err = np.abs(band.image - full.image).sum(axis=2)
print(f"per-pixel L1: mean {err.mean():.4f}  max {err.max():.4f}")
# where are the worst pixels?
ys, xs = np.unravel_index(np.argsort(err.ravel())[-8:], err.shape)
for y, x in zip(ys, xs):
    r = y * 64 + x
    print(f"  pixel ({y:2d},{x:2d}) err {err[y, x]:.3f} "
          f"full {np.round(full.image[y, x], 3)} band {np.round(band.image[y, x], 3)} "
          f"segs {st.seg_counts[r]} add_bg {st.add_bg[r]} "
          f"T_full {full.transmittance[y, x]:.3f}")

# transmittance comparison: density outside the shell shows up as full-T
# lower than band-T on non-terminated rays
bt = band.transmittance.reshape(-1)
ft = full.transmittance.reshape(-1)
live = st.add_bg == 1
print(f"mean T band {bt[live].mean():.4f} vs full {ft.reshape(-1)[live].mean():.4f} on live rays")

# radial look along the central horizontal row through both spheres
row = 32
for col in (8, 16, 24, 32, 40, 48, 56):
    r = row * 64 + col
    print(f"col {col:2d}: segs {st.seg_counts[r]:3d} add_bg {st.add_bg[r]} "
          f"err {err[row, col]:.3f} T_full {ft[r]:.3f} T_band {bt[r]:.3f}")
