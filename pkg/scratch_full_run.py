"""Full C9 protocol: 2000 stage-1 + 500 stage-2 steps, PSNR on all views."""
import sys
import time
import warnings
import numpy as np

import shellray.train as T
from shellray.grids import GridLayout
from scratch_tune import make_views, eval_psnr, BG

lr = float(sys.argv[1]) if len(sys.argv) > 1 else 200.0
n1 = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
n2 = int(sys.argv[3]) if len(sys.argv) > 3 else 500

t0 = time.time()
views = make_views()
print(f"targets in {time.time()-t0:.1f}s", flush=True)
layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                    np.array([32, 32, 32]))

cfg1 = T.TrainConfig(learning_rate=lr, n1=n1, n2=0, background=BG)
t0 = time.time()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    state, shell = T.train_two_stage(views, cfg1, layout,
                                     log_fn=print, log_every=250)
t1 = time.time()
p1 = eval_psnr(state.field, views)
print(f"stage1 lr={lr} {n1} iters: {t1-t0:.1f}s  PSNR(16 views) = {p1:.2f} dB", flush=True)

# continue with stage 2 only, reusing the trained field
cfg2 = T.TrainConfig(learning_rate=lr, n1=0, n2=n2, background=BG)
t0 = time.time()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    state2, shell2 = T.train_two_stage(views, cfg2, layout, field=state.field.copy(),
                                       log_fn=print, log_every=100)
t2 = time.time()
p2 = eval_psnr(state2.field, views)
print(f"stage2 {n2} iters: {t2-t0:.1f}s  PSNR = {p2:.2f} dB (delta {p2-p1:+.2f})")
print(f"shell tris: outer {len(shell2.outer.triangles)} inner {len(shell2.inner.triangles)}")
