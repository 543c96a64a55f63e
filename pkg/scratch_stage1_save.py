"""Train stage 1 once and checkpoint it for band diagnostics."""
import time, warnings
import numpy as np
import shellray.train as T
from shellray.grids import GridLayout
from scratch_tune import make_views, eval_psnr, BG

t0 = time.time()
views = make_views()
layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                    np.array([32, 32, 32]))
cfg = T.TrainConfig(learning_rate=200.0, n1=2000, n2=0, background=BG)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    state, shell = T.train_two_stage(views, cfg, layout, log_fn=print, log_every=500)
T.save_checkpoint("/tmp/stage1", state.field, cfg)
p1 = eval_psnr(state.field, views)
print(f"saved; full-render PSNR {p1:.2f} dB; {time.time()-t0:.0f}s total")
