"""Per-phase timing of one stage-1 gradient step."""
import time
import numpy as np
import shellray.train as T
from shellray.grids import GridLayout
from scratch_tune import make_views, BG

views = make_views(n_views=2, n_samples=64)
layout = GridLayout(np.array([-1.0, -1.0, -1.0]), np.array([2.0, 2.0, 2.0]),
                    np.array([32, 32, 32]))
cfg = T.TrainConfig(background=BG)
rays = T.collect_rays(views)
field = T.init_field(layout)
batch = T._draw_batch(rays, cfg, 0)

def timeit(label, fn, n=10):
    fn()
    t0 = time.time()
    for _ in range(n):
        out = fn()
    print(f"{label:28s} {(time.time()-t0)/n*1000:8.2f} ms")
    return out

graph = timeit("full_ray_graph", lambda: T._full_ray_graph(layout, batch, cfg.n_samples))
print("points:", len(graph.pts))
fwd = timeit("render_forward", lambda: T._render_forward(field, graph, cfg.background))
g_ray = np.sign(fwd.rendered - batch.targets) / len(batch)
pg = timeit("color_backward", lambda: T._color_backward(fwd, g_ray))
grad = np.zeros_like(field.channels)
from shellray.backend import kernels
timeit("scatter color grads", lambda: kernels.trilinear_scatter(
    grad, layout.origin, layout.spacing, np.ascontiguousarray(graph.pts), pg))
rng = np.random.default_rng(1)
timeit("reg fwd+bwd", lambda: T._reg_forward_backward(
    field, graph.pts, cfg, T.default_fd_step(layout), np.random.default_rng(1), grad))
timeit("whole loss_and_gradient", lambda: T.loss_and_gradient(field, batch, cfg, T.TrainMode.FULL_RAY))
