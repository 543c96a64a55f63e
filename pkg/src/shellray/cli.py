"""Command-line front end.

Subcommands cover the pipeline end to end: dense reference renders, shell
extraction, narrow-band renders, a dense-vs-band comparison report, and
two-stage training.  Every flag can also come from an environment variable
(automatic SHELLRAY_ prefix, e.g. SHELLRAY_RENDER_FULL_SAMPLES) or from a
TOML settings file passed as --config before the subcommand, where top-level
keys apply to every subcommand and [section] tables named after a subcommand
override them.  Precedence is file < environment < flags, and the effective
values of each run are echoed to <out>/run-config.toml.

All outputs are deterministic given the same settings; timing statistics go
to stdout only, never into output files.  Exit codes: 0 success, 2
configuration/validation errors, 3 numerical failures, 4 I/O errors.
"""

from __future__ import annotations

import csv
import functools
import math
import os
import sys
import time

import click
import numpy as np

from .band import SamplingParams, build_shell_bvhs, render_band
from .errors import ConfigError, DomainError, NumericalError
from .field import GridScene, bake_scalar_grids
from .grids import GridLayout
from .levelset import EvolutionParams
from .ppm import read_ppm, write_ppm
from .render import psnr, render_full
from .scenefile import dump_toml, load_scene
from .shell import ShellParams, extract_shell, save_shell, load_shell
from .train import (TargetView, TrainConfig, init_field, save_checkpoint,
                    train_two_stage)

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _exit_codes(fn):
    """Map package exceptions onto the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, DomainError) as exc:
            _fail(str(exc), 2)
        except NumericalError as exc:
            _fail(str(exc), 3)
        except OSError as exc:
            _fail(str(exc), 4)
    return wrapper


def _config_callback(ctx, param, value):
    """Load --config into click's default map (file < env < flags)."""
    if value is None:
        return None
    if not os.path.exists(value):
        _fail(f"config file not found: {value}", 2)
    with open(value, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            _fail(f"{value}: invalid TOML: {exc}", 2)
    commands = ctx.command.commands
    top = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    sections = {k: v for k, v in doc.items() if isinstance(v, dict)}
    unknown = sorted(set(sections) - set(commands))
    if unknown:
        _fail(f"{value}: unknown section(s) {', '.join(map(repr, unknown))}", 2)
    for name, section in sections.items():
        known = {p.name for p in commands[name].params}
        bad = sorted(k for k in section if k.replace("-", "_") not in known)
        if bad:
            _fail(f"{value}: [{name}] has unknown key(s) "
                  f"{', '.join(map(repr, bad))}", 2)
    ctx.default_map = {
        name: {**top, **{k.replace("-", "_"): v
                         for k, v in sections.get(name, {}).items()}}
        for name in commands
    }
    return value


def _common_options(fn):
    for opt in reversed([
        click.option("--scene", "scene_path", required=True,
                     help="Scene description TOML file."),
        click.option("--out", "out_dir", required=True,
                     help="Output directory (created if missing)."),
        click.option("--seed", default=0, show_default=True,
                     help="Seed from which all randomness in the run derives."),
        click.option("--workers", default=None, type=int,
                     help="Render worker threads [default: CPU count]."),
    ]):
        fn = opt(fn)
    return fn


def _grid_res_option(help_text):
    return click.option("--grid-res", default=64, show_default=True,
                        help=help_text)


def _shell_options(fn):
    for opt in reversed([
        click.option("--beta-d", default=1.0, show_default=True,
                     help="Dilation rate scale."),
        click.option("--sigma-min", default=0.01, show_default=True,
                     help="Opacity floor below which dilation stops."),
        click.option("--beta-e", default=0.001, show_default=True,
                     help="Erosion rate scale."),
        click.option("--vmax", default=100.0, show_default=True,
                     help="Erosion speed cap."),
        click.option("--tau-d", default=None, type=float,
                     help="Opacity probe length [default: grid spacing]."),
        click.option("--dilate-steps", default=50, show_default=True),
        click.option("--dilate-dt", default=0.1, show_default=True),
        click.option("--dilate-zeta", default=0.1, show_default=True,
                     help="Dilation window half-width."),
        click.option("--dilate-curv", default=0.01, show_default=True,
                     help="Dilation curvature weight."),
        click.option("--erode-steps", default=50, show_default=True),
        click.option("--erode-dt", default=0.1, show_default=True),
        click.option("--erode-zeta", default=0.05, show_default=True,
                     help="Erosion window half-width."),
        click.option("--erode-curv", default=0.0, show_default=True,
                     help="Erosion curvature weight."),
    ]):
        fn = opt(fn)
    return fn


def _sampling_options(fn):
    for opt in reversed([
        click.option("--delta-s", default=0.01, show_default=True,
                     help="Target narrow-band sample spacing."),
        click.option("--ws", default=0.02, show_default=True,
                     help="Width below which an interval gets one sample."),
        click.option("--nmax", default=16, show_default=True,
                     help="Per-interval sample cap."),
        click.option("--dpmax", default=20, show_default=True,
                     help="Outer-mesh hits processed per ray."),
    ]):
        fn = opt(fn)
    return fn


def _resolve_workers(workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise ConfigError("workers must be a positive integer")
    return workers


def _write_run_config(out_dir):
    """Echo the command's effective parameter values next to its outputs."""
    ctx = click.get_current_context()
    doc = {"command": ctx.command.name}
    doc.update((k, v) for k, v in sorted(ctx.params.items()) if v is not None)
    with open(os.path.join(out_dir, "run-config.toml"), "w") as fh:
        fh.write(dump_toml(doc))


def _shell_params(kw) -> ShellParams:
    return ShellParams(
        beta_d=kw["beta_d"], sigma_min=kw["sigma_min"], beta_e=kw["beta_e"],
        v_max=kw["vmax"], tau_d=kw["tau_d"],
        dilation=EvolutionParams(kw["dilate_steps"], kw["dilate_dt"],
                                 kw["dilate_zeta"], kw["dilate_curv"]),
        erosion=EvolutionParams(kw["erode_steps"], kw["erode_dt"],
                                kw["erode_zeta"], kw["erode_curv"]))


def _sampling_params(kw) -> SamplingParams:
    return SamplingParams(delta_s=kw["delta_s"], w_s=kw["ws"],
                          n_max=kw["nmax"], dp_max=kw["dpmax"])


def _extract(spec, grid_res, shell_kw):
    dom = spec.scene.domain
    f0, s = bake_scalar_grids(spec.scene, dom.lo, dom.extent, grid_res)
    return extract_shell(f0, s, _shell_params(shell_kw))


def _view_name(i: int) -> str:
    return f"view_{i:03d}.ppm"


@click.group(context_settings={"auto_envvar_prefix": "SHELLRAY",
                               "help_option_names": ["-h", "--help"]})
@click.option("--config", is_eager=True, expose_value=False,
              callback=_config_callback,
              help="TOML settings file providing flag defaults "
                   "(top-level keys apply everywhere, [subcommand] "
                   "sections override; flags and environment win).")
def main():
    """Adaptive-shell volume renderer: dense and narrow-band rendering,
    shell extraction, comparison reports, and two-stage grid training."""


@main.command("render-full")
@_common_options
@click.option("--samples", default=256, show_default=True,
              help="Uniform samples per ray.")
@click.option("--tmin", default=None, type=float,
              help="Stop compositing below this transmittance.")
@_exit_codes
def cmd_render_full(scene_path, out_dir, seed, workers, samples, tmin):
    """Render every camera by dense uniform ray sampling."""
    spec = load_scene(scene_path)
    workers = _resolve_workers(workers)
    os.makedirs(out_dir, exist_ok=True)
    _write_run_config(out_dir)
    t0 = time.perf_counter()
    means = []
    for i, cam in enumerate(spec.cameras):
        out = render_full(spec.scene, cam, n_samples=samples,
                          background=spec.background, t_min=tmin,
                          workers=workers)
        write_ppm(os.path.join(out_dir, _view_name(i)), out.image)
        means.append(out.mean_samples)
    wall = time.perf_counter() - t0
    click.echo(f"render-full: {len(spec.cameras)} view(s)  "
               f"mean_samples {float(np.mean(means)):.2f}  wall {wall:.2f}s")


@main.command("extract-shell")
@_common_options
@_grid_res_option("Vertices per axis of the extraction grid.")
@_shell_options
@_exit_codes
def cmd_extract_shell(scene_path, out_dir, seed, workers, grid_res, **shell_kw):
    """Extract the dilated/eroded shell meshes and clamped distance grids."""
    spec = load_scene(scene_path)
    os.makedirs(out_dir, exist_ok=True)
    _write_run_config(out_dir)
    t0 = time.perf_counter()
    shell = _extract(spec, grid_res, shell_kw)
    save_shell(out_dir, shell)
    wall = time.perf_counter() - t0
    if len(shell.outer.vertices) == 0:
        click.echo("warning: no zero level set inside the domain; "
                   "shell is empty", err=True)
    click.echo(f"outer: {len(shell.outer.vertices)} vertices, "
               f"{len(shell.outer.triangles)} triangles")
    click.echo(f"inner: {len(shell.inner.vertices)} vertices, "
               f"{len(shell.inner.triangles)} triangles")
    click.echo(f"extract-shell: wall {wall:.2f}s")


@main.command("render-band")
@_common_options
@_grid_res_option("Vertices per axis of the extraction grid.")
@_shell_options
@_sampling_options
@click.option("--shell", "shell_dir", default=None,
              help="Load a saved shell bundle instead of extracting one.")
@click.option("--reference", "reference_dir", default=None,
              help="Directory of reference PPMs for a PSNR statistic.")
@_exit_codes
def cmd_render_band(scene_path, out_dir, seed, workers, grid_res, shell_dir,
                    reference_dir, **kw):
    """Render every camera by narrow-band sampling inside the shell."""
    spec = load_scene(scene_path)
    workers = _resolve_workers(workers)
    os.makedirs(out_dir, exist_ok=True)
    _write_run_config(out_dir)
    t0 = time.perf_counter()
    shell = load_shell(shell_dir) if shell_dir is not None \
        else _extract(spec, grid_res, kw)
    bvhs = build_shell_bvhs(shell)
    sampling = _sampling_params(kw)
    means, scores = [], []
    for i, cam in enumerate(spec.cameras):
        out = render_band(spec.scene, bvhs, cam, p=sampling,
                          background=spec.background, workers=workers)
        write_ppm(os.path.join(out_dir, _view_name(i)), out.image)
        means.append(out.mean_samples)
        if reference_dir is not None:
            ref = read_ppm(os.path.join(reference_dir, _view_name(i)))
            scores.append(psnr(out.image, ref))
    wall = time.perf_counter() - t0
    stats = (f"render-band: {len(spec.cameras)} view(s)  "
             f"mean_samples {float(np.mean(means)):.2f}  wall {wall:.2f}s")
    if scores:
        stats += f"  psnr_db {float(np.mean(scores)):.2f}"
    click.echo(stats)


@main.command("compare")
@_common_options
@_grid_res_option("Vertices per axis of the extraction grid.")
@_shell_options
@_sampling_options
@click.option("--samples", default=256, show_default=True,
              help="Uniform samples per ray for the dense pass.")
@click.option("--self-test", is_flag=True,
              help="Compare the dense renderer against itself "
                   "(reporting-path check).")
@_exit_codes
def cmd_compare(scene_path, out_dir, seed, workers, grid_res, samples,
                self_test, **kw):
    """Render densely and through the shell; report per-pixel CSV + summary."""
    spec = load_scene(scene_path)
    workers = _resolve_workers(workers)
    os.makedirs(out_dir, exist_ok=True)
    _write_run_config(out_dir)
    t0 = time.perf_counter()
    if not self_test:
        shell = _extract(spec, grid_res, kw)
        bvhs = build_shell_bvhs(shell)
    sampling = _sampling_params(kw)

    rows = []
    full_samples, band_samples, scores = [], [], []
    for i, cam in enumerate(spec.cameras):
        dense = render_full(spec.scene, cam, n_samples=samples,
                            background=spec.background, workers=workers)
        if self_test:
            sparse = dense
        else:
            sparse = render_band(spec.scene, bvhs, cam, p=sampling,
                                 background=spec.background, workers=workers)
        full_samples.append(dense.mean_samples)
        band_samples.append(sparse.mean_samples)
        scores.append(psnr(sparse.image, dense.image))
        err = np.abs(sparse.image - dense.image).sum(axis=2)
        for y in range(cam.height):
            for x in range(cam.width):
                rows.append([i, y, x,
                             *dense.image[y, x].tolist(),
                             *sparse.image[y, x].tolist(),
                             float(err[y, x]),
                             int(dense.samples_per_ray[y, x]),
                             int(sparse.samples_per_ray[y, x])])

    with open(os.path.join(out_dir, "compare.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["view", "y", "x", "full_r", "full_g", "full_b",
                         "band_r", "band_g", "band_b", "abs_err",
                         "samples_full", "samples_band"])
        writer.writerows(rows)

    mean_full = float(np.mean(full_samples))
    mean_band = float(np.mean(band_samples))
    summary = {
        "views": len(spec.cameras),
        "psnr_db": float(np.mean(scores)),
        "mean_samples_full": mean_full,
        "mean_samples_band": mean_band,
        "sample_ratio": mean_full / mean_band if mean_band > 0 else math.inf,
    }
    with open(os.path.join(out_dir, "summary.toml"), "w") as fh:
        fh.write(dump_toml(summary))
    wall = time.perf_counter() - t0
    click.echo(f"compare: psnr_db {summary['psnr_db']:.2f}  "
               f"sample_ratio {summary['sample_ratio']:.2f}  "
               f"({mean_full:.1f} full / {mean_band:.1f} band)  "
               f"wall {wall:.2f}s")


@main.command("train")
@_common_options
@_shell_options
@_sampling_options
@click.option("--samples", default=64, show_default=True,
              help="Uniform samples per ray in full-ray training.")
@click.option("--n1", default=2000, show_default=True,
              help="Full-ray stage iterations.")
@click.option("--n2", default=500, show_default=True,
              help="Narrow-band fine-tuning iterations.")
@click.option("--lr", default=300.0, show_default=True,
              help="Gradient-descent step rate.")
@click.option("--batch-rays", default=1024, show_default=True,
              help="Rays per training step.")
@click.option("--grid-res", default=32, show_default=True,
              help="Vertices per axis of the trainable grid.")
@click.option("--init-kernel-size", default=0.05, show_default=True,
              help="Kernel size of the spherical initialization.")
@click.option("--targets", "targets_dir", default=None,
              help="Directory of target PPMs named like render-full output.")
@click.option("--self-targets", is_flag=True,
              help="Render the targets from the scene before training.")
@click.option("--gen-samples", default=512, show_default=True,
              help="Samples per ray for target generation and evaluation.")
@click.option("--log-every", default=100, show_default=True)
@click.option("--snapshot-every", default=0, show_default=True,
              help="Write a render of camera 0 every N iterations.")
@_exit_codes
def cmd_train(scene_path, out_dir, seed, workers, samples, n1, n2, lr,
              batch_rays, grid_res, init_kernel_size, targets_dir,
              self_targets, gen_samples, log_every, snapshot_every, **kw):
    """Fit a trainable grid to posed target images in two stages.

    Targets either come from --targets (one PPM per scene camera, named
    view_000.ppm, ...) or are rendered from the scene itself with
    --self-targets.  The log reports the training-view PSNR after the
    full-ray stage and again, through the narrow-band renderer, at the end.
    """
    spec = load_scene(scene_path)
    workers = _resolve_workers(workers)
    os.makedirs(out_dir, exist_ok=True)
    _write_run_config(out_dir)
    t0 = time.perf_counter()

    if targets_dir is not None and self_targets:
        raise ConfigError("--targets and --self-targets are exclusive")
    if targets_dir is not None:
        images = [read_ppm(os.path.join(targets_dir, _view_name(i)))
                  for i in range(len(spec.cameras))]
    elif self_targets:
        images = [render_full(spec.scene, cam, n_samples=gen_samples,
                              background=spec.background,
                              workers=workers).image
                  for cam in spec.cameras]
    else:
        raise ConfigError("provide --targets DIR or --self-targets")
    views = [TargetView(cam, img) for cam, img in zip(spec.cameras, images)]

    dom = spec.scene.domain
    layout = GridLayout(dom.lo, dom.extent, np.broadcast_to(grid_res, (3,)))
    cfg = TrainConfig(learning_rate=lr, n1=n1, n2=n2, batch_rays=batch_rays,
                      rng_seed=seed, n_samples=samples,
                      background=spec.background,
                      sampling=_sampling_params(kw))
    field = init_field(layout, kernel_size=init_kernel_size)

    log_path = os.path.join(out_dir, "train.log")
    with open(log_path, "w") as log_fh:
        def log_fn(line):
            log_fh.write(line + "\n")
            click.echo(line)

        def mean_full_psnr(state):
            scene = GridScene(state.field)
            return float(np.mean([
                psnr(render_full(scene, v.camera, n_samples=gen_samples,
                                 background=spec.background,
                                 workers=workers).image, v.image)
                for v in views]))

        def stage1_fn(state):
            if cfg.n2 > 0:
                log_fn(f"stage-1 train-view PSNR {mean_full_psnr(state):.2f} dB")

        def snapshot_fn(state):
            out = render_full(GridScene(state.field), views[0].camera,
                              n_samples=samples,
                              background=spec.background, workers=workers)
            write_ppm(os.path.join(out_dir,
                                   f"snap_{state.iteration - 1:06d}.ppm"),
                      out.image)

        state, shell = train_two_stage(
            views, cfg, layout, field=field,
            shell_params=_shell_params(kw),
            log_fn=log_fn, log_every=log_every,
            snapshot_fn=snapshot_fn if snapshot_every > 0 else None,
            snapshot_every=snapshot_every, stage1_fn=stage1_fn)

        save_checkpoint(os.path.join(out_dir, "final"), state.field, cfg)
        save_shell(os.path.join(out_dir, "shell"), shell)

        if cfg.n2 > 0:
            bvhs = build_shell_bvhs(shell)
            scene = GridScene(state.field)
            final = float(np.mean([
                psnr(render_band(scene, bvhs, v.camera, p=cfg.sampling,
                                 background=spec.background,
                                 workers=workers).image, v.image)
                for v in views]))
            renderer = "narrow-band"
        else:
            final = mean_full_psnr(state)
            renderer = "full-ray"
        log_fn(f"final train-view PSNR {final:.2f} dB ({renderer})")
    wall = time.perf_counter() - t0
    click.echo(f"train: {state.iteration} step(s)  wall {wall:.2f}s")


if __name__ == "__main__":
    main()
