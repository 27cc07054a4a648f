"""Run a validated :class:`ExperimentConfig` and write its report bundle."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .models import (NeuralModel, NeuralModelSpec, QuadModelSpec, QuadraticModel, TrainConfig,
                     joint_train, load_checkpoint, save_checkpoint)
from .streamgen import (Stream, StreamSpec, gen_latent_training_set, gen_shape_stills, gen_stream,
                        read_stream, write_stream)
from .theory import lemma_check, optimal_k, sweep_csv, theorem_sweep
from .tttloop import (ABLATION_ROWS, OfflineConfig, RunTask, TTTConfig, ablation_tasks, fmt,
                      fsum_mean, run_tasks, variant_config)


def derive_seed(master: int, *keys: int) -> int:
    """A 63-bit seed that depends only on ``master`` and ``keys``."""
    state = np.random.SeedSequence([master & (2**64 - 1), *keys]).generate_state(1, np.uint64)[0]
    return int(state) >> 1


_STREAM_KEY, _TTT_KEY, _TRAIN_KEY = 1, 2, 3


@dataclass
class ReportBundle:
    """Everything one execution produced."""

    config: dict
    output_dir: Path
    files: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    valid: bool = True

    @property
    def summary_path(self) -> Path:
        return self.output_dir / "summary.json"


# ---------------------------------------------------------------- builders

def build_model(cfg: ExperimentConfig):
    if cfg.model.family == "neural":
        return NeuralModel(NeuralModelSpec(**vars(cfg.model.neural)))
    q = cfg.model.quadratic
    d = cfg.stream.dims[0]
    if cfg.stream.target_map is not None:
        W = np.array(cfg.stream.target_map, dtype=float)
    else:
        W = (q.beta / q.alpha) * np.eye(d)
    return QuadraticModel(QuadModelSpec(q.alpha, W, q.sigma))


def stream_spec(cfg: ExperimentConfig, repeat: int = 0, model=None) -> StreamSpec:
    s = cfg.stream
    seed = s.seed + repeat if s.seed is not None else derive_seed(cfg.seed, _STREAM_KEY, repeat)
    target = None
    if s.kind != "shape-video":
        target = model.spec.W if model is not None else (
            None if s.target_map is None else np.array(s.target_map, dtype=float))
    return StreamSpec(kind=s.kind, T=s.T, dims=s.dims, eta=s.eta, regime_times=s.regime_times,
                      seed=seed, target_map=target, jump_scale=s.jump_scale, radius=s.radius,
                      speed=s.speed, pan=s.pan, bg_range=s.bg_range, bg_cell=s.bg_cell,
                      noise=s.noise, intensity=s.intensity)


def ttt_config(cfg: ExperimentConfig, repeat: int = 0) -> TTTConfig:
    t = cfg.ttt
    seed = t.seed + repeat if t.seed is not None else derive_seed(cfg.seed, _TTT_KEY, repeat)
    return TTTConfig(window_size=t.window_size, iters_per_frame=t.iters_per_frame,
                     batch_size=t.batch_size, lr=t.lr, init_policy=t.init_policy,
                     objective=t.objective, mask_ratio=t.mask_ratio, seed=seed,
                     self_train_lambda=t.self_train_lambda,
                     self_train_mask_ratio=t.self_train_mask_ratio)


def train_model(cfg: ExperimentConfig, model):
    tr = cfg.model.train
    seed = derive_seed(cfg.seed, _TRAIN_KEY)
    if model.family == "neural":
        data = gen_shape_stills(tr.n, model.spec.shape, seed, radius=cfg.stream.radius,
                                bg_range=tr.bg_range, noise=tr.noise,
                                intensity=cfg.stream.intensity)
    else:
        data = gen_latent_training_set(tr.n, model.spec.W, seed)
    tc = TrainConfig(epochs=tr.epochs, lr=tr.lr, batch_size=tr.batch_size, momentum=tr.momentum,
                     main_weight=tr.main_weight, ssl_weight=tr.ssl_weight,
                     mask_ratio=tr.mask_ratio)
    return joint_train(model, data, seed=seed, config=tc)


# ---------------------------------------------------------------- output helpers

def _write(bundle: ReportBundle, name: str, text: str) -> None:
    path = bundle.output_dir / name
    path.write_text(text)
    bundle.files[name] = str(path)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _stderr(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0


def _finite_json(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite_json(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite_json(v) for v in x]
    return x


# ---------------------------------------------------------------- modes

def _streams(cfg, model, stream_file):
    if stream_file is not None:
        return [read_stream(stream_file)]
    return [gen_stream(stream_spec(cfg, r, model)) for r in range(cfg.repeats)]


def _state(cfg, model, init_checkpoint):
    if init_checkpoint is None:
        return train_model(cfg, model)
    loaded_model, state = load_checkpoint(init_checkpoint)
    if loaded_model.family != model.family or loaded_model.block_sizes() != model.block_sizes():
        raise ValueError("checkpoint does not match the configured model")
    return state


def _run_modes(cfg, bundle, jobs, stream_file, init_checkpoint):
    model = build_model(cfg)
    streams = _streams(cfg, model, stream_file)
    state = _state(cfg, model, init_checkpoint)
    save_checkpoint(bundle.output_dir / "init.ckpt", model, state)
    bundle.files["init.ckpt"] = str(bundle.output_dir / "init.ckpt")
    offline = OfflineConfig(cfg.offline.iterations, cfg.offline.eval_every)
    tasks = []
    for r, stream in enumerate(streams):
        tc = ttt_config(cfg, r)
        if cfg.mode == "fixed":
            tc = replace(tc, iters_per_frame=0)
        kind = "offline" if cfg.mode == "offline-all-frames" else "stream"
        tasks.append(RunTask((r,), kind, stream, tc, offline))
    results = run_tasks(tasks, model, state, jobs)
    per_run = []
    for r, (trace, best, ms) in enumerate(results):
        name = "trace.csv" if len(results) == 1 else f"trace_r{r}.csv"
        _write(bundle, name, trace.to_csv())
        s = trace.summary()
        s.update(repeat=r, wall_ms=ms)
        if best is not None:
            s["best_iteration"] = best
        per_run.append(s)
        bundle.valid &= trace.valid
    bundle.summary.update(
        runs=per_run,
        mean_main_loss=fsum_mean(s["mean_main_loss"] for s in per_run),
        mean_pred_error=fsum_mean(s["mean_pred_error"] for s in per_run),
        init_checksum=state.init_checksum(),
    )


def _ablation(cfg, bundle, jobs, stream_file, init_checkpoint):
    model = build_model(cfg)
    streams = _streams(cfg, model, stream_file)
    state = _state(cfg, model, init_checkpoint)
    save_checkpoint(bundle.output_dir / "init.ckpt", model, state)
    bundle.files["init.ckpt"] = str(bundle.output_dir / "init.ckpt")
    offline = OfflineConfig(cfg.offline.iterations, cfg.offline.eval_every)
    tasks = []
    curve_keys = {}
    for r, stream in enumerate(streams):
        base = ttt_config(cfg, r)
        suite = ablation_tasks(stream, base, offline, cfg.ablation.smooth_window,
                               key_prefix=(r,))
        tasks.extend(suite)
        by_config = {(t.kind, t.config): t.key for t in suite if t.stream is stream}
        for k in cfg.ablation.k_grid:
            kc = replace(base, window_size=k, init_policy="carry-over")
            key = by_config.get(("stream", kc))
            if key is None:
                key = (r, f"window k={k}")
                tasks.append(RunTask(key, "stream", stream, kc))
                by_config[("stream", kc)] = key
            curve_keys[(r, k)] = key
    results = dict(zip([t.key for t in tasks], run_tasks(tasks, model, state, jobs)))

    rows = []
    for r in range(len(streams)):
        for name in ABLATION_ROWS:
            trace, best, ms = results[(r, name)]
            s = trace.summary()
            bundle.valid &= trace.valid
            rows.append((r, name, s["mean_pred_error"], s["mean_main_loss"],
                         s.get("mean_iou", float("nan")), -1 if best is None else best,
                         trace.init_checksum))
    _write(bundle, "ablation_runs.csv", _csv(
        ("repeat", "variant", "mean_pred_error", "mean_main_loss", "mean_iou", "best_iteration"),
        [row[:6] for row in rows]))
    table = []
    for name in ABLATION_ROWS:
        errs = [row[2] for row in rows if row[1] == name]
        table.append((name, fsum_mean(errs), _stderr(errs), len(errs)))
    _write(bundle, "ablation.csv", _csv(("variant", "mean_pred_error", "stderr", "repeats"), table))
    summary = {"rows": [{"variant": n, "mean_pred_error": m, "stderr": se} for n, m, se, _ in table],
               "init_checksums": sorted({row[6] for row in rows})}
    if cfg.ablation.k_grid:
        curve = []
        for k in cfg.ablation.k_grid:
            errs = [results[curve_keys[(r, k)]][0].summary()["mean_pred_error"]
                    for r in range(len(streams))]
            curve.append((k, fsum_mean(errs), _stderr(errs), len(errs)))
        _write(bundle, "window_curve.csv",
               _csv(("k", "mean_pred_error", "stderr", "repeats"), curve))
        summary["window_curve"] = [{"k": k, "mean_pred_error": m, "stderr": se}
                                   for k, m, se, _ in curve]
    online = next(m for n, m, _, _ in table if n == "Online TTT-MAE")
    summary.update(mean_pred_error=online,
                   mean_main_loss=fsum_mean(row[3] for row in rows if row[1] == "Online TTT-MAE"))
    bundle.summary.update(summary)


def _sweep(cfg, bundle, jobs):
    s = cfg.sweep
    reports = theorem_sweep(s.alpha, s.beta, s.eta, s.sigma, s.k_grid, s.trials, d=s.d,
                            eval_frames=s.eval_frames, seed=cfg.seed, drift=s.drift, jobs=jobs)
    _write(bundle, "sweep.csv", sweep_csv(reports))
    measured = [r.measured_mean for r in reports]
    oracle = [r.oracle_expectation for r in reports]
    grid = list(s.k_grid)
    ok = optimal_k(s.alpha, s.beta, s.eta, s.sigma)
    k_meas = grid[int(np.argmin(measured))]
    bundle.summary.update(
        measured_argmin=k_meas,
        oracle_argmin=grid[int(np.argmin(oracle))],
        optimal_k_continuous=ok.continuous,
        optimal_k_integer=ok.integer,
        bound_dominated=all(r.measured_mean <= r.bound + 3 * r.measured_stderr for r in reports),
        oracle_within_3se=all(abs(r.measured_mean - r.oracle_expectation) <= 3 * r.measured_stderr
                              for r in reports),
        cross_term_within_3se=all(abs(r.cross_term_mean) <= 3 * r.cross_term_stderr
                                  for r in reports),
        cross_terms=[{"k": r.k, "mean": r.cross_term_mean, "stderr": r.cross_term_stderr}
                     for r in reports],
        mean_pred_error=min(measured),
    )
    bundle.valid &= all(math.isfinite(v) for v in measured)


def _lemma(cfg, bundle):
    s = cfg.lemma
    res = lemma_check(s.instances, s.alpha, s.max_dim, seed=cfg.seed)
    _write(bundle, "lemma.csv", _csv(("instance", "gap", "bound", "holds"),
                                     [(i, r.gap, r.bound, int(r.holds))
                                      for i, r in enumerate(res.results)]))
    bundle.summary.update(instances=res.instances, holding=res.holding,
                          max_gap_ratio=res.max_ratio, isotropic_gap=res.isotropic_gap,
                          isotropic_bound=res.isotropic_bound,
                          isotropic_error=res.isotropic_error)
    bundle.valid &= res.holding == res.instances


def execute(cfg: ExperimentConfig, output_dir: str | os.PathLike | None = None, jobs: int = 1,
            stream_file=None, init_checkpoint=None) -> ReportBundle:
    """Run the configured mode, write CSVs and ``summary.json``, return the bundle.

    Failures inside a run mark the bundle invalid; a partial bundle is
    still written so the diagnostic is inspectable.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(config=cfg.to_dict(), output_dir=out)
    t0 = time.perf_counter()
    error = None
    try:
        if cfg.mode in ("online", "fixed", "offline-all-frames"):
            _run_modes(cfg, bundle, jobs, stream_file, init_checkpoint)
        elif cfg.mode == "ablation-suite":
            _ablation(cfg, bundle, jobs, stream_file, init_checkpoint)
        elif cfg.mode == "theorem-sweep":
            _sweep(cfg, bundle, jobs)
        else:
            _lemma(cfg, bundle)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        bundle.valid = False
        error = f"{type(exc).__name__}: {exc}"
    wall_ms = (time.perf_counter() - t0) * 1000.0
    summary = {
        "mode": cfg.mode,
        "config": bundle.config,
        "valid": bundle.valid,
        "wall_ms": wall_ms,
        "environment": {"version": __version__, "seed": cfg.seed, "wall_time_s": wall_ms / 1000,
                        "python": platform.python_version(), "numpy": np.__version__,
                        "jobs": jobs},
    }
    if error:
        summary["error"] = error
    summary.update(bundle.summary)
    summary["files"] = dict(sorted(bundle.files.items()))
    bundle.summary = summary
    bundle.summary_path.write_text(json.dumps(_finite_json(summary), indent=2, sort_keys=True))
    return bundle


# ---------------------------------------------------------------- figures

def report_figures(bundle_dir) -> dict[str, str]:
    """Write plot-ready ``k_curve.csv`` and/or ``ablation_bars.csv`` next to a bundle."""
    bundle_dir = Path(bundle_dir)
    summary_path = bundle_dir / "summary.json"
    if not summary_path.exists():
        raise FileNotFoundError(f"no summary.json in {bundle_dir}")
    summary = json.loads(summary_path.read_text())
    if not summary.get("valid", False):
        raise ValueError(f"bundle in {bundle_dir} is flagged invalid")
    files = summary.get("files", {})
    out = {}
    if "sweep.csv" in files:
        with open(bundle_dir / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        text = _csv(("k", "measured_mean", "measured_stderr", "oracle", "bound"),
                    [(r["k"], r["measured_mean"], r["measured_stderr"], r["oracle"], r["bound"])
                     for r in rows])
        (bundle_dir / "k_curve.csv").write_text(text)
        out["k_curve.csv"] = str(bundle_dir / "k_curve.csv")
    if "window_curve.csv" in files:
        with open(bundle_dir / "window_curve.csv") as fh:
            rows = list(csv.DictReader(fh))
        text = _csv(("k", "mean_pred_error", "stderr"),
                    [(r["k"], r["mean_pred_error"], r["stderr"]) for r in rows])
        (bundle_dir / "k_curve.csv").write_text(text)
        out["k_curve.csv"] = str(bundle_dir / "k_curve.csv")
    if "ablation.csv" in files:
        with open(bundle_dir / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        text = _csv(("variant", "mean_pred_error", "stderr"),
                    [(r["variant"], r["mean_pred_error"], r["stderr"]) for r in rows])
        (bundle_dir / "ablation_bars.csv").write_text(text)
        out["ablation_bars.csv"] = str(bundle_dir / "ablation_bars.csv")
    if not out:
        raise ValueError(f"bundle in {bundle_dir} has no curve or ablation data to plot")
    return out
