"""Per-frame test-time training, its baselines, and the ablation suite."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .memory import InitPolicy, WindowBuffer, sample_positions, select_init
from .models.objectives import OBJECTIVES, InnerOptions, SelfTrainConfig
from .models.state import ModelState
from .parallel import pmap
from .streamgen import Frame, Stream, StreamSpec, gen_stream, shuffle_stream

DEFAULT_LR = {"quadratic": 0.05, "neural": 0.1}

_STEP_TAG = 0x57E9
_EVAL_TAG = 0xE7A1
_OFFLINE_TAG = 0x0FF1


@dataclass(frozen=True)
class TTTConfig:
    """Settings of the inner loop.

    ``batch_size=None`` uses every window frame once per step (the exact
    window average) instead of sampling. ``lr=None`` picks the family
    default from :data:`DEFAULT_LR`.
    """

    window_size: int = 16
    iters_per_frame: int = 1
    batch_size: int | None = 16
    lr: float | None = None
    init_policy: str = "carry-over"
    objective: str = "masked-recon"
    mask_ratio: float = 0.8
    seed: int = 0
    self_train_lambda: float = 0.9
    self_train_mask_ratio: float = 0.8

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError(f"window_size must be >= 1, got {self.window_size}")
        if self.iters_per_frame < 0:
            raise ValueError("iters_per_frame must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 (or None for the full window)")
        if self.lr is not None and not (np.isfinite(self.lr) and self.lr >= 0):
            raise ValueError(f"lr must be finite and >= 0, got {self.lr}")
        InitPolicy(self.init_policy)
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError("mask_ratio must lie in [0, 1]")
        SelfTrainConfig(self.self_train_lambda, self.self_train_mask_ratio)

    def step_size(self, family: str) -> float:
        return DEFAULT_LR[family] if self.lr is None else self.lr

    def inner_options(self) -> InnerOptions:
        return InnerOptions(self.mask_ratio,
                            SelfTrainConfig(self.self_train_lambda, self.self_train_mask_ratio))


@dataclass(frozen=True)
class FrameRecord:
    t: int
    main_loss: float
    ssl_loss: float
    pred_error: float
    params_drift: float
    iou: float | None = None


TRACE_COLUMNS = ("t", "main_loss", "ssl_loss", "pred_error", "params_drift")


def fmt(v) -> str:
    """Fixed 17-significant-digit text so equal floats give equal bytes."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def fsum_mean(values) -> float:
    """Order-independent mean (exactly rounded sum)."""
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


@dataclass
class RunTrace:
    """Per-frame records plus validity information.

    An invalid trace stops at the first non-finite loss; ``diagnostic``
    says where and why.
    """

    records: list[FrameRecord] = field(default_factory=list)
    valid: bool = True
    diagnostic: str = ""
    predictions: np.ndarray | None = None
    init_checksum: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def summary(self) -> dict:
        out = {
            "frames": len(self.records),
            "valid": self.valid,
            "mean_main_loss": fsum_mean(r.main_loss for r in self.records),
            "mean_pred_error": fsum_mean(r.pred_error for r in self.records),
        }
        if self.records and self.records[0].iou is not None:
            out["mean_iou"] = fsum_mean(r.iou for r in self.records)
        if self.diagnostic:
            out["diagnostic"] = self.diagnostic
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([fmt(getattr(r, c)) for c in TRACE_COLUMNS])
        return buf.getvalue()


def _noise_seed(stream: Stream, config: TTTConfig) -> int:
    return stream.spec.seed if stream.spec is not None else config.seed


def _check_state(state: ModelState):
    if state.frozen_init is None:
        raise ValueError("run_stream needs a jointly trained state (frozen_init set)")


def _records(ev, ts, drift) -> list[FrameRecord]:
    out = []
    for i, t in enumerate(ts):
        iou = None if ev.iou is None else float(ev.iou[i])
        out.append(FrameRecord(int(t), float(ev.main_loss[i]), float(ev.ssl_loss[i]),
                               float(ev.pred_error[i]), drift, iou))
    return out


def _finite(ev) -> bool:
    return bool(np.all(np.isfinite(ev.main_loss)) and np.all(np.isfinite(ev.ssl_loss))
                and np.all(np.isfinite(ev.pred_error)))


def run_stream(stream: Stream, model, state: ModelState, config: TTTConfig,
               keep_predictions: bool = False) -> RunTrace:
    """Online TTT over ``stream``, predicting each frame before the next arrives.

    For each frame: push it into the window, pick the starting parameters
    by the init policy, take ``iters_per_frame`` steps on the inner
    objective averaged over a batch drawn from the window, then predict
    with the frozen main head on the unmasked frame.
    """
    _check_state(state)
    lr = config.step_size(model.family)
    options = config.inner_options()
    policy = InitPolicy(config.init_policy)
    noise_seed = _noise_seed(stream, config)
    seed = config.seed & (2**64 - 1)
    buffer = WindowBuffer(config.window_size)
    trace = RunTrace(init_checksum=state.init_checksum())
    preds = []
    current = state.initial()
    for row in range(len(stream)):
        t = row + 1
        buffer.push(Frame(stream.X[row], t))
        current = select_init(policy, current)
        for it in range(config.iters_per_frame):
            rng = np.random.default_rng([seed, t, it, _STEP_TAG])
            if config.batch_size is None:
                pos = range(len(buffer))
            else:
                pos = sample_positions(len(buffer), config.batch_size, rng)
            X, ts = buffer.take(pos)
            loss, gf, gg = model.inner_grads(current, X, ts, config.objective, rng,
                                             noise_seed, options)
            if not (np.isfinite(loss) and np.all(np.isfinite(gf)) and np.all(np.isfinite(gg))):
                trace.valid = False
                trace.diagnostic = f"non-finite inner loss {loss} at t={t}, iteration {it}"
                return _finish(trace, preds, keep_predictions)
            current = current.with_fg(current.f - lr * gf, current.g - lr * gg)
        ev = model.evaluate_batch(current, stream.X[row:row + 1], stream.Y[row:row + 1], [t],
                                  seed, noise_seed)
        if not _finite(ev):
            trace.valid = False
            trace.diagnostic = f"non-finite evaluation at t={t}"
            return _finish(trace, preds, keep_predictions)
        trace.records.extend(_records(ev, [t], current.distance_from_init()))
        if keep_predictions:
            preds.append(ev.prediction[0])
    return _finish(trace, preds, keep_predictions)


def _finish(trace, preds, keep):
    if keep and preds:
        trace.predictions = np.stack(preds)
    return trace


@dataclass(frozen=True)
class OfflineConfig:
    iterations: int = 2000
    eval_every: int = 50

    def __post_init__(self):
        if self.iterations < 0 or self.eval_every < 1:
            raise ValueError("need iterations >= 0 and eval_every >= 1")


@dataclass
class OfflineResult:
    trace: RunTrace
    best_iteration: int
    curve: list[tuple[int, float]]


def run_offline_all_frames(stream: Stream, model, state: ModelState, config: TTTConfig,
                           eval_every: int = 50, iterations: int = 2000,
                           keep_predictions: bool = False) -> OfflineResult:
    """Train on batches drawn from the whole video; keep the best evaluated iterate.

    Iteration 0 (the jointly trained model) is always evaluated, so the
    best metric is never worse than the fixed model's.
    """
    _check_state(state)
    lr = config.step_size(model.family)
    options = config.inner_options()
    noise_seed = _noise_seed(stream, config)
    seed = config.seed & (2**64 - 1)
    T = len(stream)
    ts_all = np.arange(1, T + 1)
    current = state.initial()
    best = None
    curve = []

    def evaluate(it, cur):
        nonlocal best
        ev = model.evaluate_batch(cur, stream.X, stream.Y, ts_all, seed, noise_seed)
        if not _finite(ev):
            return False
        score = fsum_mean(ev.pred_error.tolist())
        curve.append((it, score))
        if best is None or score < best[1]:
            best = (it, score, ev, cur.distance_from_init())
        return True

    ok = evaluate(0, current)
    diagnostic = "" if ok else "non-finite evaluation at iteration 0"
    batch = config.batch_size or T
    for it in range(1, iterations + 1):
        if not ok:
            break
        rng = np.random.default_rng([seed, it, _OFFLINE_TAG])
        pos = rng.integers(0, T, batch)
        loss, gf, gg = model.inner_grads(current, stream.X[pos], pos + 1, config.objective,
                                         rng, noise_seed, options)
        if not (np.isfinite(loss) and np.all(np.isfinite(gf)) and np.all(np.isfinite(gg))):
            ok, diagnostic = False, f"non-finite inner loss at iteration {it}"
            break
        current = current.with_fg(current.f - lr * gf, current.g - lr * gg)
        if it % eval_every == 0:
            ok = evaluate(it, current)
            if not ok:
                diagnostic = f"non-finite evaluation at iteration {it}"
    trace = RunTrace(init_checksum=state.init_checksum(), valid=ok, diagnostic=diagnostic)
    if best is None:
        return OfflineResult(trace, 0, curve)
    it, _, ev, drift = best
    trace.records = _records(ev, ts_all, drift)
    if keep_predictions:
        trace.predictions = ev.prediction
    return OfflineResult(trace, it, curve)


def temporal_smooth(predictions, w: int, threshold: float | None = None) -> np.ndarray:
    """Causal moving average over the last ``w`` predictions.

    Early frames average over what has arrived so far. With ``threshold``
    the result is binarized (``avg > threshold``) for mask predictions.
    """
    if w < 1:
        raise ValueError("smoothing window must be >= 1")
    P = np.asarray(predictions, dtype=float)
    c = np.cumsum(P, axis=0)
    out = c.copy()
    out[w:] = c[w:] - c[:-w]
    counts = np.minimum(np.arange(1, len(P) + 1), w).reshape(-1, *([1] * (P.ndim - 1)))
    out = out / counts
    if w == 1:
        out = P.copy()
    if threshold is not None:
        out = (out > threshold).astype(float)
    return out


# ---------------------------------------------------------------- ablations

VARIANTS = {
    "TTT-MAE No Memory": (1, "reset"),
    "Implicit Memory Only": (1, "carry-over"),
    "Explicit Memory Only": (None, "reset"),
    "Online TTT-MAE": (None, "carry-over"),
}
FIXED_ROW = "MAE Joint Training"
SMOOTH_ROW = "MAE Joint Training + Temporal Smoothing"
OFFLINE_ROW = "Offline MAE All Frames"
SHUFFLED_FIXED_ROW = "MAE Joint Training (Shuffled)"
SHUFFLED_ONLINE_ROW = "Online TTT-MAE (Shuffled)"
ABLATION_ROWS = (FIXED_ROW, SMOOTH_ROW, *VARIANTS, OFFLINE_ROW, SHUFFLED_FIXED_ROW,
                 SHUFFLED_ONLINE_ROW)


def variant_config(base: TTTConfig, name: str) -> TTTConfig:
    """The memory-ablation variant ``name`` derived from ``base``."""
    k, policy = VARIANTS[name]
    return replace(base, window_size=base.window_size if k is None else k, init_policy=policy)


@dataclass(frozen=True)
class RunTask:
    """One independent run; executed by :func:`execute_task`."""

    key: tuple
    kind: str  # "stream" | "offline" | "smooth"
    stream: Stream
    config: TTTConfig
    offline: OfflineConfig | None = None
    smooth_window: int = 1


def execute_task(task: RunTask, model, state: ModelState):
    t0 = time.perf_counter()
    best_iteration = None
    if task.kind == "offline":
        res = run_offline_all_frames(task.stream, model, state, task.config,
                                     task.offline.eval_every, task.offline.iterations)
        trace, best_iteration = res.trace, res.best_iteration
    elif task.kind == "smooth":
        trace = smoothed_fixed_trace(task.stream, model, state, task.config, task.smooth_window)
    else:
        trace = run_stream(task.stream, model, state, task.config)
    return trace, best_iteration, (time.perf_counter() - t0) * 1000.0


def smoothed_fixed_trace(stream: Stream, model, state: ModelState, config: TTTConfig,
                         w: int) -> RunTrace:
    """The fixed model's predictions averaged over a causal window of ``w`` frames."""
    fixed = run_stream(stream, model, state, replace(config, iters_per_frame=0),
                       keep_predictions=True)
    if not fixed.valid:
        return fixed
    smooth = temporal_smooth(fixed.predictions, w, threshold=0.5 if model.family == "neural" else None)
    trace = RunTrace(init_checksum=fixed.init_checksum)
    for r, p, y, x in zip(fixed.records, smooth, stream.Y, stream.X):
        if model.family == "neural":
            truth = y > 0.5
            pred = p > 0.5
            err = float(np.mean(pred != truth))
            union = np.count_nonzero(pred | truth)
            iou = 1.0 if union == 0 else np.count_nonzero(pred & truth) / union
        else:
            err = 0.5 * model.spec.alpha * float(np.sum((p - model.spec.W @ x) ** 2))
            iou = None
        trace.records.append(replace(r, pred_error=err, iou=iou))
    return trace


def ablation_tasks(stream: Stream, base: TTTConfig, offline: OfflineConfig,
                   smooth_window: int = 3, shuffle_seed: int | None = None,
                   key_prefix: tuple = ()) -> list[RunTask]:
    """All runs of one ablation suite on one stream, keyed by row name."""
    shuffled = shuffle_stream(stream, base.seed if shuffle_seed is None else shuffle_seed)
    fixed = replace(base, iters_per_frame=0)
    tasks = [RunTask(key_prefix + (FIXED_ROW,), "stream", stream, fixed),
             RunTask(key_prefix + (SMOOTH_ROW,), "smooth", stream, fixed,
                     smooth_window=smooth_window)]
    for name in VARIANTS:
        tasks.append(RunTask(key_prefix + (name,), "stream", stream, variant_config(base, name)))
    tasks.append(RunTask(key_prefix + (OFFLINE_ROW,), "offline", stream, base, offline))
    tasks.append(RunTask(key_prefix + (SHUFFLED_FIXED_ROW,), "stream", shuffled, fixed))
    tasks.append(RunTask(key_prefix + (SHUFFLED_ONLINE_ROW,), "stream", shuffled,
                         variant_config(base, "Online TTT-MAE")))
    return tasks


@dataclass
class AblationRow:
    variant: str
    summary: dict
    best_iteration: int | None
    init_checksum: str
    wall_ms: float
    trace: RunTrace


def _run_task(args):
    task, model, state = args
    return execute_task(task, model, state)


def run_tasks(tasks: list[RunTask], model, state: ModelState, jobs: int = 1):
    """Execute independent runs, possibly in parallel; results follow task order."""
    return pmap(_run_task, [(t, model, state) for t in tasks], jobs)


def run_ablation_suite(stream_spec: StreamSpec | Stream, model, state: ModelState,
                       base_config: TTTConfig, offline: OfflineConfig = OfflineConfig(),
                       smooth_window: int = 3, jobs: int = 1) -> list[AblationRow]:
    """Fixed model, smoothing, four memory variants, offline, and shuffled reruns.

    Every row starts from the same ``frozen_init`` and uses ``base_config``'s
    seed, so rows differ only in the setting under study. The shuffled rows
    rerun the fixed model and the full online method on a permuted copy of
    the stream.
    """
    stream = stream_spec if isinstance(stream_spec, Stream) else gen_stream(stream_spec)
    tasks = ablation_tasks(stream, base_config, offline, smooth_window)
    results = run_tasks(tasks, model, state, jobs)
    return [AblationRow(t.key[-1], tr.summary(), best, tr.init_checksum, ms, tr)
            for t, (tr, best, ms) in zip(tasks, results)]
