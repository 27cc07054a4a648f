"""Experiment configuration: JSON in, validated dataclasses out.

Every section is a dataclass whose defaults are the resolved values.
Unknown keys, wrong types and out-of-range values raise
:class:`ConfigError` with a dotted path such as ``ttt.window_size``.
"""

from __future__ import annotations

import json
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass

import numpy as np

MODES = ("online", "offline-all-frames", "fixed", "ablation-suite", "theorem-sweep",
         "lemma-check")
REQUIRED_SECTIONS = {
    "online": ("stream", "model"),
    "offline-all-frames": ("stream", "model"),
    "fixed": ("stream", "model"),
    "ablation-suite": ("stream", "model"),
    "theorem-sweep": ("sweep",),
    "lemma-check": (),
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending path."""


def _check(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


@dataclass(frozen=True)
class StreamSection:
    kind: str = "shape-video"
    T: int = 480
    dims: tuple[int, ...] = (16, 16)
    eta: float = 3.0
    regime_times: tuple[int, ...] = (80, 160, 240, 320, 400)
    seed: int | None = None
    target_map: tuple[tuple[float, ...], ...] | None = None
    jump_scale: float = 10.0
    radius: int = 2
    speed: float = 0.5
    pan: float = 0.05
    bg_range: tuple[float, float] = (0.0, 0.95)
    bg_cell: float = 4.0
    noise: float = 0.03
    intensity: float = 1.0

    def validate(self, path):
        from .streamgen import STREAM_KINDS

        _check(self.kind in STREAM_KINDS, f"{path}.kind", f"must be one of {STREAM_KINDS}")
        _check(self.T >= 1, f"{path}.T", "must be >= 1")
        _check(np.isfinite(self.eta) and self.eta >= 0, f"{path}.eta", "must be finite and >= 0")
        _check(all(1 <= t < self.T for t in self.regime_times), f"{path}.regime_times",
               f"entries must lie in [1, {self.T})")
        _check(list(self.regime_times) == sorted(set(self.regime_times)),
               f"{path}.regime_times", "must be strictly increasing")
        want = 2 if self.kind == "shape-video" else 1
        _check(len(self.dims) == want and min(self.dims) >= 1, f"{path}.dims",
               f"must have {want} positive entries for kind {self.kind!r}")
        _check(0 <= self.bg_range[0] <= self.bg_range[1] <= 1, f"{path}.bg_range",
               "must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class TrainSection:
    n: int = 1024
    epochs: int = 60
    lr: float = 0.05
    batch_size: int = 32
    momentum: float = 0.9
    main_weight: float = 1.0
    ssl_weight: float = 1.0
    mask_ratio: float = 0.8
    bg_range: tuple[float, float] = (0.0, 0.3)
    noise: float = 0.03

    def validate(self, path):
        _check(self.n >= 1, f"{path}.n", "must be >= 1")
        _check(self.epochs >= 0, f"{path}.epochs", "must be >= 0")
        _check(self.lr > 0, f"{path}.lr", "must be > 0")
        _check(self.batch_size >= 1, f"{path}.batch_size", "must be >= 1")
        _check(0 <= self.momentum < 1, f"{path}.momentum", "must lie in [0, 1)")
        _check(0 <= self.mask_ratio <= 1, f"{path}.mask_ratio", "must lie in [0, 1]")


@dataclass(frozen=True)
class NeuralSpecSection:
    height: int = 16
    width: int = 16
    patch_size: int = 2
    hidden_dim: int = 16
    activation: str = "tanh"
    template_scale: float = 16.0
    init_scale: float = 0.5
    init_background: float = 0.2

    def validate(self, path):
        _check(self.patch_size >= 1 and self.height % self.patch_size == 0
               and self.width % self.patch_size == 0, f"{path}.patch_size",
               "must divide height and width")
        _check(self.hidden_dim >= 1, f"{path}.hidden_dim", "must be >= 1")
        _check(self.activation == "tanh", f"{path}.activation", "only 'tanh' is supported")
        _check(self.template_scale > 0, f"{path}.template_scale", "must be > 0")


@dataclass(frozen=True)
class QuadSpecSection:
    alpha: float = 1.0
    beta: float = 1.0
    sigma: float = 1.0

    def validate(self, path):
        _check(self.alpha > 0, f"{path}.alpha", "must be > 0")
        _check(self.beta >= 0, f"{path}.beta", "must be >= 0")
        _check(self.sigma >= 0, f"{path}.sigma", "must be >= 0")


@dataclass(frozen=True)
class ModelSection:
    family: str = "neural"
    neural: NeuralSpecSection = field(default_factory=NeuralSpecSection)
    quadratic: QuadSpecSection = field(default_factory=QuadSpecSection)
    train: TrainSection = field(default_factory=TrainSection)

    def validate(self, path):
        _check(self.family in ("neural", "quadratic"), f"{path}.family",
               "must be 'neural' or 'quadratic'")


@dataclass(frozen=True)
class TTTSection:
    window_size: int = 16
    iters_per_frame: int = 1
    batch_size: int | None = 16
    lr: float | None = None
    init_policy: str = "carry-over"
    objective: str = "masked-recon"
    mask_ratio: float = 0.8
    seed: int | None = None
    self_train_lambda: float = 0.9
    self_train_mask_ratio: float = 0.8

    def validate(self, path):
        from .models.objectives import OBJECTIVES
        from .memory import INIT_POLICIES

        _check(self.window_size >= 1, f"{path}.window_size", "must be >= 1")
        _check(self.iters_per_frame >= 0, f"{path}.iters_per_frame", "must be >= 0")
        _check(self.batch_size is None or self.batch_size >= 1, f"{path}.batch_size",
               "must be >= 1 or null")
        _check(self.lr is None or (np.isfinite(self.lr) and self.lr >= 0), f"{path}.lr",
               "must be >= 0 or null")
        _check(self.init_policy in INIT_POLICIES, f"{path}.init_policy",
               f"must be one of {INIT_POLICIES}")
        _check(self.objective in OBJECTIVES, f"{path}.objective", f"must be one of {OBJECTIVES}")
        _check(0 <= self.mask_ratio <= 1, f"{path}.mask_ratio", "must lie in [0, 1]")
        _check(0 <= self.self_train_lambda <= 1, f"{path}.self_train_lambda", "must lie in [0, 1]")
        _check(0 <= self.self_train_mask_ratio <= 1, f"{path}.self_train_mask_ratio",
               "must lie in [0, 1]")


@dataclass(frozen=True)
class OfflineSection:
    iterations: int = 2000
    eval_every: int = 50

    def validate(self, path):
        _check(self.iterations >= 0, f"{path}.iterations", "must be >= 0")
        _check(self.eval_every >= 1, f"{path}.eval_every", "must be >= 1")


@dataclass(frozen=True)
class SweepSection:
    k_grid: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128, 256)
    trials: int = 500
    alpha: float = 1.0
    beta: float = 1.0
    eta: float = 0.02
    sigma: float = 1.0
    d: int = 8
    eval_frames: int = 16
    drift: str = "linear-drift"

    def validate(self, path):
        _check(len(self.k_grid) >= 1 and min(self.k_grid) >= 1, f"{path}.k_grid",
               "must be a nonempty list of integers >= 1")
        _check(self.trials >= 1, f"{path}.trials", "must be >= 1")
        _check(self.alpha > 0, f"{path}.alpha", "must be > 0")
        _check(self.beta >= 0 and self.eta >= 0 and self.sigma >= 0, path,
               "beta, eta and sigma must be >= 0")
        _check(self.d >= 1 and self.eval_frames >= 1, path, "d and eval_frames must be >= 1")
        _check(self.drift in ("linear-drift", "constant"), f"{path}.drift",
               "must be 'linear-drift' or 'constant'")


@dataclass(frozen=True)
class LemmaSection:
    instances: int = 1000
    alpha: float = 1.0
    max_dim: int = 10

    def validate(self, path):
        _check(self.instances >= 1, f"{path}.instances", "must be >= 1")
        _check(self.alpha > 0, f"{path}.alpha", "must be > 0")
        _check(1 <= self.max_dim, f"{path}.max_dim", "must be >= 1")


@dataclass(frozen=True)
class AblationSection:
    smooth_window: int = 3
    k_grid: tuple[int, ...] = ()

    def validate(self, path):
        _check(self.smooth_window >= 1, f"{path}.smooth_window", "must be >= 1")
        _check(all(k >= 1 for k in self.k_grid), f"{path}.k_grid", "entries must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    seed: int = 0
    repeats: int = 1
    output_dir: str = "out"
    stream: StreamSection = field(default_factory=StreamSection)
    model: ModelSection = field(default_factory=ModelSection)
    ttt: TTTSection = field(default_factory=TTTSection)
    offline: OfflineSection = field(default_factory=OfflineSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    lemma: LemmaSection = field(default_factory=LemmaSection)

    def validate(self, path=""):
        _check(self.mode in MODES, "mode", f"must be one of {MODES}")
        _check(self.repeats >= 1, "repeats", "must be >= 1")

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _coerce(value, hint, path):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None:
            _check(type(None) in args, path, "must not be null")
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if is_dataclass(hint):
        _check(isinstance(value, dict), path, "must be an object")
        return _build(hint, value, path)
    if origin is tuple:
        _check(isinstance(value, (list, tuple)), path, "must be a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        _check(len(value) == len(args), path, f"must have exactly {len(args)} entries")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if hint is bool:
        _check(isinstance(value, bool), path, "must be a boolean")
        return value
    if hint is int:
        _check(isinstance(value, int) and not isinstance(value, bool), path, "must be an integer")
        return value
    if hint is float:
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), path,
               "must be a number")
        return float(value)
    if hint is str:
        _check(isinstance(value, str), path, "must be a string")
        return value
    raise ConfigError(f"{path}: unsupported field type {hint!r}")


def _build(cls, data: dict, path: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key")
    kwargs = {k: _coerce(v, hints[k], f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        obj = cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None
    obj.validate(path)
    return obj


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment configuration."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from None
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    _check(isinstance(data, dict), "config", "must be a JSON object")
    _check("mode" in data, "mode", "required key is missing")
    mode = data["mode"]
    _check(mode in MODES, "mode", f"must be one of {MODES}")
    for section in REQUIRED_SECTIONS[mode]:
        _check(section in data, section, f"section is required for mode {mode!r}")
    cfg = _build(ExperimentConfig, data, "")
    if cfg.mode in ("online", "offline-all-frames", "fixed", "ablation-suite"):
        video = cfg.stream.kind == "shape-video"
        neural = cfg.model.family == "neural"
        _check(video == neural, "model.family",
               "the neural model needs a shape-video stream and the quadratic model a latent stream")
        if neural:
            spec = cfg.model.neural
            _check(tuple(cfg.stream.dims) == (spec.height, spec.width), "stream.dims",
                   "must equal (model.neural.height, model.neural.width)")
        elif cfg.stream.target_map is not None:
            d = cfg.stream.dims[0]
            _check(len(cfg.stream.target_map) == d and all(len(r) == d for r in cfg.stream.target_map),
                   "stream.target_map", f"must be a {d}x{d} matrix")
        if cfg.model.family == "quadratic":
            _check(cfg.ttt.objective == "masked-recon", "ttt.objective",
                   "the quadratic model only supports 'masked-recon'")
    return cfg


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)
