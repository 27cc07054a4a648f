"""Joint training of the main and self-supervised losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import ModelState


class TrainingDivergedError(RuntimeError):
    """The training objective became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch SGD with heavy-ball momentum on ``w_m l_m + w_s l_s``."""

    epochs: int = 60
    lr: float = 0.05
    batch_size: int = 32
    momentum: float = 0.9
    main_weight: float = 1.0
    ssl_weight: float = 1.0
    mask_ratio: float = 0.8

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not (self.lr > 0 and 0 <= self.momentum < 1):
            raise ValueError("need lr > 0 and 0 <= momentum < 1")


def _batch_grads(model, state, X, Y, ts, rng, seed, cfg):
    kw = {}
    if model.family == "neural":
        kw["mask_ratio"] = cfg.mask_ratio
    return model.joint_grads(state, X, Y, ts, rng, seed, main_weight=cfg.main_weight,
                             ssl_weight=cfg.ssl_weight, **kw)


def joint_objective(model, state: ModelState, train_set, seed: int,
                    config: TrainConfig = TrainConfig()) -> float:
    """Weighted training objective over the whole set (masks drawn from ``seed``)."""
    rng = np.random.default_rng([seed & (2**64 - 1), 0xE7A1])
    ts = np.arange(1, len(train_set) + 1)
    lm, ls, *_ = _batch_grads(model, state, train_set.X, train_set.Y, ts, rng, seed, config)
    return config.main_weight * lm + config.ssl_weight * ls


def joint_train(model, train_set, epochs: int | None = None, lr: float | None = None,
                seed: int = 0, config: TrainConfig | None = None,
                init: ModelState | None = None) -> ModelState:
    """Minimize the mean of ``l_m + l_s`` over ``train_set`` and freeze the result.

    ``epochs`` and ``lr`` override the corresponding fields of ``config``.
    Frame ``i`` of the training set (1-based) uses ``i`` as its index for
    the quadratic model's gradient noise, with ``seed`` as the noise seed.
    """
    cfg = config or TrainConfig()
    if epochs is not None or lr is not None:
        cfg = TrainConfig(**{**vars(cfg),
                             "epochs": cfg.epochs if epochs is None else epochs,
                             "lr": cfg.lr if lr is None else lr})
    n = len(train_set)
    if n < 1:
        raise ValueError("joint training needs at least one example")
    state = init if init is not None else model.init_state(seed)
    rng = np.random.default_rng([seed & (2**64 - 1), 0x7A1])
    X, Y = train_set.X, train_set.Y
    f, g, h = state.f.copy(), state.g.copy(), state.h.copy()
    vf, vg, vh = np.zeros_like(f), np.zeros_like(g), np.zeros_like(h)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            cur = ModelState(f, g, h)
            lm, ls, gf, gg, gh = _batch_grads(model, cur, X[idx], Y[idx], idx + 1, rng, seed, cfg)
            loss = cfg.main_weight * lm + cfg.ssl_weight * ls
            if not np.isfinite(loss) or not np.all(np.isfinite(gf)):
                raise TrainingDivergedError(f"non-finite training loss {loss}")
            vf = cfg.momentum * vf - cfg.lr * gf
            vg = cfg.momentum * vg - cfg.lr * gg
            vh = cfg.momentum * vh - cfg.lr * gh
            f, g, h = f + vf, g + vg, h + vh
    return ModelState(f, g, h).freeze()
