"""Inner (label-free) objectives used at test time.

* ``masked-recon``: reconstruct masked patches; updates ``f`` and ``g``.
* ``entropy``: mean binary entropy of the per-pixel prediction on the
  unmasked frame; updates ``f`` only.
* ``self-train``: confident per-pixel pseudo-labels from the unmasked
  frame become cross-entropy targets for a heavily masked copy; updates
  ``f`` only. Pseudo-labels are treated as constants.

The main head ``h`` never receives an update from any of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .masking import random_masks
from .neural import (Params, backward_patches, bce_loss_grad, forward_patches, pack,
                     recon_loss_grad, sigmoid, to_patches)

OBJECTIVES = ("masked-recon", "entropy", "self-train")


@dataclass(frozen=True)
class SelfTrainConfig:
    """Confidence threshold ``lam`` (strict) and mask ratio of the student input."""

    lam: float = 0.9
    mask_ratio: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError(f"mask_ratio must lie in [0, 1], got {self.mask_ratio}")


@dataclass(frozen=True)
class InnerOptions:
    mask_ratio: float = 0.8
    self_train: SelfTrainConfig = field(default_factory=SelfTrainConfig)


def _require_neural(model):
    if getattr(model, "family", None) != "neural":
        raise ValueError("entropy and self-train objectives need the neural model "
                         "(they require a predictive distribution)")


def _zero_like(p: Params) -> Params:
    return Params(*(np.zeros_like(v) for v in vars(p).values()))


def _only_f(g: Params) -> Params:
    return Params(g.template, g.A, g.a, g.b, np.zeros_like(g.G), np.zeros_like(g.gb),
                  np.zeros_like(g.Hm), np.zeros_like(g.hb))


def _only_fg(g: Params) -> Params:
    return Params(g.template, g.A, g.a, g.b, g.G, g.gb, np.zeros_like(g.Hm), np.zeros_like(g.hb))


def recon_objective(model, state, X, M):
    """Masked reconstruction loss on images ``X`` with position masks ``M``."""
    spec = model.spec
    p = model.params(state)
    c = forward_patches(spec, p, to_patches(spec, np.atleast_2d(X)), np.atleast_2d(M))
    loss, dR = recon_loss_grad(c)
    return loss, _only_fg(backward_patches(spec, p, c, dR, None))


def entropy_objective(model, state, X):
    """Mean per-pixel binary entropy of the unmasked prediction."""
    _require_neural(model)
    spec = model.spec
    p = model.params(state)
    Xp = to_patches(spec, np.atleast_2d(X))
    c = forward_patches(spec, p, Xp, np.zeros(Xp.shape[:2]))
    L = c.L
    q = sigmoid(L)
    ent = q * np.logaddexp(0.0, -L) + (1.0 - q) * np.logaddexp(0.0, L)
    loss = float(np.mean(ent))
    dL = -L * q * (1.0 - q) / L.size
    return loss, _only_f(backward_patches(spec, p, c, None, dL))


def pseudo_labels(model, state, X, lam: float):
    """Hard labels ``p > 1/2`` and the mask of pixels with ``max(p, 1 - p) > lam``."""
    _require_neural(model)
    q = sigmoid(model.logits(state, X))
    return (q > 0.5).astype(float), (np.maximum(q, 1.0 - q) > lam).astype(float)


def self_train_objective(model, state, X, M, targets, keep):
    """Cross-entropy on kept pixels of a masked copy, averaged per element."""
    _require_neural(model)
    spec = model.spec
    p = model.params(state)
    Xp = to_patches(spec, np.atleast_2d(X))
    c = forward_patches(spec, p, Xp, np.atleast_2d(M))
    Yp = to_patches(spec, np.atleast_2d(targets))
    Kp = to_patches(spec, np.atleast_2d(keep))
    B = Xp.shape[0]
    counts = Kp.sum((-2, -1))
    if not np.any(counts):
        return 0.0, _zero_like(p)
    denom = np.where(counts > 0, counts, 1.0)[:, None, None] * B
    per_pixel = (np.logaddexp(0.0, c.L) - Yp * c.L) * Kp
    loss = float(np.sum(per_pixel / denom))
    dL = (sigmoid(c.L) - Yp) * Kp / denom
    return loss, _only_f(backward_patches(spec, p, c, None, dL))


def batch_inner_objective(model, state, X, objective: str, rng: np.random.Generator,
                          options: InnerOptions | None = None):
    """Inner objective averaged over the rows of ``X`` with fresh masks per row.

    Returns ``(loss, (grad_f, grad_g, grad_h))``; ``grad_h`` is always zero.
    """
    options = options or InnerOptions()
    X = np.atleast_2d(X)
    n = model.spec.n_patches
    if objective == "masked-recon":
        M = random_masks(rng, len(X), n, options.mask_ratio)
        loss, grads = recon_objective(model, state, X, M)
    elif objective == "entropy":
        loss, grads = entropy_objective(model, state, X)
    elif objective == "self-train":
        cfg = options.self_train
        targets, keep = pseudo_labels(model, state, X, cfg.lam)
        M = random_masks(rng, len(X), n, cfg.mask_ratio)
        loss, grads = self_train_objective(model, state, X, M, targets, keep)
    else:
        raise ValueError(f"unknown inner objective {objective!r}; expected one of {OBJECTIVES}")
    return loss, pack(grads)


def inner_objective_grad(kind: str, model, state, frame, seed,
                         self_train: SelfTrainConfig | None = None, mask_ratio: float = 0.8):
    """Gradients ``(grad_f, grad_g)`` of one inner objective on a single frame.

    ``seed`` drives the masking. For the quadratic model only
    ``masked-recon`` (its noisy self-supervised gradient) is available and
    ``seed`` is the noise seed of the stream.
    """
    values = np.asarray(getattr(frame, "values", frame), dtype=float)
    if getattr(model, "family", None) == "quadratic":
        t = int(getattr(frame, "index", 1))
        _, gf, gg = model.inner_grads(state, values[None, :], [t], kind, None, seed)
        return gf, gg
    if kind not in OBJECTIVES:
        raise ValueError(f"unknown inner objective {kind!r}; expected one of {OBJECTIVES}")
    options = InnerOptions(mask_ratio, self_train or SelfTrainConfig())
    _, (gf, gg, _) = batch_inner_objective(model, state, values[None, :], kind,
                                           np.random.default_rng(seed), options)
    return gf, gg
