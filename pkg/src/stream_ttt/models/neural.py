"""A tiny patch network with hand-written backpropagation.

Images are cut into ``p x p`` patches. Each patch is encoded on its own by
one tanh layer that sees the patch's residual from a learned background
template; masked patches are zeroed and flagged by the mask channel:

    U = (x - beta) * (1 - m)          beta = s_T * template
    Z = tanh(U A^T + m a + b)         encoder f = (template, A, a, b)
    R = beta + Z G^T + g_b            self-supervised head g = (G, g_b)
    L = Z H^T + h_b                   main head h = (H, h_b), per-pixel logits

The template lets the encoder and the reconstruction head share a
representation of the scene background, which is exactly what masked
reconstruction can refine at test time without labels. ``s_T``
(``template_scale``) multiplies the template's effective step size so that
it adapts at a rate comparable to the dense weights.

All arrays in this module use patch-major layout ``(batch, P, p*p)``; the
public functions accept and return row-major flat images.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .masking import MaskedView, patch_order, random_masks
from .quadratic import FrameEval
from .state import ModelState

ACTIVATIONS = ("tanh",)


@dataclass(frozen=True)
class NeuralModelSpec:
    """Geometry and width of the patch network."""

    height: int = 16
    width: int = 16
    patch_size: int = 2
    hidden_dim: int = 16
    activation: str = "tanh"
    template_scale: float = 16.0
    init_scale: float = 0.5
    init_background: float = 0.2

    def __post_init__(self):
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError("height and width must be divisible by patch_size")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.hidden_dim < 1 or self.patch_size < 1:
            raise ValueError("hidden_dim and patch_size must be positive")
        if self.template_scale <= 0:
            raise ValueError("template_scale must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_patches(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size

    @property
    def recon_width(self) -> int:
        """Outputs per patch of the reconstruction head (one per pixel)."""
        return self.patch_dim

    @property
    def logit_width(self) -> int:
        """Outputs per patch of the main head (one logit per pixel)."""
        return self.patch_dim

    def block_sizes(self) -> tuple[int, int, int]:
        P, n, D = self.n_patches, self.patch_dim, self.hidden_dim
        return P * n + D * n + 2 * D, n * D + n, n * D + n

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Params:
    """Named views into the three flat parameter blocks."""

    template: np.ndarray
    A: np.ndarray
    a: np.ndarray
    b: np.ndarray
    G: np.ndarray
    gb: np.ndarray
    Hm: np.ndarray
    hb: np.ndarray


def unpack(spec: NeuralModelSpec, f, g, h) -> Params:
    P, n, D = spec.n_patches, spec.patch_dim, spec.hidden_dim
    sf, sg, sh = spec.block_sizes()
    if f.size != sf or g.size != sg or h.size != sh:
        raise ValueError(f"parameter sizes {(f.size, g.size, h.size)} do not match spec {(sf, sg, sh)}")
    i = 0
    template = f[i:i + P * n].reshape(P, n); i += P * n
    A = f[i:i + D * n].reshape(D, n); i += D * n
    a = f[i:i + D]; i += D
    b = f[i:i + D]
    G = g[:n * D].reshape(n, D)
    gb = g[n * D:]
    Hm = h[:n * D].reshape(n, D)
    hb = h[n * D:]
    return Params(template, A, a, b, G, gb, Hm, hb)


def pack(grads: Params) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = np.concatenate([grads.template.ravel(), grads.A.ravel(), grads.a, grads.b])
    g = np.concatenate([grads.G.ravel(), grads.gb])
    h = np.concatenate([grads.Hm.ravel(), grads.hb])
    return f, g, h


def init_state(spec: NeuralModelSpec, seed: int) -> ModelState:
    """Random initialization; the template starts as a flat gray level."""
    rng = np.random.default_rng([seed & (2**64 - 1), 0x0E7])
    P, n, D, s = spec.n_patches, spec.patch_dim, spec.hidden_dim, spec.init_scale
    p = Params(
        template=np.full((P, n), spec.init_background / spec.template_scale),
        A=rng.normal(0, s / np.sqrt(n), (D, n)),
        a=rng.normal(0, s, D),
        b=np.zeros(D),
        G=rng.normal(0, s / np.sqrt(D), (n, D)),
        gb=np.zeros(n),
        Hm=rng.normal(0, s / np.sqrt(D), (n, D)),
        hb=np.zeros(n),
    )
    return ModelState(*pack(p))


@dataclass(frozen=True)
class Cache:
    """Activations kept for the backward pass."""

    X: np.ndarray
    M: np.ndarray
    U: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    L: np.ndarray


def to_patches(spec: NeuralModelSpec, images: np.ndarray) -> np.ndarray:
    order = patch_order(spec.shape, spec.patch_size)
    images = np.asarray(images, dtype=float)
    return images[..., order].reshape(*images.shape[:-1], spec.n_patches, spec.patch_dim)


def from_patches(spec: NeuralModelSpec, patches: np.ndarray) -> np.ndarray:
    order = patch_order(spec.shape, spec.patch_size)
    flat = patches.reshape(*patches.shape[:-2], -1)
    out = np.empty_like(flat)
    out[..., order] = flat
    return out


def forward_patches(spec: NeuralModelSpec, p: Params, X: np.ndarray, M: np.ndarray) -> Cache:
    """Batched forward pass on patch arrays ``X (B, P, n)`` and masks ``M (B, P)``."""
    beta = spec.template_scale * p.template
    U = (X - beta) * (1.0 - M)[..., None]
    Z = np.tanh(U @ p.A.T + M[..., None] * p.a + p.b)
    R = beta + Z @ p.G.T + p.gb
    L = Z @ p.Hm.T + p.hb
    return Cache(X, M, U, Z, R, L)


def backward_patches(spec: NeuralModelSpec, p: Params, c: Cache, dR, dL) -> Params:
    """Gradients of a scalar whose partials w.r.t. ``R`` and ``L`` are ``dR``, ``dL``.

    Either partial may be ``None`` (treated as zero).
    """
    D, n = p.A.shape
    dZ = np.zeros_like(c.Z)
    zeros_nd = np.zeros((n, D))
    if dR is not None:
        gG = np.einsum("bpn,bpd->nd", dR, c.Z)
        ggb = dR.sum((0, 1))
        dZ += dR @ p.G
        dbeta = dR.sum(0)
    else:
        gG, ggb, dbeta = zeros_nd, np.zeros(n), np.zeros_like(p.template)
    if dL is not None:
        gH = np.einsum("bpn,bpd->nd", dL, c.Z)
        ghb = dL.sum((0, 1))
        dZ += dL @ p.Hm
    else:
        gH, ghb = zeros_nd.copy(), np.zeros(n)
    dS = dZ * (1.0 - c.Z ** 2)
    gA = np.einsum("bpd,bpn->dn", dS, c.U)
    ga = np.einsum("bpd,bp->d", dS, c.M)
    gb = dS.sum((0, 1))
    dU = dS @ p.A
    dbeta = dbeta - (dU * (1.0 - c.M)[..., None]).sum(0)
    return Params(spec.template_scale * dbeta, gA, ga, gb, gG, ggb, gH, ghb)


def add_params(x: Params, y: Params) -> Params:
    return Params(*(u + v for u, v in zip(vars(x).values(), vars(y).values())))


def recon_loss_grad(c: Cache):
    """Masked mean squared error per element, averaged over the batch.

    Returns the loss and its partial w.r.t. ``R``. Raises if some element
    has no masked position.
    """
    B = c.X.shape[0]
    mm = np.broadcast_to(c.M[..., None], c.X.shape)
    cnt = mm.sum((-2, -1))
    if np.any(cnt == 0):
        raise ValueError("masked reconstruction needs at least one masked position")
    err = (c.R - c.X) * mm
    loss = float(np.mean((err ** 2).sum((-2, -1)) / cnt))
    dR = 2.0 * err / (cnt[:, None, None] * B)
    return loss, dR


def bce_loss_grad(L: np.ndarray, Y: np.ndarray):
    """Mean per-pixel binary cross-entropy with logits."""
    loss = float(np.mean(np.logaddexp(0.0, L) - Y * L))
    dL = (sigmoid(L) - Y) / Y.size
    return loss, dL


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class NeuralModel:
    """Family adapter for the patch network."""

    family = "neural"
    objectives = ("masked-recon", "entropy", "self-train")

    def __init__(self, spec: NeuralModelSpec):
        self.spec = spec

    def spec_dict(self) -> dict:
        return self.spec.to_dict()

    def init_state(self, seed: int) -> ModelState:
        return init_state(self.spec, seed)

    def block_sizes(self) -> tuple[int, int, int]:
        return self.spec.block_sizes()

    def params(self, state: ModelState) -> Params:
        return unpack(self.spec, state.f, state.g, state.h)

    def joint_grads(self, state: ModelState, X, Y, ts, rng, noise_seed,
                    main_weight=1.0, ssl_weight=1.0, mask_ratio=0.8):
        """Loss and gradients of ``w_m l_m + w_s l_s`` on a batch of images."""
        spec = self.spec
        p = self.params(state)
        Xp, Yp = to_patches(spec, X), to_patches(spec, Y)
        B = Xp.shape[0]
        c0 = forward_patches(spec, p, Xp, np.zeros((B, spec.n_patches)))
        lm, dL = bce_loss_grad(c0.L, Yp)
        grads = backward_patches(spec, p, c0, None, main_weight * dL)
        ls = 0.0
        if ssl_weight != 0:
            M = random_masks(rng, B, spec.n_patches, mask_ratio)
            c1 = forward_patches(spec, p, Xp, M)
            ls, dR = recon_loss_grad(c1)
            grads = add_params(grads, backward_patches(spec, p, c1, ssl_weight * dR, None))
        gf, gg, gh = pack(grads)
        return lm, ls, gf, gg, gh

    def inner_grads(self, state: ModelState, X, ts, objective, rng, noise_seed, options=None):
        """Batch-averaged inner objective and its gradients for ``(f, g)``."""
        from .objectives import batch_inner_objective

        loss, (gf, gg, _) = batch_inner_objective(self, state, X, objective, rng, options)
        return loss, gf, gg

    def logits(self, state: ModelState, X) -> np.ndarray:
        """Per-pixel logits for unmasked images, row-major ``(B, H*W)``."""
        spec = self.spec
        Xp = to_patches(spec, np.atleast_2d(X))
        c = forward_patches(spec, self.params(state), Xp, np.zeros(Xp.shape[:2]))
        return from_patches(spec, c.L)

    def evaluate_batch(self, state: ModelState, X, Y, ts, eval_seed, noise_seed,
                       mask_ratio: float = 0.8) -> FrameEval:
        """Per-frame error rate, IoU, cross-entropy and reconstruction loss.

        The reconstruction mask of row ``i`` depends only on
        ``(eval_seed, ts[i])`` so a frame's metrics do not depend on which
        other frames are evaluated alongside it.
        """
        spec = self.spec
        p = self.params(state)
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        Xp, Yp = to_patches(spec, X), to_patches(spec, Y)
        B = len(X)
        c0 = forward_patches(spec, p, Xp, np.zeros((B, spec.n_patches)))
        lm = np.mean(np.logaddexp(0.0, c0.L) - Yp * c0.L, axis=(1, 2))
        M = np.concatenate([
            random_masks(np.random.default_rng([eval_seed & (2**64 - 1), int(t), 0xE7A]), 1,
                         spec.n_patches, mask_ratio)
            for t in ts])
        c1 = forward_patches(spec, p, Xp, M)
        mm = M[..., None]
        cnt = np.maximum(mm.sum((1, 2)) * spec.patch_dim, 1)
        ls = (((c1.R - Xp) ** 2) * mm).sum((1, 2)) / cnt
        logits = from_patches(spec, c0.L)
        pred = logits > 0
        truth = Y > 0.5
        union = np.count_nonzero(pred | truth, axis=1)
        inter = np.count_nonzero(pred & truth, axis=1)
        iou = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
        err = np.count_nonzero(pred != truth, axis=1) / X.shape[1]
        return FrameEval(lm, ls, err, iou, sigmoid(logits))


def neural_forward(spec: NeuralModelSpec, state: ModelState, masked_view: MaskedView):
    """Reconstruction and logits for one masked view, as flat images.

    The encoder sees the zeroed image and the mask channel. Pass a view
    with ratio 0 to obtain the main-task prediction on the full frame.
    """
    if masked_view.shape != spec.shape or masked_view.patch_size != spec.patch_size:
        raise ValueError(f"view geometry {masked_view.shape}/{masked_view.patch_size} "
                         f"does not match model {spec.shape}/{spec.patch_size}")
    p = unpack(spec, state.f, state.g, state.h)
    zeroed = masked_view.input_with_mask[0]
    Xp = to_patches(spec, zeroed[None, :])
    M = masked_view.position_mask[None, :]
    c = forward_patches(spec, p, Xp, M)
    return from_patches(spec, c.R)[0], from_patches(spec, c.L)[0], c


def neural_losses_and_grads(spec: NeuralModelSpec, state: ModelState, labeled_frame,
                            masked_view: MaskedView, *, main_weight: float = 1.0,
                            ssl_weight: float = 1.0):
    """``(l_s, l_m, (grad_f, grad_g, grad_h))`` for ``w_m l_m + w_s l_s``.

    ``l_s`` is the squared error averaged over masked pixels only. ``l_m``
    is the per-pixel cross-entropy of the prediction on the unmasked frame.
    """
    if ssl_weight != 0 and masked_view.masked_idx.size == 0:
        raise ValueError("masked reconstruction needs at least one masked position")
    p = unpack(spec, state.f, state.g, state.h)
    x = np.asarray(labeled_frame.frame.values, dtype=float)
    y = np.asarray(labeled_frame.label, dtype=float)
    Xp = to_patches(spec, x[None, :])
    Yp = to_patches(spec, y[None, :])
    c1 = forward_patches(spec, p, Xp, masked_view.position_mask[None, :])
    c0 = forward_patches(spec, p, Xp, np.zeros((1, spec.n_patches)))
    lm, dL = bce_loss_grad(c0.L, Yp)
    grads = backward_patches(spec, p, c0, None, main_weight * dL)
    ls = 0.0
    if masked_view.masked_idx.size:
        ls, dR = recon_loss_grad(c1)
        grads = add_params(grads, backward_patches(spec, p, c1, ssl_weight * dR, None))
    return ls, lm, pack(grads)
