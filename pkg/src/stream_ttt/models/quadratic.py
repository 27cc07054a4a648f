"""The quadratic tracking model used for the bias-variance theory.

The main loss at frame ``t`` is ``l_m(theta) = (alpha/2) ||theta - W x_t||^2``.
The self-supervised gradient is the main gradient minus a noise vector
``delta_t`` that depends only on ``(t, noise seed)``, so re-visiting a frame
reproduces its noise and a window of ``k`` distinct frames averages ``k``
independent draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import ModelState


@dataclass(frozen=True)
class QuadModelSpec:
    """``alpha``-strongly convex quadratic with target map ``W``."""

    alpha: float
    W: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("W must be a square matrix")
        if not np.all(np.isfinite(W)):
            raise ValueError("W must be finite")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    def beta(self) -> float:
        """Lipschitz constant of the main gradient in ``x``: ``alpha ||W||_2``."""
        return float(self.alpha * np.linalg.norm(self.W, 2))

    @classmethod
    def isotropic(cls, alpha: float, beta: float, d: int, sigma: float = 0.0) -> "QuadModelSpec":
        """The instance with ``W = (beta / alpha) I`` so that ``beta()`` equals ``beta``."""
        return cls(alpha, (beta / alpha) * np.eye(d), sigma)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "W": self.W.tolist(), "sigma": self.sigma}


def _values(frame) -> np.ndarray:
    return np.asarray(getattr(frame, "values", frame), dtype=float)


def _check(spec: QuadModelSpec, theta, x):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.d,) or x.shape != (spec.d,):
        raise ValueError(f"expected vectors of length {spec.d}")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite input")
    return theta


def quad_main_loss(spec: QuadModelSpec, theta, frame) -> float:
    x = _values(frame)
    theta = _check(spec, theta, x)
    r = theta - spec.W @ x
    return 0.5 * spec.alpha * float(r @ r)


def quad_main_grad(spec: QuadModelSpec, theta, frame) -> np.ndarray:
    """``alpha (theta - W x_t)``."""
    x = _values(frame)
    theta = _check(spec, theta, x)
    return spec.alpha * (theta - spec.W @ x)


def ssl_noise(t: int, noise_seed: int, d: int, sigma: float) -> np.ndarray:
    """``delta_t``: isotropic Gaussian with ``E||delta||^2 = sigma^2``.

    A pure function of ``(t, noise_seed)``.
    """
    if sigma == 0:
        return np.zeros(d)
    rng = np.random.default_rng([noise_seed & (2**64 - 1), int(t), 0xDE17A])
    return (sigma / np.sqrt(d)) * rng.standard_normal(d)


def ssl_noise_block(ts, noise_seed: int, d: int, sigma: float) -> np.ndarray:
    """Stack of :func:`ssl_noise` rows for several frame indices."""
    ts = np.asarray(ts).ravel()
    if sigma == 0:
        return np.zeros((ts.size, d))
    return np.stack([ssl_noise(int(t), noise_seed, d, sigma) for t in ts])


def quad_ssl_grad(spec: QuadModelSpec, theta, frame, frame_noise_seed: int) -> np.ndarray:
    """Self-supervised gradient ``grad l_m - delta_t`` at frame index ``t``."""
    t = int(getattr(frame, "index"))
    delta = ssl_noise(t, frame_noise_seed, spec.d, spec.sigma)
    return quad_main_grad(spec, theta, frame) - delta


@dataclass(frozen=True)
class FrameEval:
    """Per-frame metrics for a batch of predictions (one entry per row)."""

    main_loss: np.ndarray
    ssl_loss: np.ndarray
    pred_error: np.ndarray
    iou: np.ndarray | None
    prediction: np.ndarray


class QuadraticModel:
    """Family adapter: ``f`` is ``theta``; ``g`` and ``h`` are empty."""

    family = "quadratic"
    objectives = ("masked-recon",)

    def __init__(self, spec: QuadModelSpec):
        self.spec = spec

    def spec_dict(self) -> dict:
        return self.spec.to_dict()

    def init_state(self, seed: int) -> ModelState:
        rng = np.random.default_rng([seed & (2**64 - 1), 0x1417])
        return ModelState(rng.standard_normal(self.spec.d), np.zeros(0), np.zeros(0))

    def block_sizes(self) -> tuple[int, int, int]:
        return self.spec.d, 0, 0

    def _residual(self, theta, X):
        return theta[None, :] - X @ self.spec.W.T

    def joint_grads(self, state: ModelState, X, Y, ts, rng, noise_seed,
                    main_weight=1.0, ssl_weight=1.0):
        """Loss and gradients of ``w_m l_m + w_s l_s`` averaged over a batch.

        ``l_s(theta) = l_m(theta) - <delta_t, theta>`` is the potential whose
        gradient is the self-supervised gradient.
        """
        a = self.spec.alpha
        R = state.f[None, :] - Y
        Rs = self._residual(state.f, X)
        delta = ssl_noise_block(ts, noise_seed, self.spec.d, self.spec.sigma)
        lm = 0.5 * a * np.mean(np.sum(R * R, axis=1))
        ls = 0.5 * a * np.mean(np.sum(Rs * Rs, axis=1)) - np.mean(delta @ state.f)
        gm = a * R.mean(0)
        gs = a * Rs.mean(0) - delta.mean(0)
        gf = main_weight * gm + ssl_weight * gs
        return lm, ls, gf, np.zeros(0), np.zeros(0)

    def inner_grads(self, state: ModelState, X, ts, objective, rng, noise_seed, options=None):
        """Window-averaged self-supervised gradient over the rows of ``X``."""
        if objective != "masked-recon":
            raise ValueError(f"objective {objective!r} needs a predictive distribution; "
                             "the quadratic model only supports its noisy self-supervised gradient")
        a = self.spec.alpha
        R = self._residual(state.f, X)
        delta = ssl_noise_block(ts, noise_seed, self.spec.d, self.spec.sigma)
        loss = 0.5 * a * np.mean(np.sum(R * R, axis=1)) - np.mean(delta @ state.f)
        grad = a * R.mean(0) - delta.mean(0)
        return loss, grad, np.zeros(0)

    def evaluate_batch(self, state: ModelState, X, Y, ts, eval_seed, noise_seed) -> FrameEval:
        """Excess risk ``l_m(theta) - l_m(theta*_t)`` per row; the minimum is 0.

        The prediction is ``theta`` itself, repeated per row.
        """
        theta = state.f
        R = self._residual(theta, np.atleast_2d(X))
        lm = 0.5 * self.spec.alpha * np.sum(R * R, axis=1)
        delta = ssl_noise_block(ts, noise_seed, self.spec.d, self.spec.sigma)
        return FrameEval(lm, lm - delta @ theta, lm, None, np.tile(theta, (len(lm), 1)))
