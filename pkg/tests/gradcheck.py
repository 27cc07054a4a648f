"""Central finite-difference probes shared by the gradient tests.

A probe picks a random point, a random input and a random unit direction
``v`` over the parameters being checked, then compares ``grad . v`` with
``(L(theta + h v) - L(theta - h v)) / 2h``.
"""

from __future__ import annotations

import numpy as np

from stream_ttt.models import (ModelState, NeuralModel, NeuralModelSpec, QuadModelSpec,
                               neural_losses_and_grads, quad_main_grad, quad_main_loss)
from stream_ttt.models.masking import random_masks, view_from_mask
from stream_ttt.models.objectives import (entropy_objective, pseudo_labels, recon_objective,
                                          self_train_objective)
from stream_ttt.models.neural import pack
from stream_ttt.streamgen import Frame, LabeledFrame

STEP = 1e-5
PROBES = 100


def rel_err(a: float, n: float, floor: float = 1e-8) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def directional(loss, grad, theta, rng, h=STEP):
    """Relative error of one random directional derivative."""
    v = rng.standard_normal(theta.size)
    v /= np.linalg.norm(v)
    num = (loss(theta + h * v) - loss(theta - h * v)) / (2 * h)
    return rel_err(float(grad @ v), num)


def coordinatewise(loss, grad, theta, h=STEP, floor=1e-7):
    """Largest relative error over every coordinate of ``grad``."""
    worst = 0.0
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        num = (loss(theta + e) - loss(theta - e)) / (2 * h)
        worst = max(worst, rel_err(float(grad[i]), num, floor))
    return worst


PROBE_SPEC = NeuralModelSpec(height=8, width=8, patch_size=2, hidden_dim=5)


def _state(model, rng):
    sf, sg, sh = model.block_sizes()
    return ModelState(rng.normal(0, 0.5, sf), rng.normal(0, 0.5, sg), rng.normal(0, 0.5, sh))


def _split(model, flat, which):
    """Rebuild a state from a flat vector holding the blocks named in ``which``."""
    def make(base):
        sizes = dict(zip("fgh", model.block_sizes()))
        parts, i = {}, 0
        for b in "fgh":
            if b in which:
                parts[b] = flat[i:i + sizes[b]]
                i += sizes[b]
            else:
                parts[b] = getattr(base, b)
        return ModelState(parts["f"], parts["g"], parts["h"])
    return make


def _probe_point(rng, model):
    state = _state(model, rng)
    n = model.spec.height * model.spec.width
    X = rng.uniform(0, 1, (2, n))
    Y = (rng.uniform(0, 1, (2, n)) > 0.7).astype(float)
    M = random_masks(rng, 2, model.spec.n_patches, 0.75)
    return state, X, Y, M


def _flat(state, which):
    return np.concatenate([getattr(state, b) for b in which])


def probe_quadratic_main(rng):
    d = int(rng.integers(1, 9))
    spec = QuadModelSpec(rng.uniform(0.2, 3.0), rng.normal(size=(d, d)), 0.0)
    x, theta = rng.normal(size=(2, d))
    return directional(lambda th: quad_main_loss(spec, th, x), quad_main_grad(spec, theta, x),
                       theta, rng)


def probe_quadratic_ssl(rng):
    """The self-supervised gradient against its potential ``l_m - <delta_t, theta>``."""
    from stream_ttt.models import quad_ssl_grad, ssl_noise

    d = int(rng.integers(1, 9))
    spec = QuadModelSpec(rng.uniform(0.2, 3.0), rng.normal(size=(d, d)), rng.uniform(0.1, 2.0))
    x, theta = rng.normal(size=(2, d))
    t, seed = int(rng.integers(1, 1000)), int(rng.integers(0, 2**31))
    delta = ssl_noise(t, seed, d, spec.sigma)
    return directional(lambda th: quad_main_loss(spec, th, x) - delta @ th,
                       quad_ssl_grad(spec, theta, Frame(x, t), seed), theta, rng)


def probe_neural_joint(rng, spec=PROBE_SPEC):
    """``l_m + l_s`` of one labeled frame and one masked view, all three blocks."""
    model = NeuralModel(spec)
    state, X, Y, M = _probe_point(rng, model)
    view = view_from_mask(X[0], M[0], spec.shape, spec.patch_size)
    frame = LabeledFrame(Frame(X[0], 1), Y[0])
    wm, ws = rng.uniform(0.2, 2.0, 2)

    def loss(flat):
        s = _split(model, flat, "fgh")(state)
        ls, lm, _ = neural_losses_and_grads(spec, s, frame, view, main_weight=wm, ssl_weight=ws)
        return wm * lm + ws * ls

    _, _, (gf, gg, gh) = neural_losses_and_grads(spec, state, frame, view,
                                                 main_weight=wm, ssl_weight=ws)
    return directional(loss, np.concatenate([gf, gg, gh]), _flat(state, "fgh"), rng)


def probe_masked_recon(rng, spec=PROBE_SPEC):
    model = NeuralModel(spec)
    state, X, _, M = _probe_point(rng, model)

    def loss(flat):
        return recon_objective(model, _split(model, flat, "fg")(state), X, M)[0]

    _, g = recon_objective(model, state, X, M)
    gf, gg, _ = pack(g)
    return directional(loss, np.concatenate([gf, gg]), _flat(state, "fg"), rng)


def probe_entropy(rng, spec=PROBE_SPEC):
    model = NeuralModel(spec)
    state, X, _, _ = _probe_point(rng, model)

    def loss(flat):
        return entropy_objective(model, _split(model, flat, "f")(state), X)[0]

    gf, _, _ = pack(entropy_objective(model, state, X)[1])
    return directional(loss, gf, state.f.copy(), rng)


def probe_self_train(rng, spec=PROBE_SPEC, lam=0.6):
    """Pseudo-labels, keep mask and student mask are held fixed at the base point."""
    model = NeuralModel(spec)
    state, X, _, M = _probe_point(rng, model)
    targets, keep = pseudo_labels(model, state, X, lam)
    if not keep.any():
        raise AssertionError("probe drew no confident pixel; lower lam")

    def loss(flat):
        return self_train_objective(model, _split(model, flat, "f")(state), X, M, targets, keep)[0]

    gf, _, _ = pack(self_train_objective(model, state, X, M, targets, keep)[1])
    return directional(loss, gf, state.f.copy(), rng)


PROBE_FAMILIES = {
    "quadratic main loss": probe_quadratic_main,
    "quadratic self-supervised gradient": probe_quadratic_ssl,
    "neural joint loss (f, g, h)": probe_neural_joint,
    "inner objective masked-recon": probe_masked_recon,
    "inner objective entropy": probe_entropy,
    "inner objective self-train": probe_self_train,
}


def worst_probe(name: str, probes: int = PROBES, seed: int = 0) -> float:
    rng = np.random.default_rng([seed, len(name)] + [ord(c) for c in name])
    return max(PROBE_FAMILIES[name](rng) for _ in range(probes))
