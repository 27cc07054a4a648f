"""Checkpoint files: a JSON header line followed by one parameter per line."""

from __future__ import annotations

import json

import numpy as np

from .neural import NeuralModel, NeuralModelSpec
from .quadratic import QuadModelSpec, QuadraticModel
from .state import ModelState


def build_model(family: str, spec: dict):
    """Instantiate a family adapter from its JSON spec."""
    if family == "quadratic":
        return QuadraticModel(QuadModelSpec(spec["alpha"], np.array(spec["W"], dtype=float),
                                            spec.get("sigma", 0.0)))
    if family == "neural":
        return NeuralModel(NeuralModelSpec(**spec))
    raise ValueError(f"unknown model family {family!r}")


def save_checkpoint(path, model, state: ModelState) -> None:
    """Write the frozen initialization of ``state`` (or the state itself)."""
    blocks = state.frozen_init if state.frozen_init is not None else (state.f, state.g, state.h)
    flat = np.concatenate(blocks)
    header = {"family": model.family, "spec": model.spec_dict(),
              "param_count": int(flat.size), "blocks": [int(b.size) for b in blocks]}
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.writelines("%.17g\n" % v for v in flat)


def load_checkpoint(path):
    """Return ``(model, state)`` with ``frozen_init`` set to the stored parameters."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        flat = np.array([float(line) for line in fh if line.strip()])
    if flat.size != header["param_count"]:
        raise ValueError(f"checkpoint declares {header['param_count']} values, found {flat.size}")
    model = build_model(header["family"], header["spec"])
    sizes = model.block_sizes()
    if list(sizes) != header.get("blocks", list(sizes)) or sum(sizes) != flat.size:
        raise ValueError("checkpoint block sizes do not match the model spec")
    f, g, h = np.split(flat, np.cumsum(sizes)[:2])
    return model, ModelState(f, g, h).freeze()
