"""Parameter container shared by both model families."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float).ravel()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ModelState:
    """Encoder ``f``, self-supervised head ``g`` and main head ``h``.

    All arrays are read-only, so a state is a value: updates build a new
    state through :meth:`with_fg`. ``frozen_init`` holds the jointly trained
    ``(f0, g0, h0)`` once :meth:`freeze` has been called.
    """

    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    frozen_init: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        for name in ("f", "g", "h"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.frozen_init is not None:
            object.__setattr__(self, "frozen_init", tuple(_frozen(a) for a in self.frozen_init))

    @property
    def param_count(self) -> int:
        return self.f.size + self.g.size + self.h.size

    def with_fg(self, f: np.ndarray, g: np.ndarray) -> "ModelState":
        """Same heads and snapshot, new encoder and self-supervised head."""
        return ModelState(f, g, self.h, self.frozen_init)

    def freeze(self) -> "ModelState":
        """Record the current parameters as the immutable ``frozen_init``."""
        return ModelState(self.f, self.g, self.h, (self.f, self.g, self.h))

    def initial(self) -> "ModelState":
        """A fresh state at ``frozen_init`` (the reset policy)."""
        if self.frozen_init is None:
            raise ValueError("state has no frozen_init; run joint training first")
        f0, g0, h0 = self.frozen_init
        return ModelState(f0, g0, h0, self.frozen_init)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.f, self.g, self.h])

    def checksum(self) -> str:
        return hashlib.sha256(self.flat().tobytes()).hexdigest()

    def init_checksum(self) -> str:
        if self.frozen_init is None:
            raise ValueError("state has no frozen_init")
        return hashlib.sha256(np.concatenate(self.frozen_init).tobytes()).hexdigest()

    def distance_from_init(self) -> float:
        """``||theta - theta_0||`` over the adapted blocks ``f`` and ``g``."""
        if self.frozen_init is None:
            return 0.0
        f0, g0, _ = self.frozen_init
        return float(np.sqrt(np.sum((self.f - f0) ** 2) + np.sum((self.g - g0) ** 2)))
