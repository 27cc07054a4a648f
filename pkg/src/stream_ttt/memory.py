"""Explicit memory (a sliding window of recent frames) and init policies."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .models.state import ModelState

INIT_POLICIES = ("carry-over", "reset")


class OutOfOrderError(ValueError):
    """A frame was pushed with an index other than ``last + 1``."""


class EmptyBufferError(ValueError):
    """Sampling was requested from an empty buffer."""


class WindowBuffer:
    """The ``k`` most recent frames, oldest first.

    Frames are stored by value as ``(index, values)`` pairs. A fresh buffer
    accepts any starting index; afterwards indices must increase by one.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._items: deque = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, frame) -> "WindowBuffer":
        index = int(frame.index)
        if self._items and index != self._items[-1][0] + 1:
            raise OutOfOrderError(f"expected frame {self._items[-1][0] + 1}, got {index}")
        values = np.array(frame.values, dtype=float)
        values.setflags(write=False)
        self._items.append((index, values))
        return self

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self._items]

    def values(self) -> np.ndarray:
        """Stacked window contents, shape ``(len, dim)``."""
        return np.stack([v for _, v in self._items])

    def take(self, positions) -> tuple[np.ndarray, np.ndarray]:
        """Values and indices at the given window positions (0 = oldest)."""
        items = [self._items[i] for i in positions]
        return np.stack([v for _, v in items]), np.array([i for i, _ in items])

    def frames(self):
        from .streamgen import Frame

        return [Frame(v, i) for i, v in self._items]


def push(buffer: WindowBuffer, frame) -> WindowBuffer:
    """Append ``frame``, evicting the oldest one when the window is full."""
    return buffer.push(frame)


def sample_positions(n: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """``batch_size`` uniform draws with replacement from ``range(n)``."""
    if n < 1:
        raise EmptyBufferError("cannot sample from an empty buffer")
    return rng.integers(0, n, batch_size)


def sample_batch(buffer: WindowBuffer, batch_size: int, seed):
    """``batch_size`` independent uniform draws (with replacement) from the window.

    ``seed`` may be anything :func:`numpy.random.default_rng` accepts,
    including an existing generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    frames = buffer.frames()
    pos = sample_positions(len(frames), batch_size, rng)
    return [frames[i] for i in pos]


@dataclass(frozen=True)
class InitPolicy:
    """Where each frame's inner optimization starts."""

    kind: str = "carry-over"

    def __post_init__(self):
        if self.kind not in INIT_POLICIES:
            raise ValueError(f"init policy must be one of {INIT_POLICIES}, got {self.kind!r}")


def select_init(policy: InitPolicy | str, previous: ModelState,
                frozen_init: tuple | None = None) -> ModelState:
    """Carry-over keeps ``previous``; reset restarts ``f, g`` from ``frozen_init``.

    The main head is never touched by either policy.
    """
    kind = policy.kind if isinstance(policy, InitPolicy) else InitPolicy(policy).kind
    if kind == "carry-over":
        return previous
    frozen = frozen_init if frozen_init is not None else previous.frozen_init
    if frozen is None:
        raise ValueError("reset needs a frozen initialization")
    f0, g0, _ = frozen
    return ModelState(f0, g0, previous.h, previous.frozen_init)
