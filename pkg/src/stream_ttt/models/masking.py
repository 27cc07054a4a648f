"""Random patch masking.

Positions are patches of ``patch_size x patch_size`` pixels on an image, or
single coordinates of a flat vector (``shape=(d,)``, ``patch_size=1``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def patch_order(shape: tuple[int, ...], patch_size: int) -> np.ndarray:
    """Permutation taking a row-major flat image to patch-major order.

    ``flat[order].reshape(P, p * p)`` lists the pixels of each patch in
    row-major order within the patch.
    """
    if len(shape) == 1:
        if patch_size != 1:
            raise ValueError("flat vectors only support patch_size=1")
        order = np.arange(shape[0])
    else:
        H, W = shape
        p = patch_size
        if H % p or W % p:
            raise ValueError(f"image {H}x{W} is not divisible by patch size {p}")
        grid = np.arange(H * W).reshape(H // p, p, W // p, p)
        order = grid.transpose(0, 2, 1, 3).reshape(-1)
    order.setflags(write=False)
    return order


def n_positions(shape: tuple[int, ...], patch_size: int) -> int:
    return int(np.prod(shape)) // (patch_size * patch_size if len(shape) == 2 else 1)


def random_masks(rng: np.random.Generator, batch: int, n: int, ratio: float) -> np.ndarray:
    """``batch`` independent 0/1 rows, each with ``round(ratio * n)`` ones."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"mask ratio must lie in [0, 1], got {ratio}")
    m = int(round(ratio * n))
    keys = rng.random((batch, n))
    chosen = np.argsort(keys, axis=1, kind="stable")[:, :m]
    masks = np.zeros((batch, n))
    np.put_along_axis(masks, chosen, 1.0, axis=1)
    return masks


@dataclass(frozen=True)
class MaskedView:
    """A frame with a subset of positions hidden.

    ``input_with_mask`` has two rows: the frame with masked pixels zeroed,
    and the pixel-level binary mask channel.
    """

    visible_idx: np.ndarray
    masked_idx: np.ndarray
    masked_values: np.ndarray
    input_with_mask: np.ndarray
    position_mask: np.ndarray
    shape: tuple[int, ...]
    patch_size: int

    @property
    def pixel_mask(self) -> np.ndarray:
        return self.input_with_mask[1]


def view_from_mask(values: np.ndarray, position_mask: np.ndarray, shape: tuple[int, ...],
                   patch_size: int = 1) -> MaskedView:
    """Build a :class:`MaskedView` from an explicit 0/1 position mask."""
    values = np.asarray(values, dtype=float).ravel()
    order = patch_order(tuple(shape), patch_size)
    pos = np.asarray(position_mask, dtype=float)
    width = patch_size * patch_size if len(shape) == 2 else 1
    pix = np.empty_like(values)
    pix[order] = np.repeat(pos, width)
    masked_idx = np.flatnonzero(pos)
    visible_idx = np.flatnonzero(pos == 0)
    patches = values[order].reshape(-1, width)
    return MaskedView(
        visible_idx=visible_idx,
        masked_idx=masked_idx,
        masked_values=patches[masked_idx],
        input_with_mask=np.stack([values * (1.0 - pix), pix]),
        position_mask=pos,
        shape=tuple(shape),
        patch_size=patch_size,
    )


def mask_frame(frame, ratio: float, seed, *, shape: tuple[int, ...] | None = None,
               patch_size: int = 1) -> MaskedView:
    """Mask exactly ``round(ratio * N)`` of the ``N`` positions of a frame.

    ``frame`` may be a :class:`~stream_ttt.streamgen.Frame`, a labeled
    frame, or a bare array. Without ``shape`` the frame is treated as a
    flat vector whose positions are its coordinates.
    """
    values = np.asarray(getattr(frame, "values", frame), dtype=float).ravel()
    shape = (values.size,) if shape is None else tuple(shape)
    n = n_positions(shape, patch_size)
    pos = random_masks(np.random.default_rng(seed), 1, n, ratio)[0]
    return view_from_mask(values, pos, shape, patch_size)
