import numpy as np
import pytest
from hypothesis import given, strategies as st

from stream_ttt.models.masking import (mask_frame, n_positions, patch_order, random_masks,
                                       view_from_mask)
from stream_ttt.streamgen import Frame


def test_ratio_zero_masks_nothing():
    x = np.arange(10.0)
    v = mask_frame(Frame(x, 1), 0.0, seed=1)
    assert v.masked_idx.size == 0
    np.testing.assert_array_equal(v.input_with_mask[0], x)
    assert not v.pixel_mask.any()


def test_ratio_one_masks_everything():
    v = mask_frame(np.ones(12), 1.0, seed=1)
    assert v.masked_idx.size == 12 and v.visible_idx.size == 0
    assert not v.input_with_mask[0].any()


def test_eighty_percent_of_hundred_patches():
    img = np.random.default_rng(0).random(20 * 20)
    v = mask_frame(img, 0.8, seed=3, shape=(20, 20), patch_size=2)
    assert n_positions((20, 20), 2) == 100
    assert v.masked_idx.size == 80
    assert v.pixel_mask.sum() == 80 * 4


@given(n=st.integers(1, 200), ratio=st.floats(0.0, 1.0), seed=st.integers(0, 10**6))
def test_partition_and_count(n, ratio, seed):
    v = mask_frame(np.zeros(n), ratio, seed)
    both = np.concatenate([v.masked_idx, v.visible_idx])
    assert sorted(both.tolist()) == list(range(n))
    assert v.masked_idx.size == round(ratio * n)


def test_deterministic_and_seed_dependent():
    x = np.arange(64.0)
    a, b = mask_frame(x, 0.5, 11), mask_frame(x, 0.5, 11)
    c = mask_frame(x, 0.5, 12)
    np.testing.assert_array_equal(a.masked_idx, b.masked_idx)
    assert not np.array_equal(a.masked_idx, c.masked_idx)


def test_masked_positions_uniform():
    # each of 10 positions should be masked with probability 0.3
    hits = np.zeros(10)
    trials = 20000
    hits += random_masks(np.random.default_rng(5), trials, 10, 0.3).sum(0)
    p = 0.3
    sd = np.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(hits - trials * p) < 4 * sd)


def test_patch_layout_and_masked_values():
    img = np.arange(16.0)  # 4x4
    order = patch_order((4, 4), 2)
    np.testing.assert_array_equal(order[:4], [0, 1, 4, 5])
    v = view_from_mask(img, np.array([0, 1, 0, 0]), (4, 4), patch_size=2)
    np.testing.assert_array_equal(v.masked_values, [[2, 3, 6, 7]])
    zeroed = v.input_with_mask[0].reshape(4, 4)
    assert not zeroed[:2, 2:].any() and zeroed[0, 0] == 0 and zeroed[3, 3] == 15


def test_bad_geometry_and_ratio():
    with pytest.raises(ValueError):
        patch_order((5, 4), 2)
    with pytest.raises(ValueError):
        mask_frame(np.zeros(4), 1.5, 0)
