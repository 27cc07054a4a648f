import numpy as np
import pytest
from hypothesis import given, strategies as st

from stream_ttt.memory import (EmptyBufferError, InitPolicy, OutOfOrderError, WindowBuffer, push,
                               sample_batch, select_init)
from stream_ttt.models import ModelState
from stream_ttt.streamgen import Frame


def filled(k, T, start=1):
    buf = WindowBuffer(k)
    for t in range(start, start + T):
        push(buf, Frame(np.array([float(t)]), t))
    return buf


def test_window_of_one_holds_the_newest_frame():
    buf = WindowBuffer(1)
    for t in range(1, 6):
        push(buf, Frame(np.array([t * 1.0]), t))
        assert buf.indices == [t]


def test_twenty_pushes_into_sixteen():
    assert filled(16, 20).indices == list(range(5, 21))


@given(k=st.integers(1, 40), T=st.integers(1, 80))
def test_contents_are_the_last_k_indices(k, T):
    buf = filled(k, T)
    assert buf.indices == list(range(max(1, T - k + 1), T + 1))
    np.testing.assert_array_equal(buf.values()[:, 0], buf.indices)


def test_out_of_order_push_rejected():
    buf = filled(4, 3)
    for bad in (3, 5, 1):
        with pytest.raises(OutOfOrderError):
            push(buf, Frame(np.zeros(1), bad))
    assert buf.indices == [1, 2, 3]


def test_buffer_stores_by_value():
    x = np.zeros(2)
    buf = WindowBuffer(3)
    push(buf, Frame(x, 1))
    x[0] = 5.0
    assert buf.values()[0, 0] == 0.0


def test_single_frame_batch_is_copies():
    buf = filled(8, 1)
    batch = sample_batch(buf, 5, seed=0)
    assert len(batch) == 5 and all(f.index == 1 for f in batch)


def test_same_seed_same_batch():
    buf = filled(16, 30)
    a = [f.index for f in sample_batch(buf, 16, seed=3)]
    b = [f.index for f in sample_batch(buf, 16, seed=3)]
    assert a == b
    assert a != [f.index for f in sample_batch(buf, 16, seed=4)]


def test_draws_are_uniform_with_replacement():
    buf = filled(16, 16)
    n = 100_000
    idx = np.array([f.index for f in sample_batch(buf, n, seed=11)])
    assert set(idx) <= set(buf.indices)
    counts = np.bincount(idx - 1, minlength=16)
    p = 1 / 16
    sd = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sd)
    chi2 = float(((counts - n * p) ** 2 / (n * p)).sum())
    assert chi2 < 37.7  # 0.999 quantile, 15 dof


def test_empty_buffer_sampling_rejected():
    with pytest.raises(EmptyBufferError):
        sample_batch(WindowBuffer(4), 2, seed=0)
    with pytest.raises(ValueError):
        WindowBuffer(0)


def make_state():
    rng = np.random.default_rng(0)
    return ModelState(rng.normal(size=5), rng.normal(size=3), rng.normal(size=2)).freeze()


def test_policies_coincide_at_the_start():
    s = make_state()
    a, b = select_init("carry-over", s), select_init("reset", s)
    assert a.checksum() == b.checksum()


def test_reset_restores_f0_g0_bitwise_and_keeps_h():
    s = make_state()
    moved = s.with_fg(s.f + 1.0, s.g - 2.0)
    r = select_init(InitPolicy("reset"), moved)
    np.testing.assert_array_equal(r.f, s.frozen_init[0])
    np.testing.assert_array_equal(r.g, s.frozen_init[1])
    np.testing.assert_array_equal(r.h, moved.h)
    assert select_init("carry-over", moved) is moved


def test_unknown_policy_rejected():
    with pytest.raises(ValueError):
        InitPolicy("warm-restart")
    with pytest.raises(ValueError):
        select_init("reset", ModelState(np.zeros(1), np.zeros(0), np.zeros(0)))
