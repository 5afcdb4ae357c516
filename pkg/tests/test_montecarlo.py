import numpy as np
from hypothesis import given, strategies as st

from prisample import montecarlo as mc
from prisample.model import SeededGenerator


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=2, max_size=40),
       st.integers(1, 5))
def test_running_moments_match_numpy(rows, splits):
    x = np.array(rows)
    acc = mc.RunningMoments(3)
    for part in np.array_split(x, splits):
        acc.update(part)
    assert np.allclose(acc.mean, x.mean(axis=0), atol=1e-9)
    assert np.allclose(acc.var, x.var(axis=0, ddof=1), rtol=1e-7, atol=1e-7)


def test_chunks_cover_trials_and_are_deterministic():
    got = list(mc.chunks(1000, 10, SeededGenerator(0), chunk_elements=3000))
    assert sum(t for t, _ in got) == 1000
    assert [t for t, _ in got] == [300, 300, 300, 100]
    again = list(mc.chunks(1000, 10, SeededGenerator(0), chunk_elements=3000))
    assert np.array_equal(got[2][1].alphas(5), again[2][1].alphas(5))


def test_top_order_tie_break():
    q = np.array([[1.0, 3.0, 3.0, 0.0, 2.0]])
    assert mc.top_order(q, 3).tolist() == [[1, 2, 4]]


def test_threshold_block_sample_all():
    b = mc.threshold_block(np.array([1.0, 2.0]), 3, np.full((4, 2), 0.5))
    assert np.all(b.sampled) and np.all(b.est == [1.0, 2.0])


def test_uniform_block_exact_size():
    b = mc.uniform_block(np.ones(10), 4, SeededGenerator(0).alphas((50, 10)))
    assert np.all(b.distinct == 4) and np.all(b.est[b.sampled] == 2.5)


def test_wr_block_count_mode_sums_to_total():
    w = np.array([5.0, 3.0, 2.0])
    b = mc.wr_block(w, 4, SeededGenerator(0).alphas((100, 4)), "count")
    assert np.allclose(b.est.sum(axis=1), w.sum())
