import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncog import _pykernels, kernels
from dyncog.filtering import forest

ckernels = pytest.importorskip("dyncog._ckernels", reason="compiled kernels not built")


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_candidate_order():
    offs = _pykernels.candidate_offsets(1)
    assert [tuple(o) for o in offs[:5]] == [(0, 0), (-1, 0), (0, -1), (0, 1), (1, 0)]
    np.testing.assert_array_equal(ckernels.candidate_offsets(3), _pykernels.candidate_offsets(3))


def test_block_match_recovers_a_shift():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (64, 80), dtype=np.uint8)
    shifted = np.roll(img, (2, -3), axis=(0, 1))
    for impl in (_pykernels, ckernels):
        mv = impl.block_match(img, shifted, 16, 8)
        # interior blocks see the content move down 2 and left 3
        assert (mv[1:-1, 1:-1, 0] == 2).all() and (mv[1:-1, 1:-1, 1] == -3).all()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), h=st.integers(8, 70), w=st.integers(8, 70),
       block=st.sampled_from([4, 8, 16]), radius=st.integers(0, 8))
def test_block_match_agrees(seed, h, w, block, radius):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w), dtype=np.uint8)
    b = rng.integers(0, 4, (h, w), dtype=np.uint8) * 64   # coarse levels force SAD ties
    np.testing.assert_array_equal(ckernels.block_match(a, b, block, radius), _pykernels.block_match(a, b, block, radius))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(0, 60), levels=st.integers(1, 8))
def test_best_split_agrees(seed, n, levels):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.integers(0, levels, n).astype(float))
    y = rng.uniform(0, 5, n)
    w = rng.poisson(1.0, n).astype(float)
    assert ckernels.best_split(x, y, w) == _pykernels.best_split(x, y, w)


def test_best_split_finds_the_step():
    x = np.arange(10.0)
    y = np.r_[np.zeros(4), np.ones(6)]
    gain, i = _pykernels.best_split(x, y, np.ones(10))
    assert i == 3 and gain > 0


def test_forest_is_identical_on_both_backends(monkeypatch):
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(80, 6)), rng.uniform(0, 5, 80)
    monkeypatch.setattr(forest.kernels, "best_split", ckernels.best_split)
    compiled = forest.train_forest(X=X, y=y, trees=10, seed=1).dumps()
    monkeypatch.setattr(forest.kernels, "best_split", _pykernels.best_split)
    assert forest.train_forest(X=X, y=y, trees=10, seed=1).dumps() == compiled
