import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qcheat import _pykernels, kernels


def test_tree_reduce_fixed_order():
    assert kernels.tree_reduce([]) == 0.0
    assert kernels.tree_reduce([1.0, 2.0, 3.0]) == 6.0
    # ((1e16 + 1) + (-1e16 + 1)) in that pairing
    assert kernels.tree_reduce([1e16, 1.0, -1e16, 1.0]) == (1e16 + 1.0) + (-1e16 + 1.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(0, 5000), elements=st.floats(-1e6, 1e6)))
def test_pairwise_sum_accuracy(x):
    assert kernels.pairwise_sum(x) == pytest.approx(math.fsum(x), abs=1e-6 + 1e-12 * np.abs(x).sum())


@pytest.mark.parametrize("threads", ["1", "2", "3", "8"])
def test_pairwise_sum_independent_of_threads(monkeypatch, threads):
    x = np.random.default_rng(0).normal(size=100_003)
    monkeypatch.delenv("QCHEAT_THREADS", raising=False)
    ref = kernels.pairwise_sum(x)
    monkeypatch.setenv("QCHEAT_THREADS", threads)
    assert kernels.pairwise_sum(x) == ref


def test_thread_count_validation(monkeypatch):
    monkeypatch.setenv("QCHEAT_THREADS", "0")
    with pytest.raises(ValueError):
        kernels.thread_count()
    monkeypatch.setenv("QCHEAT_THREADS", "3")
    assert kernels.thread_count() == 3


def test_python_block_sums():
    x = np.arange(2500, dtype=float)
    sums = _pykernels.block_sums(x, 1024, 1)
    assert len(sums) == 3
    assert sums[0] == x[:1024].sum() and sums[2] == x[2048:].sum()


@pytest.mark.skipif(kernels.BACKEND_NAME != "cython", reason="compiled kernels not built")
def test_compiled_block_sums_match_python():
    x = np.random.default_rng(1).normal(size=70_001)
    for threads in (1, 4):
        assert np.array_equal(kernels.get_backend("cython").block_sums(x, 1024, threads), _pykernels.block_sums(x, 1024, 1))
