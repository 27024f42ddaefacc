import math

import numpy as np
import pytest

from emseg.core import FrameProbs
from emseg.likelihood import (
    PAPER_SUM,
    SegmentContext,
    constant_class_log_likelihood,
    log_sum_exp,
    one_boundary_log_likelihood,
    one_boundary_log_likelihoods,
    two_boundary_log_likelihood,
    two_boundary_log_likelihoods,
)

L_, R_, M_ = 0, 1, 2


@pytest.fixture
def three_frame():
    # p_l = [0.9, 0.6, 0.2], p_r = [0.1, 0.4, 0.8], p_m = [0.3, 0.5, 0.7], plus the stamp frame 3
    p = np.array([[0.9, 0.1, 0.3], [0.6, 0.4, 0.5], [0.2, 0.8, 0.7], [0.1, 0.8, 0.1]])
    return SegmentContext.from_probs(np.log(p), 0, 3, L_, R_)


def test_one_boundary_example(three_frame):
    assert one_boundary_log_likelihood(three_frame, 2) == pytest.approx(math.log(0.432), abs=1e-12)
    np.testing.assert_allclose(one_boundary_log_likelihoods(three_frame),
                               np.log([0.288, 0.432, 0.108]), atol=1e-12)


def test_one_boundary_likelihoods_direct_products(three_frame):
    # j = 1: l r r;  j = 2: l l r;  j = 3: l l l
    np.testing.assert_allclose(np.exp(one_boundary_log_likelihoods(three_frame)),
                               [0.9 * 0.4 * 0.8, 0.9 * 0.6 * 0.8, 0.9 * 0.6 * 0.2], atol=1e-15)


def test_two_boundary_example(three_frame):
    assert two_boundary_log_likelihood(three_frame, 1, 2, M_) == pytest.approx(
        math.log(0.9 * 0.5 * 0.8), abs=1e-12)
    mat = two_boundary_log_likelihoods(three_frame, M_)
    assert mat.shape == (3, 3)
    assert np.all(np.isneginf(mat[np.tril_indices(3)]))
    assert mat[0, 1] == pytest.approx(math.log(0.9 * 0.5 * 0.8))
    assert mat[0, 2] == pytest.approx(math.log(0.9 * 0.5 * 0.7))
    assert mat[1, 2] == pytest.approx(math.log(0.9 * 0.6 * 0.7))


def test_constant_class_example(three_frame):
    assert constant_class_log_likelihood(three_frame, L_) == pytest.approx(math.log(0.108))


def test_argument_errors(three_frame):
    with pytest.raises(ValueError):
        one_boundary_log_likelihood(three_frame, 0)
    with pytest.raises(ValueError):
        one_boundary_log_likelihood(three_frame, 4)
    with pytest.raises(ValueError):
        two_boundary_log_likelihood(three_frame, 2, 2, M_)
    with pytest.raises(ValueError):
        two_boundary_log_likelihood(three_frame, 1, 2, L_)
    with pytest.raises(ValueError):
        constant_class_log_likelihood(three_frame, 9)
    with pytest.raises(ValueError):
        SegmentContext.from_probs(np.zeros((3, 2)), 2, 2, 0, 1)
    with pytest.raises(ValueError):
        SegmentContext.from_probs(np.zeros((3, 2)), 0, 4, 0, 1)
    with pytest.raises(ValueError):
        SegmentContext.from_probs(np.zeros((3, 2)), 0, 2, 0, 1, boundary_range="loose")


def test_candidate_ranges():
    lp = np.zeros((6, 2))
    strict = SegmentContext.from_probs(lp, 1, 4, 0, 1)
    paper = SegmentContext.from_probs(lp, 1, 4, 0, 1, PAPER_SUM)
    np.testing.assert_array_equal(strict.candidates(), [2, 3, 4])
    np.testing.assert_array_equal(paper.candidates(), [1, 2, 3])


def test_matches_loop_on_random_segments():
    rng = np.random.default_rng(5)
    for _ in range(50):
        C, L = int(rng.integers(3, 6)), int(rng.integers(2, 15))
        a = int(rng.integers(0, 4))
        probs = FrameProbs.from_probs(rng.dirichlet(np.ones(C), size=a + L + 2))
        ctx = SegmentContext.from_probs(probs, a, a + L, 0, 1)
        lp = probs.log_p
        for j in ctx.candidates():
            direct = sum(lp[t, 0] for t in range(a, j)) + sum(lp[t, 1] for t in range(j, a + L))
            assert one_boundary_log_likelihood(ctx, j) == pytest.approx(direct, abs=1e-10)
        mat = two_boundary_log_likelihoods(ctx, 2)
        for i, s1 in enumerate(ctx.candidates()):
            for k, s2 in enumerate(ctx.candidates()):
                if s2 <= s1:
                    continue
                direct = (sum(lp[t, 0] for t in range(a, s1)) + sum(lp[t, 2] for t in range(s1, s2))
                          + sum(lp[t, 1] for t in range(s2, a + L)))
                assert mat[i, k] == pytest.approx(direct, abs=1e-10)


def test_long_segments_stay_finite():
    # products of thousands of small probabilities underflow; log sums do not
    p = np.full((5000, 2), 0.5)
    ctx = SegmentContext.from_probs(np.log(p), 0, 4999, 0, 1)
    vals = one_boundary_log_likelihoods(ctx)
    assert np.all(np.isfinite(vals))
    assert np.isfinite(log_sum_exp(vals))


def test_log_sum_exp():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2))
    assert log_sum_exp([-np.inf, -np.inf]) == -np.inf
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2))
    with pytest.raises(ValueError):
        log_sum_exp([])
