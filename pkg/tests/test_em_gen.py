import numpy as np
import pytest

import oracles
from emseg.core import AnnotationSet, FrameProbs, Mode
from emseg.em_gen import case_posteriors, e_step_gen, gen_weights, update_last_boundary
from emseg.em_tss import e_step_tss
from emseg.likelihood import SegmentContext
from emseg.priors import LengthPrior, estimate_mu
from emseg.synthdata import GenConfig, annotate_tss, drop_segments, generate_corpus
from emseg.trainer import TrainConfig, naive_init, scorer_forward

L_, R_, M_ = 0, 1, 2


@pytest.fixture
def uniform3():
    probs = FrameProbs(np.log(np.full((4, 3), 1 / 3)))
    return SegmentContext.from_probs(probs, 0, 3, L_, R_)


def test_uniform_case_posterior(uniform3):
    cp = case_posteriors(uniform3)
    assert cp.p_c1 == pytest.approx(0.5)
    assert cp.p_c2 == pytest.approx(0.5)
    assert cp.p_c3 == 0.0
    np.testing.assert_allclose(cp.c1_marginal(), [1 / 6] * 3)
    np.testing.assert_allclose(cp.probs_c2[0][np.triu_indices(3, 1)], [1 / 6] * 3)


def test_uniform_weights(uniform3):
    w = gen_weights(case_posteriors(uniform3), uniform3)
    assert w[L_][0] == 1.0
    assert (w[L_][1], w[M_][1], w[R_][1]) == pytest.approx((1 / 2, 1 / 3, 1 / 6))


def test_uniform_beta(uniform3):
    assert update_last_boundary(case_posteriors(uniform3)) == pytest.approx(7 / 3)


def test_c3_dominates_with_strong_evidence():
    masses = []
    for L in (2, 5, 10, 20):
        p = np.tile([0.9, 0.05, 0.05], (L + 1, 1))
        ctx = SegmentContext.from_probs(FrameProbs.from_probs(p), 0, L, 0, 0)
        masses.append(case_posteriors(ctx, allow_c3=True).p_c3)
    assert all(b > a for a, b in zip(masses, masses[1:]))
    assert masses[-1] > 0.99


def test_dropped_middle_segment_recovered():
    # frames 0-5 class 0, 6-11 class 2 (missed), 12-17 class 1; stamps at 2 and 15
    p = np.full((18, 3), 0.05)
    p[:6, 0] = p[6:12, 2] = p[12:, 1] = 0.9
    probs = FrameProbs.from_probs(p)
    ann = AnnotationSet(Mode.TSS_MISSING, [(2, 0), (15, 1)])
    res = e_step_gen(probs, ann, LengthPrior(np.full(3, 6.0)))
    assert res.weights.w[6:12, 2].min() > 0.9
    # the one-boundary E-step cannot put mass there
    assert e_step_tss(probs, ann.with_mode(Mode.TSS)).weights.w[6:12, 2].max() == 0.0
    ctx = SegmentContext.from_probs(probs, 2, 15, 0, 1)
    ref = oracles.gen_enumerate(probs.log_p.tolist(), 2, 15, 0, 1, 3, False, [6.0] * 3, 0.0)
    for u in range(13):
        assert res.weights.w[2 + u, 2] == pytest.approx(ref["weights"][u].get(2, 0.0), abs=1e-12)
    assert case_posteriors(ctx, LengthPrior(np.full(3, 6.0))).p_c2 > 0.99


def test_skiptag_within_one_segment():
    p = np.full((12, 3), 0.1)
    p[:, 1] = 0.8
    ann = AnnotationSet(Mode.SKIPTAG, [(2, 1), (9, 1)])
    res = e_step_gen(FrameProbs.from_probs(p), ann, LengthPrior(np.full(3, 5.0)))
    assert res.posteriors[0].p_c3 > 0.95
    assert res.weights.argmax().tolist() == [1] * 12


def test_mode_checks():
    probs = FrameProbs(np.zeros((6, 3)))
    with pytest.raises(ValueError):
        e_step_gen(probs, AnnotationSet(Mode.TSS, [(0, 0), (4, 1)]))
    # C3 is not available outside SkipTag and C=1 has no middle class
    with pytest.raises(ValueError, match="segment 2"):
        e_step_gen(FrameProbs(np.zeros((6, 1))), AnnotationSet(Mode.TSS_MISSING, [(0, 0), (4, 0)]))
    with pytest.raises(ValueError):
        e_step_gen(probs, AnnotationSet(Mode.TSS_MISSING, []))


def test_short_equal_class_span_without_c3_is_inadmissible():
    ctx = SegmentContext.from_probs(np.zeros((3, 3)), 0, 1, 0, 0)
    with pytest.raises(ValueError, match="no admissible"):
        case_posteriors(ctx, allow_c3=False)


def test_beta_threading_matches_oracle():
    rng = np.random.default_rng(11)
    for _ in range(10):
        C = 4
        frames = np.cumsum(rng.integers(2, 9, size=4))
        classes = [int(rng.integers(C)) for _ in frames]
        T = int(frames[-1]) + 3
        probs = FrameProbs.from_probs(rng.dirichlet(np.ones(C), size=T))
        mu = rng.uniform(2, 10, size=C)
        ann = AnnotationSet(Mode.SKIPTAG, list(zip(frames.tolist(), classes)))
        res = e_step_gen(probs, ann, LengthPrior(mu))
        beta = 0.0
        expected = np.zeros((T, C))
        expected[:frames[0], classes[0]] = 1
        expected[frames[-1]:, classes[-1]] = 1
        for k in range(1, len(frames)):
            a, b = int(frames[k - 1]), int(frames[k])
            ref = oracles.gen_enumerate(probs.log_p.tolist(), a, b, classes[k - 1], classes[k],
                                        C, True, mu.tolist(), beta)
            for u, wu in enumerate(ref["weights"]):
                for c, v in wu.items():
                    expected[a + u, c] += v
            assert res.posteriors[k - 1].beta_prev == pytest.approx(beta, abs=1e-10)
            beta = ref["beta"]
        np.testing.assert_allclose(res.weights.w, expected, atol=1e-10)


def test_window_limits_middle_length():
    probs = FrameProbs(np.zeros((12, 3)))
    ctx = SegmentContext.from_probs(probs, 0, 10, 0, 1)
    cp = case_posteriors(ctx, window=2)
    cands = ctx.candidates()
    gap = cands[None, :] - cands[:, None]
    assert np.all(cp.probs_c2[0][gap > 2] == 0.0)
    assert np.all(cp.probs_c2[0][(gap >= 1) & (gap <= 2)] > 0.0)


def test_full_annotation_tracks_tss_estep():
    cfg_g = GenConfig(n_classes=5, n_features=12, mu=30.0, k_range=(4, 7), sep=4.0, seed=3)
    videos = generate_corpus(cfg_g, 6)
    rng = np.random.default_rng(0)
    anns = [annotate_tss(v, "RANDOM", rng) for v in videos]
    cfg = TrainConfig(n_init=60, optimizer="adam", lr=0.05)
    params = naive_init(videos, anns, cfg, 5)
    prior = estimate_mu(videos[0], 5)
    agree = total = 0
    for v, a in zip(videos, anns):
        probs = scorer_forward(params, v.features)
        w_tss = e_step_tss(probs, a, prior).weights.argmax()
        w_gen = e_step_gen(probs, drop_segments(a, 0.0), prior).weights.argmax()
        agree += int(np.sum(w_tss == w_gen))
        total += v.T
    assert agree / total >= 0.99
