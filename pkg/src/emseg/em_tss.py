"""E-step for timestamp supervision: one unknown boundary per timestamp segment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AnnotationSet, FrameProbs, WeightMatrix
from .likelihood import STRICT, SegmentContext, log_sum_exp, one_boundary_log_likelihoods
from .priors import LengthPrior, binomial_boundary_log_prior, candidate_log_prior


@dataclass(frozen=True, eq=False)
class BoundaryPosterior:
    k: int
    candidates: np.ndarray
    log_post: np.ndarray
    log_evidence: float = 0.0

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_post)


@dataclass(frozen=True, eq=False)
class EStepResult:
    weights: WeightMatrix
    posteriors: list = field(default_factory=list)
    log_likelihood: float = 0.0


def boundary_posterior(ctx: SegmentContext, log_prior: np.ndarray | None = None,
                       k: int = 0) -> BoundaryPosterior:
    """Posterior over the boundary of one timestamp segment.

    ``log_prior`` must be aligned with ``ctx.candidates()``; ``None`` means a
    uniform prior. It need not be normalized.
    """
    cands = ctx.candidates()
    joint = one_boundary_log_likelihoods(ctx)
    if log_prior is not None:
        log_prior = np.asarray(log_prior, dtype=float)
        if log_prior.shape != cands.shape:
            raise ValueError(f"prior has {log_prior.size} entries for {cands.size} candidates")
        joint = joint + log_prior
    else:
        joint = joint - np.log(cands.size)
    z = log_sum_exp(joint)
    if not np.isfinite(z):
        raise ValueError(f"segment {k}: boundary likelihoods cannot be normalized")
    return BoundaryPosterior(k, cands, joint - z, z)


def weights_from_posterior(post: BoundaryPosterior, left_stamp: int,
                           right_stamp: int) -> np.ndarray:
    """``(L, 2)`` array of left/right weights for frames ``[left_stamp, right_stamp)``.

    The left weight of a frame is the posterior mass of boundaries strictly
    after it.
    """
    p = post.probs
    tail = np.concatenate((np.cumsum(p[::-1])[::-1], [0.0]))
    tail[0] = 1.0
    frames = np.arange(left_stamp, right_stamp)
    w_left = tail[np.searchsorted(post.candidates, frames, side="right")]
    w_left = np.minimum(w_left, 1.0)
    return np.stack((w_left, 1.0 - w_left), axis=1)


def expected_boundaries(posts) -> list[float]:
    return [float(np.dot(p.candidates, p.probs)) for p in posts]


def tss_log_priors(ctx: SegmentContext, k: int, T: int, classes, prior: LengthPrior | None):
    if prior is None:
        return None
    raw = binomial_boundary_log_prior(T, k, classes, prior, ctx.candidates())
    return candidate_log_prior(raw)


def _flank_fill(w: np.ndarray, log_p: np.ndarray, frames: np.ndarray, classes: np.ndarray) -> float:
    """Hard-label the frames before the first and from the last stamp on."""
    T = w.shape[0]
    t1, tK = frames[0], frames[-1]
    w[:t1, classes[0]] = 1.0
    w[tK:, classes[-1]] = 1.0
    return float(log_p[:t1, classes[0]].sum() + log_p[tK:T, classes[-1]].sum())


def e_step_tss(probs: FrameProbs, ann: AnnotationSet, prior: LengthPrior | None = None,
               boundary_range: str = STRICT, video_id: str = "") -> EStepResult:
    """Frame weights from the current frame probabilities and timestamps.

    Consecutive stamps sharing a class (possible when a TSS labeller is run on
    annotations with missed segments) simply label the whole span with that
    class.
    """
    T, C = probs.log_p.shape
    if len(ann) == 0:
        raise ValueError(f"video {video_id!r}: no annotated timestamps")
    ann.check_within(T)
    frames, classes = ann.frames, ann.classes
    w = np.zeros((T, C))
    loglik = _flank_fill(w, probs.log_p, frames, classes)
    posts = []
    for k in range(2, len(ann) + 1):
        a, b = frames[k - 2], frames[k - 1]
        l, r = classes[k - 2], classes[k - 1]
        ctx = SegmentContext.from_probs(probs, a, b, l, r, boundary_range)
        try:
            post = boundary_posterior(ctx, tss_log_priors(ctx, k, T, classes, prior), k)
        except ValueError as e:
            raise ValueError(f"video {video_id!r}, segment {k}: {e}") from e
        rows = weights_from_posterior(post, a, b)
        w[a:b, l] += rows[:, 0]
        w[a:b, r] += rows[:, 1]
        posts.append(post)
        loglik += post.log_evidence
    return EStepResult(WeightMatrix(w), posts, loglik)


def tss_log_marginal(probs: FrameProbs, ann: AnnotationSet, prior: LengthPrior | None = None,
                     boundary_range: str = STRICT) -> float:
    """Observed-data log-likelihood, boundaries summed out, prior included."""
    return e_step_tss(probs, ann, prior, boundary_range).log_likelihood

