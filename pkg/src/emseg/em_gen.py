"""Generalized E-step tolerating missed segments and SkipTag annotations.

Each timestamp segment is explained by one of three cases:

* C1: a single boundary ``s`` between the left and right action (``l != r``);
* C2: a missed middle action ``c`` occupying ``[s1, s2)``;
* C3: no boundary at all (``l == r``, SkipTag only).

Segments are processed left to right, threading ``beta``, the expected frame
of the last boundary seen so far, into the Poisson length priors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .core import AnnotationSet, FrameProbs, Mode, WeightMatrix
from .em_tss import EStepResult, _flank_fill
from .likelihood import (
    STRICT,
    SegmentContext,
    constant_class_log_likelihood,
    log_sum_exp,
    one_boundary_log_likelihoods,
    two_boundary_log_likelihoods,
)
from .priors import CasePriorConfig, LengthPrior, case_log_priors, poisson_gap_log_prior

NEG_INF = -np.inf


@dataclass(frozen=True, eq=False)
class GenLogPriors:
    """Log prior mass of every configuration of one segment.

    ``c2[m]`` is a candidates x candidates matrix for ``middle_classes[m]``
    indexed by ``(s1, s2)``; invalid pairs hold ``-inf``.
    """

    c1: np.ndarray
    c2: np.ndarray
    c3: float
    middle_classes: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class CasePosterior:
    candidates: np.ndarray
    log_post_c1: np.ndarray
    log_post_c2: np.ndarray
    log_post_c3: float
    middle_classes: tuple[int, ...]
    beta_prev: float
    log_evidence: float
    k: int = 0

    @cached_property
    def probs_c2(self) -> np.ndarray:
        return np.exp(self.log_post_c2)

    @cached_property
    def c2_start_marginals(self) -> np.ndarray:
        """``(M, n)`` posterior mass of each middle class starting at each candidate."""
        return self.probs_c2.sum(axis=2)

    @cached_property
    def c2_end_marginals(self) -> np.ndarray:
        """``(M, n)`` posterior mass of each middle class ending at each candidate."""
        return self.probs_c2.sum(axis=1)

    @property
    def p_c1(self) -> float:
        return float(np.exp(self.log_post_c1).sum())

    @property
    def p_c2(self) -> float:
        return float(self.c2_start_marginals.sum())

    @property
    def p_c3(self) -> float:
        return float(np.exp(self.log_post_c3))

    def c1_marginal(self) -> np.ndarray:
        return np.exp(self.log_post_c1)


def _normalize_finite(a: np.ndarray) -> np.ndarray:
    m = a.max() if a.size else NEG_INF
    if not np.isfinite(m):
        return np.full_like(a, NEG_INF)
    return a - (m + np.log(np.exp(a - m).sum()))


def _pair_mask(cands: np.ndarray, window: int | None) -> np.ndarray:
    gap = cands[None, :] - cands[:, None]
    ok = gap > 0
    if window is not None:
        ok &= gap <= window
    return ok


def gen_log_priors(ctx: SegmentContext, cases: CasePriorConfig,
                   length_prior: LengthPrior | None = None, beta_prev: float = 0.0,
                   window: int | None = None) -> GenLogPriors:
    """Configuration priors for one segment.

    Within each case the position prior is renormalized over the finite
    candidate set; the case masses come from ``cases``. Without a length prior
    positions are uniform within each case.
    """
    cands = ctx.candidates()
    n = cands.size
    mask = _pair_mask(cands, window)
    l = ctx.left_class
    with np.errstate(divide="ignore"):
        log_p1, log_p2, log_p3 = np.log([cases.p_case1, cases.p_case2, cases.p_case3])

    if cases.p_case1 > 0:
        pos = (np.zeros(n) if length_prior is None
               else poisson_gap_log_prior(cands - beta_prev, length_prior.mu[l]))
        c1 = _normalize_finite(pos) + log_p1
    else:
        c1 = np.full(n, NEG_INF)

    c2 = np.full((len(cases.middle_classes), n, n), NEG_INF)
    if cases.p_case2 > 0 and mask.any():
        if length_prior is None:
            first = np.zeros(n)
        else:
            first = poisson_gap_log_prior(cands - beta_prev, length_prior.mu[l])
        # candidates are consecutive frames, so s2 - s1 is a column-row offset
        span = np.clip(np.subtract.outer(np.arange(n), np.arange(n)).T, 0, None)
        for m, c in enumerate(cases.middle_classes):
            pair = np.broadcast_to(first[:, None], (n, n))
            if length_prior is not None:
                # one gammaln per distinct gap, not per pair
                pair = pair + poisson_gap_log_prior(np.arange(n), length_prior.mu[c])[span]
            np.copyto(c2[m], pair, where=mask)
            c2[m] = _normalize_finite(c2[m]) + log_p2
    return GenLogPriors(c1, c2, float(log_p3), cases.middle_classes)


def case_posteriors(ctx: SegmentContext, length_prior: LengthPrior | None = None,
                    beta_prev: float = 0.0, allow_c3: bool = False,
                    log_priors: GenLogPriors | None = None, window: int | None = None,
                    k: int = 0) -> CasePosterior:
    """Joint posterior over case and boundary configuration of one segment."""
    if log_priors is None:
        try:
            cases = case_log_priors(ctx.left_class, ctx.right_class, ctx.n_classes, allow_c3)
        except ValueError as e:
            raise ValueError(f"segment {k} [{ctx.left_stamp}, {ctx.right_stamp}): {e}") from e
        log_priors = gen_log_priors(ctx, cases, length_prior, beta_prev, window)
    lp = log_priors

    j1 = np.where(np.isfinite(lp.c1), one_boundary_log_likelihoods(ctx) + lp.c1, NEG_INF)
    # -inf prior entries stay -inf; likelihoods are finite thanks to the floor
    j2 = np.empty(lp.c2.shape)
    for m, c in enumerate(lp.middle_classes):
        np.add(two_boundary_log_likelihoods(ctx, c), lp.c2[m], out=j2[m])
    j3 = NEG_INF
    if np.isfinite(lp.c3):
        j3 = constant_class_log_likelihood(ctx, ctx.left_class) + lp.c3

    z = log_sum_exp([log_sum_exp(j1), logsumexp(j2) if j2.size else NEG_INF, j3])
    if not np.isfinite(z):
        raise ValueError(
            f"segment {k} [{ctx.left_stamp}, {ctx.right_stamp}) with l={ctx.left_class}, "
            f"r={ctx.right_class}: no admissible configuration")
    return CasePosterior(ctx.candidates(), j1 - z, j2 - z, j3 - z, tuple(lp.middle_classes),
                         float(beta_prev), z, k)


def gen_weights(cp: CasePosterior, ctx: SegmentContext) -> dict[int, np.ndarray]:
    """Per-class weights over frames ``[left_stamp, right_stamp)``.

    Returns a mapping class id -> length-L weight vector; when ``l == r`` the
    left and right contributions are merged into one entry.
    """
    frames = np.arange(ctx.left_stamp, ctx.right_stamp)
    cands = cp.candidates
    # index of the first candidate strictly greater than each frame
    idx = np.searchsorted(cands, frames, side="right")

    def head(mass: np.ndarray) -> np.ndarray:
        # mass at candidates <= frame
        return np.concatenate(([0.0], np.cumsum(mass)))[idx]

    right = head(cp.c1_marginal())
    middle = {}
    mid_total = np.zeros(frames.size)
    for m, c in enumerate(cp.middle_classes):
        started = head(cp.c2_start_marginals[m])
        ended = head(cp.c2_end_marginals[m])
        right += ended
        w_c = np.clip(started - ended, 0.0, None)
        middle[c] = w_c
        mid_total += w_c
    left = np.clip(1.0 - right - mid_total, 0.0, None)
    right = np.clip(right, 0.0, None)

    out: dict[int, np.ndarray] = {}
    for c, w_c in ((ctx.left_class, left), (ctx.right_class, right), *middle.items()):
        out[c] = out[c] + w_c if c in out else w_c
    return out


def update_last_boundary(cp: CasePosterior, beta_prev: float | None = None) -> float:
    """Expected frame of the last boundary once this segment is accounted for."""
    beta_prev = cp.beta_prev if beta_prev is None else beta_prev
    cands = cp.candidates.astype(float)
    p1 = np.exp(cp.log_post_c1)
    p2_end = cp.c2_end_marginals.sum(axis=0)
    return float(beta_prev * cp.p_c3 + np.dot(cands, p1) + np.dot(cands, p2_end))


def e_step_gen(probs: FrameProbs, ann: AnnotationSet, length_prior: LengthPrior | None = None,
               mode: Mode | str | None = None, window: int | None = None,
               boundary_range: str = STRICT, video_id: str = "") -> EStepResult:
    """Frame weights for a whole video under possibly incomplete annotation."""
    mode = Mode(mode) if mode is not None else ann.mode
    if mode not in (Mode.TSS_MISSING, Mode.SKIPTAG):
        raise ValueError(f"e_step_gen needs TSS_MISSING or SKIPTAG mode, got {mode.value}")
    allow_c3 = mode is Mode.SKIPTAG
    T, C = probs.log_p.shape
    if len(ann) == 0:
        raise ValueError(f"video {video_id!r}: no annotated timestamps")
    ann.check_within(T)
    frames, classes = ann.frames, ann.classes
    w = np.zeros((T, C))
    loglik = _flank_fill(w, probs.log_p, frames, classes)
    beta = 0.0
    posts = []
    for k in range(2, len(ann) + 1):
        a, b = frames[k - 2], frames[k - 1]
        ctx = SegmentContext.from_probs(probs, a, b, classes[k - 2], classes[k - 1],
                                        boundary_range)
        try:
            cp = case_posteriors(ctx, length_prior, beta, allow_c3, window=window, k=k)
        except ValueError as e:
            raise ValueError(f"video {video_id!r}: {e}") from e
        for c, w_c in gen_weights(cp, ctx).items():
            w[a:b, c] += w_c
        beta = update_last_boundary(cp, beta)
        posts.append(cp)
        loglik += cp.log_evidence
    return EStepResult(WeightMatrix(w), posts, loglik)
