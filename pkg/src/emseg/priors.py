"""Segment-length priors: Binomial boundary prior and Poisson gap / case priors."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from .core import VideoSample, segments_from_framewise


class PriorMode(str, enum.Enum):
    NON_INFORMATIVE = "NON_INFORMATIVE"
    FROM_SAMPLE = "FROM_SAMPLE"


@dataclass(frozen=True, eq=False)
class LengthPrior:
    """Mean action length per class, in frames."""

    mu: np.ndarray
    mode: PriorMode = PriorMode.FROM_SAMPLE

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size == 0 or np.any(~(mu > 0)):
            raise ValueError("mu must be a nonempty vector of positive lengths")
        mu = mu.copy()
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mode", PriorMode(self.mode))

    @classmethod
    def non_informative(cls, n_classes: int, value: float = 1.0) -> "LengthPrior":
        return cls(np.full(n_classes, float(value)), PriorMode.NON_INFORMATIVE)


def estimate_mu(sample: VideoSample | Iterable[VideoSample], n_classes: int) -> LengthPrior:
    """Mean segment length per class from fully labelled videos.

    Classes that never occur fall back to the mean length of all observed
    segments.
    """
    videos = [sample] if isinstance(sample, VideoSample) else list(sample)
    if not videos:
        raise ValueError("need at least one video to estimate mean lengths")
    totals = np.zeros(n_classes)
    counts = np.zeros(n_classes)
    for v in videos:
        if v.gt_labels is None or v.T == 0:
            continue
        for seg in segments_from_framewise(v.gt_labels):
            totals[seg.class_id] += seg.length
            counts[seg.class_id] += 1
    if counts.sum() == 0:
        raise ValueError("sample contains no labelled segments")
    fallback = totals.sum() / counts.sum()
    mu = np.where(counts > 0, totals / np.maximum(counts, 1), fallback)
    return LengthPrior(mu, PriorMode.FROM_SAMPLE)


def boundary_fraction(k: int, classes: Sequence[int], prior: LengthPrior) -> float:
    """Expected fraction of the video preceding boundary ``k`` (1-based, ``2 <= k <= K``)."""
    K = len(classes)
    if not 2 <= k <= K:
        raise ValueError(f"boundary ordinal {k} outside [2, {K}]")
    if prior.mode is PriorMode.NON_INFORMATIVE:
        # exact ratio; independent of the shared mu value
        return (k - 1) / K
    mu = prior.mu[np.asarray(classes, dtype=np.int64)]
    return float(mu[:k - 1].sum() / mu.sum())


def binomial_log_pmf(n: int, p: float, j) -> np.ndarray | float:
    j = np.asarray(j, dtype=float)
    out = (gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
           + j * np.log(p) + (n - j) * np.log1p(-p))
    out = np.where((j < 0) | (j > n), -np.inf, out)
    return out if out.ndim else float(out)


def binomial_boundary_log_prior(T: int, k: int, classes: Sequence[int],
                                prior: LengthPrior, j) -> np.ndarray | float:
    """Log Binomial(T, p_k) mass at frame ``j`` for the ``k``-th boundary."""
    p = boundary_fraction(k, classes, prior)
    if not 0.0 < p < 1.0:
        raise ValueError(f"degenerate boundary fraction p_{k}={p}")
    return binomial_log_pmf(T, p, j)


def candidate_log_prior(log_prior: np.ndarray) -> np.ndarray:
    """Renormalize log masses over a finite candidate set."""
    log_prior = np.asarray(log_prior, dtype=float)
    m = log_prior.max()
    if not np.isfinite(m):
        raise ValueError("prior has no mass on the candidate set")
    return log_prior - (m + np.log(np.exp(log_prior - m).sum()))


def poisson_gap_log_prior(gap, mu: float):
    """Poisson(mu) log-pmf at ``gap``; real-valued gaps use the gamma function."""
    gap_a = np.asarray(gap, dtype=float)
    if np.any(gap_a < 0):
        raise ValueError(f"negative gap {gap}")
    if not mu > 0:
        raise ValueError("mu must be positive")
    out = gap_a * np.log(mu) - mu - gammaln(gap_a + 1)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CasePriorConfig:
    """Prior case masses for one timestamp segment, renormalized over admissible cases.

    ``p_case2`` is the mass of each individual middle class listed in
    ``middle_classes``.
    """

    p_case1: float
    p_case2: float
    p_case3: float
    middle_classes: tuple[int, ...]

    @property
    def total(self) -> float:
        return self.p_case1 + self.p_case2 * len(self.middle_classes) + self.p_case3


def case_log_priors(l: int, r: int, n_classes: int, allow_c3: bool = True,
                    allow_c2: bool = True) -> CasePriorConfig:
    """Case priors with 1/3 base mass per case family.

    Case 1 needs ``l != r`` and Case 3 needs ``l == r``; each middle class takes
    ``1 / (3 (C - 2))`` when ``l != r`` and ``1 / (3 (C - 1))`` when ``l == r``.
    Inadmissible cases get zero mass and the rest are rescaled to sum to one.
    """
    C = n_classes
    middle = tuple(c for c in range(C) if c != l and c != r) if allow_c2 else ()
    p1 = 1 / 3 if l != r else 0.0
    p3 = 1 / 3 if (l == r and allow_c3) else 0.0
    p2 = 0.0
    if middle:
        p2 = 1 / (3 * (C - 2)) if l != r else 1 / (3 * (C - 1))
    total = p1 + p2 * len(middle) + p3
    if total == 0:
        raise ValueError(f"no admissible case for l={l}, r={r}, C={C}, allow_c3={allow_c3}")
    return CasePriorConfig(p1 / total, p2 / total, p3 / total, middle)
