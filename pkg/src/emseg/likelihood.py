"""Log-space likelihoods of one timestamp segment given boundary placements.

A timestamp segment covers frames ``[left_stamp, right_stamp)``. A boundary
``j`` is the first frame of the right-hand action, so frames ``[left_stamp, j)``
carry the left class and ``[j, right_stamp)`` the right class. Every run
log-product is the difference of two entries of a per-class prefix sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FrameProbs

STRICT = "strict"
PAPER_SUM = "paper_sum"


@dataclass(frozen=True, eq=False)
class SegmentContext:
    """Prefix sums for a single timestamp segment.

    ``log_prefix[i, c]`` is the sum of ``log p[left_stamp + u, c]`` over
    ``u < i``, for ``i`` in ``0..L`` where ``L = right_stamp - left_stamp``.

    ``boundary_range`` selects the candidate boundary set: ``"strict"`` allows
    ``left_stamp < j <= right_stamp`` (so the left stamp frame always keeps the
    left class); ``"paper_sum"`` allows ``left_stamp <= j < right_stamp``.
    """

    left_stamp: int
    right_stamp: int
    left_class: int
    right_class: int
    log_prefix: np.ndarray
    boundary_range: str = STRICT

    def __post_init__(self):
        if not self.left_stamp < self.right_stamp:
            raise ValueError("left_stamp must precede right_stamp")
        if self.log_prefix.shape[0] != self.length + 1:
            raise ValueError("log_prefix must have L + 1 rows")
        if self.boundary_range not in (STRICT, PAPER_SUM):
            raise ValueError(f"unknown boundary_range {self.boundary_range!r}")

    @classmethod
    def from_probs(cls, probs: FrameProbs | np.ndarray, left_stamp: int, right_stamp: int,
                   left_class: int, right_class: int,
                   boundary_range: str = STRICT) -> "SegmentContext":
        log_p = probs.log_p if isinstance(probs, FrameProbs) else np.asarray(probs, float)
        if not 0 <= left_stamp < right_stamp <= log_p.shape[0]:
            raise ValueError(f"stamps ({left_stamp}, {right_stamp}) outside [0, {log_p.shape[0]}]")
        block = log_p[left_stamp:right_stamp]
        prefix = np.zeros((block.shape[0] + 1, block.shape[1]))
        np.cumsum(block, axis=0, out=prefix[1:])
        prefix.setflags(write=False)
        return cls(left_stamp, right_stamp, left_class, right_class, prefix, boundary_range)

    @property
    def length(self) -> int:
        return self.right_stamp - self.left_stamp

    @property
    def n_classes(self) -> int:
        return self.log_prefix.shape[1]

    @property
    def lo(self) -> int:
        """Smallest admissible boundary frame."""
        return self.left_stamp + 1 if self.boundary_range == STRICT else self.left_stamp

    @property
    def hi(self) -> int:
        """Largest admissible boundary frame."""
        return self.right_stamp if self.boundary_range == STRICT else self.right_stamp - 1

    def candidates(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def run(self, c: int, start, stop):
        """Log-product of class ``c`` over frames ``[start, stop)`` (absolute)."""
        a = self.left_stamp
        return self.log_prefix[np.asarray(stop) - a, c] - self.log_prefix[np.asarray(start) - a, c]

    def _check_class(self, c: int) -> None:
        if not 0 <= c < self.n_classes:
            raise ValueError(f"class {c} outside [0, {self.n_classes})")


def one_boundary_log_likelihood(ctx: SegmentContext, j: int) -> float:
    """Log-likelihood of the segment with the left/right boundary at frame ``j``."""
    if not ctx.lo <= j <= ctx.hi:
        raise ValueError(f"boundary {j} outside [{ctx.lo}, {ctx.hi}]")
    return float(ctx.run(ctx.left_class, ctx.left_stamp, j)
                 + ctx.run(ctx.right_class, j, ctx.right_stamp))


def one_boundary_log_likelihoods(ctx: SegmentContext) -> np.ndarray:
    """Vector of ``one_boundary_log_likelihood`` over ``ctx.candidates()``."""
    j = ctx.candidates()
    return ctx.run(ctx.left_class, ctx.left_stamp, j) + ctx.run(ctx.right_class, j, ctx.right_stamp)


def two_boundary_log_likelihood(ctx: SegmentContext, s1: int, s2: int, c: int) -> float:
    """Log-likelihood with a middle run of class ``c`` over ``[s1, s2)``."""
    if not ctx.lo <= s1 < s2 <= ctx.hi:
        raise ValueError(f"need {ctx.lo} <= s1 < s2 <= {ctx.hi}, got ({s1}, {s2})")
    ctx._check_class(c)
    if c in (ctx.left_class, ctx.right_class):
        raise ValueError(f"middle class {c} must differ from left and right classes")
    return float(ctx.run(ctx.left_class, ctx.left_stamp, s1) + ctx.run(c, s1, s2)
                 + ctx.run(ctx.right_class, s2, ctx.right_stamp))


def two_boundary_log_likelihoods(ctx: SegmentContext, c: int) -> np.ndarray:
    """Matrix over ``(s1, s2)`` candidate pairs for middle class ``c``.

    Entry ``[i, k]`` corresponds to ``s1 = lo + i`` and ``s2 = lo + k``; entries
    with ``s2 <= s1`` are ``-inf``.
    """
    j = ctx.candidates()
    left = ctx.run(ctx.left_class, ctx.left_stamp, j)
    right = ctx.run(ctx.right_class, j, ctx.right_stamp)
    mid_at = ctx.log_prefix[j - ctx.left_stamp, c]
    out = left[:, None] + (mid_at[None, :] - mid_at[:, None]) + right[None, :]
    out[np.tri(j.size, dtype=bool)] = -np.inf
    return out


def constant_class_log_likelihood(ctx: SegmentContext, c: int) -> float:
    """Log-likelihood of the whole segment belonging to class ``c``."""
    ctx._check_class(c)
    return float(ctx.run(c, ctx.left_stamp, ctx.right_stamp))


def log_sum_exp(values: Sequence[float] | np.ndarray) -> float:
    """Max-shifted log of a sum of exponentials."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    m = v.max()
    if v.size == 1 or not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))
