"""Synthetic videos with Poisson segment lengths, plus annotation simulators."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .core import AnnotationSet, Mode, VideoSample, boundaries_from_framewise, segments_from_framewise


class StampPosition(str, enum.Enum):
    RANDOM = "RANDOM"
    START = "START"
    CENTRE = "CENTRE"


@dataclass
class GenConfig:
    n_classes: int = 6
    n_features: int = 16
    mu: float | list[float] = 40.0
    k_range: tuple[int, int] = (4, 8)
    sigma: float = 1.0
    sep: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.k_range = tuple(int(k) for k in self.k_range)
        if self.n_classes < 2 or self.n_features < 1:
            raise ValueError("need n_classes >= 2 and n_features >= 1")
        if np.any(np.asarray(self.mu, dtype=float) <= 0):
            raise ValueError("mean lengths must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if len(self.k_range) != 2 or not 1 <= self.k_range[0] <= self.k_range[1]:
            raise ValueError("k_range must be (min, max) with 1 <= min <= max")

    @property
    def mu_vector(self) -> np.ndarray:
        mu = np.asarray(self.mu, dtype=float)
        return np.full(self.n_classes, float(mu)) if mu.ndim == 0 else mu

    def class_means(self) -> np.ndarray:
        """``C x d`` class centres of norm ``sep``, orthogonal when ``d >= C``."""
        rng = np.random.default_rng([self.seed, 0xC1A55])
        C, d = self.n_classes, self.n_features
        if d >= C:
            q, _ = np.linalg.qr(rng.normal(size=(d, C)))
            m = q.T
        else:
            m = rng.normal(size=(C, d))
            m /= np.linalg.norm(m, axis=1, keepdims=True)
        return self.sep * m

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["k_range"] = list(self.k_range)
        return out


def sample_length(mu: float, rng: np.random.Generator) -> int:
    """Poisson(mu) conditioned on being at least one."""
    while True:
        n = int(rng.poisson(mu))
        if n >= 1:
            return n


def generate_video(cfg: GenConfig, rng: np.random.Generator, video_id: str = "v0",
                   means: np.ndarray | None = None) -> VideoSample:
    means = cfg.class_means() if means is None else means
    mu = cfg.mu_vector
    K = int(rng.integers(cfg.k_range[0], cfg.k_range[1] + 1))
    classes = [int(rng.integers(cfg.n_classes))]
    for _ in range(K - 1):
        c = int(rng.integers(cfg.n_classes - 1))
        classes.append(c + (c >= classes[-1]))
    lengths = [sample_length(mu[c], rng) for c in classes]
    labels = np.repeat(classes, lengths)
    feats = means[labels] + cfg.sigma * rng.normal(size=(labels.size, cfg.n_features))
    return VideoSample(video_id, feats, labels)


def generate_corpus(cfg: GenConfig, n: int, prefix: str = "vid") -> list[VideoSample]:
    """``n`` videos, each from its own seed derived from ``cfg.seed``."""
    means = cfg.class_means()
    seeds = np.random.SeedSequence(cfg.seed).spawn(n)
    width = len(str(max(n - 1, 0)))
    return [generate_video(cfg, np.random.default_rng(s), f"{prefix}{i:0{width}d}", means)
            for i, s in enumerate(seeds)]


def annotate_tss(video: VideoSample, position: StampPosition | str = StampPosition.RANDOM,
                 rng: np.random.Generator | None = None) -> AnnotationSet:
    """One stamp per ground-truth segment."""
    position = StampPosition(position)
    rng = rng or np.random.default_rng()
    stamps = []
    for seg in video.segments:
        if position is StampPosition.START:
            t = seg.start
        elif position is StampPosition.CENTRE:
            t = (seg.start + seg.end_exclusive - 1) // 2
        else:
            t = int(rng.integers(seg.start, seg.end_exclusive))
        stamps.append((t, seg.class_id))
    return AnnotationSet(Mode.TSS, stamps)


def drop_segments(ann: AnnotationSet, miss_rate: float,
                  rng: np.random.Generator | None = None) -> AnnotationSet:
    """Remove each interior stamp independently with probability ``miss_rate``.

    The first and last stamps are always kept.
    """
    if not 0.0 <= miss_rate < 1.0:
        raise ValueError("miss_rate must lie in [0, 1)")
    rng = rng or np.random.default_rng()
    stamps = list(ann.stamps)
    keep = [True] + [bool(rng.random() >= miss_rate) for _ in stamps[1:-1]] + [True]
    kept = [s for s, k in zip(stamps, keep[:len(stamps)]) if k]
    return AnnotationSet(Mode.TSS_MISSING, kept)


def annotate_skiptag(video: VideoSample, K: int, rng: np.random.Generator | None = None) -> AnnotationSet:
    """``K`` stamps, one drawn uniformly inside each of ``K`` equal spans of the video."""
    T = video.T
    if K < 2:
        raise ValueError("SkipTag needs K >= 2")
    if K > T:
        raise ValueError(f"cannot place {K} stamps in {T} frames")
    rng = rng or np.random.default_rng()
    edges = (np.arange(K + 1) * T) // K
    frames = [int(rng.integers(lo, hi)) for lo, hi in zip(edges[:-1], edges[1:])]
    return AnnotationSet(Mode.SKIPTAG, [(t, int(video.gt_labels[t])) for t in frames])


def boundaries_between(video: VideoSample, ann: AnnotationSet) -> np.ndarray:
    """Number of ground-truth boundaries inside each timestamp segment."""
    b = boundaries_from_framewise(video.gt_labels)
    f = ann.frames
    # boundaries j with a < j <= b
    return np.searchsorted(b, f[1:], side="right") - np.searchsorted(b, f[:-1], side="right")


@dataclass
class CorpusStats:
    n_videos: int = 0
    n_frames: int = 0
    n_segments: int = 0
    segments_per_video: dict = field(default_factory=dict)
    n_stamps: int = 0
    missed_segments: int = 0
    timestamp_segments: int = 0
    spans_with_2plus_boundaries: int = 0
    spans_over_cap: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def corpus_stats(videos: Sequence[VideoSample],
                 anns: Sequence[AnnotationSet] | None = None) -> CorpusStats:
    """Summary counts; ``spans_over_cap`` counts timestamp segments containing
    more than two ground-truth boundaries, which no E-step case explains."""
    counts = [len(segments_from_framewise(v.gt_labels)) for v in videos]
    st = CorpusStats(n_videos=len(videos), n_frames=int(sum(v.T for v in videos)),
                     n_segments=int(sum(counts)))
    if counts:
        st.segments_per_video = {"mean": float(np.mean(counts)), "min": int(min(counts)),
                                 "max": int(max(counts))}
    for v, a in zip(videos, anns or []):
        st.n_stamps += len(a)
        covered = {int(np.searchsorted(boundaries_from_framewise(v.gt_labels), t, side="right"))
                   for t in a.frames}
        st.missed_segments += len(segments_from_framewise(v.gt_labels)) - len(covered)
        nb = boundaries_between(v, a)
        st.timestamp_segments += int(nb.size)
        st.spans_with_2plus_boundaries += int(np.sum(nb >= 2))
        st.spans_over_cap += int(np.sum(nb > 2))
    return st
