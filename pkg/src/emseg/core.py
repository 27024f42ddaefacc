"""Shared domain types and frame/segment label conversions.

Frames are 0-indexed and segments are half-open ``[start, end_exclusive)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_softmax

LOG_FLOOR = float(np.log(1e-12))


class Mode(str, enum.Enum):
    TSS = "TSS"
    TSS_MISSING = "TSS_MISSING"
    SKIPTAG = "SKIPTAG"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProblemConfig:
    """Problem-wide constants shared by every module."""

    n_classes: int
    n_features: int
    class_names: tuple[str, ...] = ()
    mean_lengths: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_classes < 1 or self.n_features < 1:
            raise ValueError("n_classes and n_features must be positive")
        if not self.class_names:
            object.__setattr__(self, "class_names",
                               tuple(f"c{i}" for i in range(self.n_classes)))
        if len(self.class_names) != self.n_classes:
            raise ValueError("class_names must have n_classes entries")


@dataclass(frozen=True)
class Segment:
    start: int
    end_exclusive: int
    class_id: int

    def __post_init__(self):
        if not self.start < self.end_exclusive:
            raise ValueError(f"empty segment {self}")

    @property
    def length(self) -> int:
        return self.end_exclusive - self.start


@dataclass(frozen=True, eq=False)
class VideoSample:
    id: str
    features: np.ndarray
    gt_labels: np.ndarray | None = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ValueError(f"video {self.id!r}: features must be a nonempty T x d matrix")
        object.__setattr__(self, "features", _frozen(f))
        if self.gt_labels is not None:
            y = np.asarray(self.gt_labels)
            if y.shape != (f.shape[0],):
                raise ValueError(f"video {self.id!r}: labels length {y.shape} != T={f.shape[0]}")
            if y.size and y.min() < 0:
                raise ValueError(f"video {self.id!r}: negative class id")
            object.__setattr__(self, "gt_labels", _frozen(y.astype(np.int64)))

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def segments(self) -> list[Segment]:
        if self.gt_labels is None:
            raise ValueError(f"video {self.id!r} has no ground-truth labels")
        return segments_from_framewise(self.gt_labels)

    def __eq__(self, other):
        if not isinstance(other, VideoSample):
            return NotImplemented
        same_labels = (self.gt_labels is None and other.gt_labels is None) or (
            self.gt_labels is not None and other.gt_labels is not None
            and np.array_equal(self.gt_labels, other.gt_labels))
        return (self.id == other.id and same_labels
                and np.array_equal(self.features, other.features))


@dataclass(frozen=True)
class AnnotationSet:
    """Annotated frames with their class labels, ordered by frame."""

    mode: Mode
    stamps: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        stamps = tuple((int(t), int(c)) for t, c in self.stamps)
        object.__setattr__(self, "stamps", stamps)
        frames = [t for t, _ in stamps]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("stamps must be strictly increasing in frame")
        if frames and frames[0] < 0:
            raise ValueError("stamp frames must be nonnegative")
        if self.mode is Mode.TSS:
            classes = [c for _, c in stamps]
            if any(a == b for a, b in zip(classes, classes[1:])):
                raise ValueError("consecutive TSS stamps must have different classes")

    @property
    def frames(self) -> np.ndarray:
        return np.array([t for t, _ in self.stamps], dtype=np.int64)

    @property
    def classes(self) -> np.ndarray:
        return np.array([c for _, c in self.stamps], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.stamps)

    def check_within(self, T: int) -> None:
        if self.stamps and self.stamps[-1][0] >= T:
            raise ValueError(f"stamp frame {self.stamps[-1][0]} outside video of length {T}")

    def with_mode(self, mode: Mode) -> "AnnotationSet":
        return AnnotationSet(mode, self.stamps)


@dataclass(frozen=True, eq=False)
class FrameProbs:
    """Per-frame class log-probabilities, floored at ``LOG_FLOOR``."""

    log_p: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.log_p, dtype=float)
        if lp.ndim != 2:
            raise ValueError("log_p must be T x C")
        object.__setattr__(self, "log_p", _frozen(np.maximum(lp, LOG_FLOOR)))

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> "FrameProbs":
        return cls(log_softmax(np.asarray(logits, dtype=float), axis=1))

    @classmethod
    def from_probs(cls, p: np.ndarray) -> "FrameProbs":
        p = np.asarray(p, dtype=float)
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        rows = p.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            return cls(np.log(p / rows))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_p)

    @property
    def T(self) -> int:
        return self.log_p.shape[0]

    @property
    def C(self) -> int:
        return self.log_p.shape[1]


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Posterior soft weights; each row is a distribution over classes."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise ValueError("w must be T x C")
        if np.any(w < -1e-12):
            raise ValueError("weights must be nonnegative")
        if not np.allclose(w.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("weight rows must sum to 1")
        object.__setattr__(self, "w", _frozen(np.clip(w, 0.0, None)))

    @classmethod
    def one_hot(cls, labels: Sequence[int], n_classes: int) -> "WeightMatrix":
        labels = np.asarray(labels, dtype=np.int64)
        w = np.zeros((labels.size, n_classes))
        w[np.arange(labels.size), labels] = 1.0
        return cls(w)

    def argmax(self) -> np.ndarray:
        # np.argmax breaks ties toward the lowest index
        return np.argmax(self.w, axis=1)


def segments_from_framewise(labels: Sequence[int]) -> list[Segment]:
    """Run-length encode a frame labelling into segments."""
    y = np.asarray(labels)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("labels must be a nonempty 1-d array")
    change = np.flatnonzero(y[1:] != y[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [y.size]))
    return [Segment(int(s), int(e), int(y[s])) for s, e in zip(starts, ends)]


def framewise_from_segments(segs: Sequence[Segment], T: int) -> np.ndarray:
    """Expand segments tiling ``[0, T)`` back into frame labels."""
    out = np.empty(T, dtype=np.int64)
    pos = 0
    for seg in segs:
        if seg.start != pos:
            kind = "gap" if seg.start > pos else "overlap"
            raise ValueError(f"{kind} at frame {pos} before segment {seg}")
        out[seg.start:seg.end_exclusive] = seg.class_id
        pos = seg.end_exclusive
    if pos != T:
        raise ValueError(f"segments cover [0, {pos}) but T={T}")
    return out


def boundaries_from_framewise(labels: Sequence[int]) -> np.ndarray:
    """Start frames of every segment after the first."""
    return np.array([s.start for s in segments_from_framewise(labels)[1:]], dtype=np.int64)
