"""Expectation-Maximization action segmentation from timestamp and SkipTag labels."""

from .core import (
    AnnotationSet,
    FrameProbs,
    Mode,
    ProblemConfig,
    Segment,
    VideoSample,
    WeightMatrix,
    framewise_from_segments,
    segments_from_framewise,
)
from .estimator import TimestampSegmenter

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "FrameProbs",
    "Mode",
    "ProblemConfig",
    "Segment",
    "TimestampSegmenter",
    "VideoSample",
    "WeightMatrix",
    "framewise_from_segments",
    "segments_from_framewise",
    "__version__",
]
