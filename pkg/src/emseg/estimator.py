"""scikit-learn style estimator wrapping the training modes."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import AnnotationSet, Mode, VideoSample
from .metrics import corpus_metrics
from .priors import LengthPrior
from .trainer import (
    EM_MODES,
    TrainConfig,
    fit_hard_labels,
    naive_init,
    run_em,
    scorer_forward,
    uniform_baseline_labels,
)

MODES = ("full", "naive", "uniform") + EM_MODES


def check_videos(X, n_features: int | None = None) -> list[np.ndarray]:
    """Validate a sequence of per-video ``T x d`` feature matrices."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    out = []
    for i, x in enumerate(X):
        x = x.features if isinstance(x, VideoSample) else x
        x = check_array(x, dtype=np.float64, ensure_2d=True)
        if n_features is not None and x.shape[1] != n_features:
            raise ValueError(f"video {i} has {x.shape[1]} features, expected {n_features}")
        out.append(x)
    if not out:
        raise ValueError("no videos given")
    return out


class TimestampSegmenter(ClassifierMixin, BaseEstimator):
    """Frame classifier trained from timestamp or SkipTag annotations.

    ``fit(X, y)`` takes a list of ``T x d`` feature arrays and, per video,
    an :class:`AnnotationSet` (weak modes) or a frame label array
    (``mode="full"``). ``predict`` returns one label array per video.

    Modes: ``full`` (all frame labels), ``naive`` (annotated frames only),
    ``uniform`` (midpoint hard labels), ``em-tss``, ``em-gen`` and ``skiptag``.
    """

    def __init__(self, mode="em-tss", n_classes=None, n_init=30, n_max=5, m_iters=10, lr=5e-4,
                 lambda_tr=0.15, lambda_conf=0.075, epsilon=4.0, optimizer="gd",
                 init_optimizer=None, init_lr=None, gtol=1e-8, prior="sample",
                 boundary_range="strict", window=None, n_jobs=1, seed=0):
        self.mode = mode
        self.n_classes = n_classes
        self.n_init = n_init
        self.n_max = n_max
        self.m_iters = m_iters
        self.lr = lr
        self.lambda_tr = lambda_tr
        self.lambda_conf = lambda_conf
        self.epsilon = epsilon
        self.optimizer = optimizer
        self.init_optimizer = init_optimizer
        self.init_lr = init_lr
        self.gtol = gtol
        self.prior = prior
        self.boundary_range = boundary_range
        self.window = window
        self.n_jobs = n_jobs
        self.seed = seed

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            n_init=self.n_init, n_max=self.n_max, m_iters=self.m_iters, lr=self.lr,
            lambda_tr=self.lambda_tr, lambda_conf=self.lambda_conf, epsilon=self.epsilon,
            seed=self.seed, optimizer=self.optimizer, init_optimizer=self.init_optimizer,
            init_lr=self.init_lr, gtol=self.gtol, prior=self.prior,
            boundary_range=self.boundary_range, window=self.window, n_jobs=self.n_jobs)

    def _length_prior(self, anns, feats, length_prior):
        if self.mode not in EM_MODES or self.prior == "uniform":
            return None
        if self.prior == "sample":
            if length_prior is None:
                raise ValueError("prior='sample' needs length_prior (see priors.estimate_mu)")
            return length_prior
        # Non-informative: the shared value only matters for the Poisson gaps of
        # the generalized E-step; use the average spacing between stamps.
        value = np.mean([x.shape[0] / max(len(a), 1) for x, a in zip(feats, anns)])
        return LengthPrior.non_informative(self.n_classes_, value)

    def fit(self, X, y, gt_labels: Sequence[np.ndarray] | None = None,
            length_prior: LengthPrior | None = None, params=None):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        feats = check_videos(X)
        if len(y) != len(feats):
            raise ValueError(f"{len(feats)} videos but {len(y)} targets")
        d = feats[0].shape[1]
        check_videos(feats, d)
        self.n_features_in_ = d
        cfg = self.train_config()

        if self.mode == "full":
            labels = [np.asarray(t, dtype=np.int64) for t in y]
            self.n_classes_ = self.n_classes or int(max(t.max() for t in labels)) + 1
            videos = [VideoSample(str(i), x, t) for i, (x, t) in enumerate(zip(feats, labels))]
            epochs = cfg.n_init + cfg.m_iters * cfg.n_max
            self.params_ = fit_hard_labels(videos, labels, cfg, self.n_classes_, epochs, params)
            self.diagnostics_ = []
        else:
            anns = [a if isinstance(a, AnnotationSet) else AnnotationSet(Mode.TSS, a) for a in y]
            self.n_classes_ = self.n_classes or int(max(a.classes.max() for a in anns)) + 1
            gts = gt_labels if gt_labels is not None else [None] * len(feats)
            videos = [VideoSample(str(i), x, g) for i, (x, g) in enumerate(zip(feats, gts))]
            for v, a in zip(videos, anns):
                a.check_within(v.T)
            init = naive_init(videos, anns, cfg, self.n_classes_, params)
            self.diagnostics_ = []
            if self.mode == "naive":
                self.params_ = init
            elif self.mode == "uniform":
                labels = [uniform_baseline_labels(a, v.T) for v, a in zip(videos, anns)]
                self.params_ = fit_hard_labels(videos, labels, cfg, self.n_classes_,
                                               cfg.m_iters * cfg.n_max, init)
            else:
                prior = self._length_prior(anns, feats, length_prior)
                res = run_em(videos, anns, cfg, self.mode, prior, self.n_classes_, init)
                self.params_ = res.params
                self.diagnostics_ = res.diagnostics
                self.e_results_ = res.e_results
        self.classes_ = np.arange(self.n_classes_)
        return self

    def predict_log_proba(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "params_")
        return [scorer_forward(self.params_, x).log_p
                for x in check_videos(X, self.n_features_in_)]

    def predict_proba(self, X) -> list[np.ndarray]:
        return [np.exp(lp) for lp in self.predict_log_proba(X)]

    def predict(self, X) -> list[np.ndarray]:
        return [np.argmax(lp, axis=1) for lp in self.predict_log_proba(X)]

    def score(self, X, y, sample_weight=None) -> float:
        """Frame accuracy pooled over videos (MoF as a fraction)."""
        return corpus_metrics(self.predict(X), [np.asarray(t) for t in y])["mof"] / 100.0
