"""Frame scorer, M-step optimizers, baselines and the E-M training driver."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import AnnotationSet, FrameProbs, Mode, VideoSample, WeightMatrix, boundaries_from_framewise
from .em_gen import e_step_gen
from .em_tss import EStepResult, e_step_tss, expected_boundaries
from .likelihood import STRICT
from .losses import confidence_loss, transition_loss, weighted_ce_loss
from .priors import LengthPrior

log = logging.getLogger(__name__)

EM_TSS = "em-tss"
EM_GEN = "em-gen"
SKIPTAG = "skiptag"
EM_MODES = (EM_TSS, EM_GEN, SKIPTAG)


@dataclass(frozen=True, eq=False)
class ScorerParams:
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, n_classes: int, n_features: int) -> "ScorerParams":
        return cls(np.zeros((n_classes, n_features)), np.zeros(n_classes))

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.W.ravel(), self.b))

    @classmethod
    def from_vector(cls, v: np.ndarray, n_classes: int, n_features: int) -> "ScorerParams":
        k = n_classes * n_features
        return cls(v[:k].reshape(n_classes, n_features).copy(), v[k:].copy())

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerParams":
        return cls(np.asarray(d["W"], dtype=float), np.asarray(d["b"], dtype=float))


class LinearSoftmaxScorer:
    """Per-frame linear-softmax classifier ``softmax(W f + b)``.

    Any object with the same ``init_params / logits / backward`` methods can
    be used as the scorer in :func:`run_em`.
    """

    def init_params(self, n_classes: int, n_features: int) -> ScorerParams:
        return ScorerParams.zeros(n_classes, n_features)

    def logits(self, params: ScorerParams, features: np.ndarray) -> np.ndarray:
        if features.ndim != 2 or features.shape[1] != params.W.shape[1]:
            raise ValueError(f"features {features.shape} do not match W {params.W.shape}")
        return features @ params.W.T + params.b

    def backward(self, params: ScorerParams, features: np.ndarray,
                 grad_logits: np.ndarray) -> ScorerParams:
        return ScorerParams(grad_logits.T @ features, grad_logits.sum(axis=0))


def scorer_forward(params: ScorerParams, features: np.ndarray) -> FrameProbs:
    return FrameProbs.from_logits(LinearSoftmaxScorer().logits(params, np.asarray(features, float)))


@dataclass
class TrainConfig:
    n_init: int = 30
    n_max: int = 5
    m_iters: int = 10
    lr: float = 5e-4
    lambda_tr: float = 0.15
    lambda_conf: float = 0.075
    epsilon: float = 4.0
    seed: int = 0
    optimizer: str = "gd"
    init_optimizer: str | None = None
    init_lr: float | None = None
    gtol: float = 1e-8
    max_lbfgs_iter: int = 5000
    prior: str = "sample"
    boundary_range: str = STRICT
    window: int | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_init < 0 or self.n_max < 1 or self.m_iters < 0:
            raise ValueError("n_init >= 0, n_max >= 1 and m_iters >= 0 are required")
        if not self.lr > 0 or not self.epsilon > 0:
            raise ValueError("lr and epsilon must be positive")
        if self.lambda_tr < 0 or self.lambda_conf < 0:
            raise ValueError("loss weights must be nonnegative")
        for opt in (self.optimizer, self.init_optimizer):
            if opt is not None and opt not in ("gd", "adam", "lbfgs"):
                raise ValueError(f"unknown optimizer {opt!r}")
        if self.prior not in ("sample", "noninf", "uniform"):
            raise ValueError(f"unknown prior mode {self.prior!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class Objective:
    """Frame-pooled training loss over a corpus.

    Each video contributes its per-video loss times ``T_v / sum(T)``, so the
    weighted cross-entropy term equals ``-sum(Q_v) / sum(T_v)``.
    """

    def __init__(self, videos: Sequence[VideoSample], weights: Sequence[np.ndarray],
                 anns: Sequence[AnnotationSet] | None = None, lambda_tr: float = 0.0,
                 lambda_conf: float = 0.0, epsilon: float = 4.0, normalizer: float | None = None,
                 scorer: LinearSoftmaxScorer | None = None):
        self.scorer = scorer or LinearSoftmaxScorer()
        self.X = np.concatenate([v.features for v in videos])
        self.weights = np.concatenate([np.asarray(w, float) for w in weights])
        self.lengths = [v.T for v in videos]
        self.offsets = np.concatenate(([0], np.cumsum(self.lengths)))
        self.anns = anns
        self.lambda_tr, self.lambda_conf, self.epsilon = lambda_tr, lambda_conf, epsilon
        self.total = float(sum(self.lengths)) if normalizer is None else float(normalizer)
        self.n_classes = self.weights.shape[1]
        self.n_features = self.X.shape[1]

    def evaluate(self, params: ScorerParams):
        """Return ``(total, parts, grad)`` with ``parts`` the unweighted loss terms."""
        probs = FrameProbs.from_logits(self.scorer.logits(params, self.X))
        l_em, g = weighted_ce_loss(probs, self.weights, normalizer=self.total)
        parts = {"loss_em": l_em, "loss_tr": 0.0, "loss_conf": 0.0}
        aux = self.lambda_tr > 0 or self.lambda_conf > 0
        if aux:
            g = g.copy()
            for i, T in enumerate(self.lengths):
                lo, hi = self.offsets[i], self.offsets[i + 1]
                share = T / self.total
                pv = FrameProbs(probs.log_p[lo:hi])
                if self.lambda_tr > 0:
                    lt, gt = transition_loss(pv, self.epsilon)
                    parts["loss_tr"] += share * lt
                    g[lo:hi] += self.lambda_tr * share * gt
                if self.lambda_conf > 0 and self.anns is not None:
                    lc, gc = confidence_loss(pv, self.anns[i])
                    parts["loss_conf"] += share * lc
                    g[lo:hi] += self.lambda_conf * share * gc
        total = l_em + self.lambda_tr * parts["loss_tr"] + self.lambda_conf * parts["loss_conf"]
        return total, parts, self.scorer.backward(params, self.X, g)

    def vector_fn(self, v: np.ndarray):
        total, _, grad = self.evaluate(ScorerParams.from_vector(v, self.n_classes, self.n_features))
        return total, grad.to_vector()


def optimize(objective: Objective, params: ScorerParams, epochs: int, optimizer: str = "gd",
             lr: float = 5e-4, gtol: float = 1e-8, max_iter: int = 5000) -> ScorerParams:
    """Run ``epochs`` full-batch updates (or L-BFGS to ``gtol``)."""
    if epochs <= 0:
        return params
    v = params.to_vector()
    if optimizer == "lbfgs":
        res = minimize(objective.vector_fn, v, jac=True, method="L-BFGS-B",
                       options={"gtol": gtol, "ftol": 0.0, "maxiter": max_iter, "maxcor": 20})
        # line search guarantees descent; keep the start point if it did not
        f0, _ = objective.vector_fn(v)
        v = res.x if res.fun <= f0 else v
    elif optimizer == "gd":
        for _ in range(epochs):
            _, g = objective.vector_fn(v)
            v = v - lr * g
    elif optimizer == "adam":
        m = np.zeros_like(v)
        s = np.zeros_like(v)
        b1, b2, eps = 0.9, 0.999, 1e-8
        for t in range(1, epochs + 1):
            _, g = objective.vector_fn(v)
            m = b1 * m + (1 - b1) * g
            s = b2 * s + (1 - b2) * g * g
            v = v - lr * (m / (1 - b1 ** t)) / (np.sqrt(s / (1 - b2 ** t)) + eps)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    return ScorerParams.from_vector(v, objective.n_classes, objective.n_features)


def _stamp_weights(video: VideoSample, ann: AnnotationSet, n_classes: int) -> np.ndarray:
    w = np.zeros((video.T, n_classes))
    w[ann.frames, ann.classes] = 1.0
    return w


def naive_init(videos: Sequence[VideoSample], anns: Sequence[AnnotationSet], cfg: TrainConfig,
               n_classes: int, params: ScorerParams | None = None) -> ScorerParams:
    """Cross-entropy on the annotated frames only."""
    if any(len(a) == 0 for a in anns):
        raise ValueError("every video needs at least one annotated frame")
    params = params or ScorerParams.zeros(n_classes, videos[0].d)
    n_stamps = sum(len(a) for a in anns)
    obj = Objective(videos, [_stamp_weights(v, a, n_classes) for v, a in zip(videos, anns)],
                    normalizer=n_stamps)
    return optimize(obj, params, cfg.n_init, cfg.init_optimizer or cfg.optimizer,
                    cfg.init_lr or cfg.lr, cfg.gtol, cfg.max_lbfgs_iter)


def uniform_baseline_labels(ann: AnnotationSet, T: int) -> np.ndarray:
    """Hard labels with every boundary at the midpoint between consecutive stamps."""
    if len(ann) == 0:
        raise ValueError("no annotated timestamps")
    frames, classes = ann.frames, ann.classes
    out = np.empty(T, dtype=np.int64)
    out[:] = classes[0]
    for k in range(1, len(frames)):
        s = (frames[k - 1] + frames[k] + 1) // 2
        out[s:] = classes[k]
    return out


def fit_hard_labels(videos: Sequence[VideoSample], labels: Sequence[np.ndarray], cfg: TrainConfig,
                    n_classes: int, epochs: int, params: ScorerParams | None = None) -> ScorerParams:
    """Supervised training on one-hot frame labels (full supervision, Uniform baseline)."""
    params = params or ScorerParams.zeros(n_classes, videos[0].d)
    obj = Objective(videos, [WeightMatrix.one_hot(y, n_classes).w for y in labels])
    return optimize(obj, params, epochs, cfg.optimizer, cfg.lr, cfg.gtol, cfg.max_lbfgs_iter)


def _e_step(mode: str, probs: FrameProbs, ann: AnnotationSet, prior, cfg: TrainConfig,
            video_id: str) -> EStepResult:
    if mode == EM_TSS:
        return e_step_tss(probs, ann, prior, cfg.boundary_range, video_id)
    gen_mode = Mode.SKIPTAG if mode == SKIPTAG else Mode.TSS_MISSING
    return e_step_gen(probs, ann, prior, gen_mode, cfg.window, cfg.boundary_range, video_id)


def e_step_corpus(mode: str, params: ScorerParams, videos: Sequence[VideoSample],
                  anns: Sequence[AnnotationSet], prior: LengthPrior | None, cfg: TrainConfig,
                  scorer: LinearSoftmaxScorer | None = None) -> list[EStepResult]:
    """E-step over every video; videos are independent and may run in parallel."""
    scorer = scorer or LinearSoftmaxScorer()

    def one(v, a):
        return _e_step(mode, FrameProbs.from_logits(scorer.logits(params, v.features)),
                       a, prior, cfg, v.id)

    if cfg.n_jobs == 1:
        return [one(v, a) for v, a in zip(videos, anns)]
    from joblib import Parallel, delayed
    # results come back in input order, so reductions stay deterministic
    return Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(one)(v, a) for v, a in zip(videos, anns))


def posterior_quality(results: Sequence[EStepResult], videos: Sequence[VideoSample],
                      mode: str) -> tuple[float | None, float | None]:
    """Weight-MoF and mean boundary error (percent) against ground truth, if available."""
    from .metrics import boundary_error_pct

    if any(v.gt_labels is None for v in videos):
        return None, None
    correct = sum(int((r.weights.argmax() == v.gt_labels).sum()) for r, v in zip(results, videos))
    wmof = 100.0 * correct / sum(v.T for v in videos)
    if mode != EM_TSS:
        return wmof, None
    errs = []
    for r, v in zip(results, videos):
        gt_b = boundaries_from_framewise(v.gt_labels)
        est = expected_boundaries(r.posteriors)
        if len(est) == len(gt_b) and est:
            errs.append(boundary_error_pct(est, gt_b, v.T))
    return wmof, (float(np.mean(errs)) if errs else None)


@dataclass
class EMResult:
    params: ScorerParams
    diagnostics: list[dict] = field(default_factory=list)
    e_results: list[EStepResult] = field(default_factory=list)


def run_em(videos: Sequence[VideoSample], anns: Sequence[AnnotationSet], cfg: TrainConfig,
           mode: str = EM_TSS, prior: LengthPrior | None = None, n_classes: int | None = None,
           params: ScorerParams | None = None,
           callback: Callable[[int, ScorerParams], None] | None = None) -> EMResult:
    """Naive initialization followed by ``cfg.m_iters`` E-M iterations.

    Diagnostics hold one row per E-step (``iteration`` 0..M) with the
    observed-data log-likelihood at the parameters used for that E-step, plus
    the M-step losses that followed it (the final row, at ``Theta^(M)``, has no
    M-step).
    """
    if mode not in EM_MODES:
        raise ValueError(f"unknown E-M mode {mode!r}")
    if len(videos) != len(anns) or not videos:
        raise ValueError("need one annotation set per video")
    for v, a in zip(videos, anns):
        try:
            a.check_within(v.T)
        except ValueError as e:
            raise ValueError(f"video {v.id!r}: {e}") from e
    C = n_classes or 1 + max(max(a.classes.max() for a in anns if len(a)),
                             max((int(v.gt_labels.max()) for v in videos if v.gt_labels is not None),
                                 default=0))
    params = params if params is not None else naive_init(videos, anns, cfg, C)
    diags = []
    results: list[EStepResult] = []
    for m in range(cfg.m_iters + 1):
        t0 = time.perf_counter()
        results = e_step_corpus(mode, params, videos, anns, prior, cfg)
        e_time = time.perf_counter() - t0
        wmof, berr = posterior_quality(results, videos, mode)
        row = {"iteration": m, "log_likelihood": float(sum(r.log_likelihood for r in results)),
               "weight_mof": wmof, "boundary_error": berr, "e_time": e_time,
               "loss": None, "loss_em": None, "loss_tr": None, "loss_conf": None, "m_time": None}
        if m < cfg.m_iters:
            obj = Objective(videos, [r.weights.w for r in results], anns, cfg.lambda_tr,
                            cfg.lambda_conf, cfg.epsilon)
            t0 = time.perf_counter()
            params = optimize(obj, params, cfg.n_max, cfg.optimizer, cfg.lr, cfg.gtol,
                              cfg.max_lbfgs_iter)
            row["m_time"] = time.perf_counter() - t0
            total, parts, _ = obj.evaluate(params)
            row.update(loss=total, **parts)
            if callback is not None:
                callback(m, params)
        log.info("iter %d loglik %.6f weight_mof %s", m, row["log_likelihood"], wmof)
        diags.append(row)
    return EMResult(params, diags, results)
