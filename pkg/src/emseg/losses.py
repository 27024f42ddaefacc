"""Training losses on frame log-probabilities.

Every loss returns ``(value, grad)`` where ``grad`` is the gradient with respect
to the logits that produced the ``FrameProbs`` (log-softmax followed by the
probability floor).
"""

from __future__ import annotations

import numpy as np

from .core import LOG_FLOOR, AnnotationSet, FrameProbs, WeightMatrix


def logit_grad(probs: FrameProbs, grad_log_p: np.ndarray) -> np.ndarray:
    """Chain rule through ``max(log_softmax(z), floor)``."""
    g = np.where(probs.log_p > LOG_FLOOR, grad_log_p, 0.0)
    return g - probs.probs * g.sum(axis=1, keepdims=True)


def weighted_ce_loss(probs: FrameProbs, weights: WeightMatrix | np.ndarray,
                     normalizer: float | None = None):
    """``-(1/T) sum_t sum_c w[t, c] log p[t, c]``."""
    w = weights.w if isinstance(weights, WeightMatrix) else np.asarray(weights, float)
    if w.shape != probs.log_p.shape:
        raise ValueError(f"weights {w.shape} do not match probs {probs.log_p.shape}")
    norm = probs.T if normalizer is None else normalizer
    loss = -float(np.sum(w * probs.log_p)) / norm
    return loss, logit_grad(probs, -w / norm)


def transition_loss(probs: FrameProbs, epsilon: float):
    """Truncated absolute change of log-probabilities between consecutive frames."""
    T, C = probs.log_p.shape
    if T < 2:
        return 0.0, np.zeros((T, C))
    delta = np.diff(probs.log_p, axis=0)
    mag = np.abs(delta)
    loss = float(np.minimum(mag, epsilon).sum()) / (T * C)
    d_delta = np.where(mag < epsilon, np.sign(delta), 0.0) / (T * C)
    g = np.zeros((T, C))
    g[1:] += d_delta
    g[:-1] -= d_delta
    return loss, logit_grad(probs, g)


def confidence_loss(probs: FrameProbs, ann: AnnotationSet):
    """Penalize rises of the left class and falls of the right class inside each
    timestamp segment, over frames strictly between the two stamps."""
    T, C = probs.log_p.shape
    g = np.zeros((T, C))
    if len(ann) < 2:
        return 0.0, g
    lp = probs.log_p
    loss = 0.0
    frames, classes = ann.frames, ann.classes
    for (a, b), (l, r) in zip(zip(frames[:-1], frames[1:]), zip(classes[:-1], classes[1:])):
        t = np.arange(a + 1, b)
        if t.size == 0:
            continue
        d_l = lp[t, l] - lp[t - 1, l]
        d_r = lp[t, r] - lp[t - 1, r]
        loss += np.maximum(d_l, 0).sum() + np.maximum(-d_r, 0).sum()
        up = (d_l > 0).astype(float)
        down = -(d_r < 0).astype(float)
        np.add.at(g, (t, l), up)
        np.add.at(g, (t - 1, l), -up)
        np.add.at(g, (t, r), down)
        np.add.at(g, (t - 1, r), -down)
    return float(loss) / T, logit_grad(probs, g / T)
