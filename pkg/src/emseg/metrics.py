"""Segmentation metrics: MoF, edit score, F1@IoU, boundary error and weight-MoF."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import Segment, WeightMatrix, segments_from_framewise


def mof(pred: Sequence[int], gt: Sequence[int]) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    if gt.size == 0:
        raise ValueError("empty label arrays")
    return 100.0 * float(np.mean(pred == gt))


def levenshtein(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def _classes(segs) -> list[int]:
    return [s.class_id if isinstance(s, Segment) else int(s) for s in segs]


def edit_score(pred_segs: Sequence, gt_segs: Sequence) -> float:
    """Normalized segment-level Levenshtein similarity, in percent.

    Accepts segment lists or plain class sequences.
    """
    p, g = _classes(pred_segs), _classes(gt_segs)
    n = max(len(p), len(g))
    if n == 0:
        return 100.0
    return max(0.0, 100.0 * (1.0 - levenshtein(p, g) / n))


def _as_segments(x) -> list[Segment]:
    if len(x) and isinstance(x[0], Segment):
        return list(x)
    return segments_from_framewise(x)


def f1_counts(pred_segs: Sequence, gt_segs: Sequence, tau: float) -> tuple[int, int, int]:
    """True positive, false positive and false negative segment counts.

    Predicted segments are visited in temporal order; each is matched to the
    unmatched same-class ground-truth segment of highest IoU (lowest index on
    ties). A match with IoU >= tau is a true positive and consumes that
    ground-truth segment; anything else is a false positive.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    pred, gt = _as_segments(pred_segs), _as_segments(gt_segs)
    g_start = np.array([s.start for s in gt])
    g_end = np.array([s.end_exclusive for s in gt])
    g_cls = np.array([s.class_id for s in gt])
    used = np.zeros(len(gt), dtype=bool)
    tp = fp = 0
    for p in pred:
        if not len(gt):
            fp += 1
            continue
        inter = np.minimum(p.end_exclusive, g_end) - np.maximum(p.start, g_start)
        union = np.maximum(p.end_exclusive, g_end) - np.minimum(p.start, g_start)
        iou = np.where((g_cls == p.class_id) & ~used, np.clip(inter, 0, None) / union, -1.0)
        best = int(np.argmax(iou))
        if iou[best] >= tau:
            tp += 1
            used[best] = True
        else:
            fp += 1
    return tp, fp, len(gt) - tp


def _f1(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 100.0 * 2 * precision * recall / (precision + recall)


def f1_at_iou(pred_segs: Sequence, gt_segs: Sequence, tau: float) -> float:
    """Segment F1 at IoU threshold ``tau``, in percent (see :func:`f1_counts`)."""
    return _f1(*f1_counts(pred_segs, gt_segs, tau))


def boundary_error_pct(pred_boundaries: Sequence[float], gt_boundaries: Sequence[int], T: int) -> float:
    """Mean duration-normalized absolute boundary error, in percent."""
    p = np.asarray(pred_boundaries, dtype=float)
    g = np.asarray(gt_boundaries, dtype=float)
    if p.shape != g.shape:
        raise ValueError(f"boundary count mismatch: {p.size} vs {g.size}")
    if p.size == 0:
        return 0.0
    return float(np.mean(100.0 * np.abs(p - g) / T))


def weight_mof(weights: WeightMatrix | np.ndarray, gt: Sequence[int]) -> float:
    w = weights.w if isinstance(weights, WeightMatrix) else np.asarray(weights)
    return mof(np.argmax(w, axis=1), gt)


def segmentation_metrics(pred: Sequence[int], gt: Sequence[int]) -> dict[str, float]:
    """MoF, edit and F1@{10,25,50} for one video."""
    ps, gs = segments_from_framewise(pred), segments_from_framewise(gt)
    return {
        "mof": mof(pred, gt),
        "edit": edit_score(ps, gs),
        "f1_10": f1_at_iou(ps, gs, 0.10),
        "f1_25": f1_at_iou(ps, gs, 0.25),
        "f1_50": f1_at_iou(ps, gs, 0.50),
    }


def corpus_metrics(preds: Sequence[Sequence[int]], gts: Sequence[Sequence[int]]) -> dict[str, float]:
    """Corpus scores: frame-pooled MoF, per-video mean edit, F1 from pooled counts."""
    if len(preds) != len(gts) or not gts:
        raise ValueError("need one prediction per ground-truth video")
    segs = [(segments_from_framewise(p), segments_from_framewise(g)) for p, g in zip(preds, gts)]
    correct = sum(int(np.sum(np.asarray(p) == np.asarray(g))) for p, g in zip(preds, gts))
    out = {"mof": 100.0 * correct / sum(len(g) for g in gts),
           "edit": float(np.mean([edit_score(ps, gs) for ps, gs in segs]))}
    for key, tau in (("f1_10", 0.10), ("f1_25", 0.25), ("f1_50", 0.50)):
        counts = np.sum([f1_counts(ps, gs, tau) for ps, gs in segs], axis=0)
        out[key] = _f1(*(int(c) for c in counts))
    return out
