"""Command-line entry point: generate, train, evaluate, inspect-posterior."""

from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import AnnotationSet, FrameProbs, Mode, boundaries_from_framewise
from .em_gen import e_step_gen
from .em_tss import e_step_tss, expected_boundaries
from .estimator import MODES, TimestampSegmenter
from .io import (
    DataFormatError,
    atomic_write_json,
    atomic_write_text,
    config_hash,
    dumps_jsonl,
    file_sha256,
    load_config,
    load_dataset,
    read_jsonl,
    save_dataset,
)
from .metrics import boundary_error_pct, corpus_metrics
from .priors import LengthPrior, estimate_mu
from .synthdata import (
    GenConfig,
    annotate_skiptag,
    annotate_tss,
    corpus_stats,
    drop_segments,
    generate_corpus,
)
from .trainer import EM_GEN, EM_TSS, SKIPTAG, ScorerParams, TrainConfig, scorer_forward

log = logging.getLogger("emseg")

ANNOTATION_DEFAULTS = {"position": "RANDOM", "miss_rate": 0.0, "skiptag_k": None, "seed": 0}


class CLIError(Exception):
    pass


def _section(cfg: dict, name: str, allowed: set | None = None) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise CLIError(f"config section [{name}] must be a table")
    if allowed is not None and set(sec) - allowed:
        raise CLIError(f"unknown keys in [{name}]: {sorted(set(sec) - allowed)}")
    return dict(sec)


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(out_dir: Path, command: str, cfg: dict, seed, inputs: dict) -> None:
    atomic_write_json(out_dir / "manifest.json", {
        "command": command,
        "version": __version__,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "git_describe": git_describe(),
        "inputs": {name: file_sha256(p) for name, p in inputs.items() if p is not None},
    })


def simulate_annotations(videos, mode: str, ann_cfg: dict) -> list[AnnotationSet]:
    """Annotate videos with the simulator appropriate for a training mode."""
    rng = np.random.default_rng(ann_cfg["seed"])
    if mode == SKIPTAG:
        k = ann_cfg["skiptag_k"]
        if k is None:
            k = int(round(np.mean([len(v.segments) for v in videos])))
        return [annotate_skiptag(v, max(2, min(k, v.T)), rng) for v in videos]
    anns = [annotate_tss(v, ann_cfg["position"], rng) for v in videos]
    if mode == EM_GEN or ann_cfg["miss_rate"] > 0:
        anns = [drop_segments(a, ann_cfg["miss_rate"], rng) for a in anns]
    return anns


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    return "" if x is None else repr(float(x)) if isinstance(x, (float, np.floating)) else x


def _length_prior(args, train_videos, n_classes: int, seed: int) -> LengthPrior | None:
    if args.prior != "sample":
        return None
    if args.prior_sample_id is not None:
        chosen = [v for v in train_videos if v.id == args.prior_sample_id]
        if not chosen:
            raise CLIError(f"--prior-sample-id {args.prior_sample_id!r} not among training videos")
    else:
        labelled = [v for v in train_videos if v.gt_labels is not None]
        if not labelled:
            raise CLIError("--prior sample needs at least one video with labels")
        chosen = [labelled[int(np.random.default_rng(seed).integers(len(labelled)))]]
    if chosen[0].gt_labels is None:
        raise CLIError(f"video {chosen[0].id!r} has no labels to estimate lengths from")
    return estimate_mu(chosen, n_classes)


def cmd_generate(args) -> None:
    cfg = load_config(args.config) if args.config else {}
    gen_keys = cfg.get("generator", {k: v for k, v in cfg.items() if not isinstance(v, dict)})
    gen = GenConfig.from_dict(dict(gen_keys))
    if args.seed is not None:
        gen.seed = args.seed
    videos = generate_corpus(gen, args.n)
    anns = None
    if "annotation" in cfg:
        ann_cfg = {**ANNOTATION_DEFAULTS, **_section(cfg, "annotation", set(ANNOTATION_DEFAULTS) | {"kind"})}
        kind = ann_cfg.pop("kind", "tss")
        mode = {"tss": EM_TSS, "missing": EM_GEN, "skiptag": SKIPTAG}.get(kind)
        if mode is None:
            raise CLIError(f"annotation kind must be tss, missing or skiptag, got {kind!r}")
        anns = simulate_annotations(videos, mode, ann_cfg)
    out = Path(args.out)
    save_dataset(out, videos, anns)
    stats = corpus_stats(videos, anns).to_dict()
    stats["generator"] = gen.to_dict()
    atomic_write_json(out.parent / "stats.json", stats)
    write_manifest(out.parent, "generate", {"generator": gen.to_dict(), "annotation": cfg.get("annotation"),
                                            "n": args.n}, gen.seed,
                   {"config": args.config})
    print(f"wrote {len(videos)} videos to {out}")


def _split(videos, anns, test_fraction: float):
    n_test = int(math.ceil(len(videos) * test_fraction)) if test_fraction > 0 else 0
    n_test = min(n_test, len(videos) - 1)
    cut = len(videos) - n_test
    return videos[:cut], anns[:cut], videos[cut:]


def cmd_train(args) -> None:
    cfg = load_config(args.config) if args.config else {}
    train_keys = _section(cfg, "train")
    if args.window is not None:
        train_keys["window"] = args.window
    train_keys["prior"] = args.prior
    train_keys["n_jobs"] = args.jobs
    try:
        tcfg = TrainConfig.from_dict(train_keys)
    except (TypeError, ValueError) as e:
        raise CLIError(f"bad [train] config: {e}") from e
    ann_cfg = {**ANNOTATION_DEFAULTS, "seed": tcfg.seed,
               **_section(cfg, "annotation", set(ANNOTATION_DEFAULTS))}
    split = _section(cfg, "split", {"test_fraction"})
    test_fraction = float(split.get("test_fraction", 0.2))

    videos, anns = load_dataset(args.data)
    if not videos:
        raise CLIError(f"{args.data}: no videos")
    d = videos[0].d
    for v in videos:
        if v.d != d:
            raise CLIError(f"video {v.id!r} has {v.d} features, expected {d}")
    mode = args.mode
    if any(a is None for a in anns) and mode != "full":
        missing = [i for i, a in enumerate(anns) if a is None]
        sim = simulate_annotations([videos[i] for i in missing],
                                   SKIPTAG if mode == SKIPTAG else EM_GEN if mode == EM_GEN else EM_TSS,
                                   ann_cfg)
        for i, a in zip(missing, sim):
            anns[i] = a
    train_v, train_a, test_v = _split(videos, anns, test_fraction)

    C = cfg.get("n_classes") or 1 + max(
        max((int(v.gt_labels.max()) for v in videos if v.gt_labels is not None), default=0),
        max((int(a.classes.max()) for a in anns if a is not None and len(a)), default=0))
    est = TimestampSegmenter(mode=mode, n_classes=C, **{
        k: v for k, v in tcfg.to_dict().items() if k in TimestampSegmenter().get_params()})
    gt = [v.gt_labels for v in train_v] if all(v.gt_labels is not None for v in train_v) else None
    if mode == "full":
        if gt is None:
            raise CLIError("--mode full needs ground-truth labels for every training video")
        est.fit(train_v, gt)
    else:
        prior = _length_prior(args, train_v, C, tcfg.seed) if mode in (EM_TSS, EM_GEN, SKIPTAG) else None
        est.fit(train_v, train_a, gt_labels=gt, length_prior=prior)

    out = Path(args.out)
    atomic_write_json(out / "params.json", {"mode": mode, "n_classes": C, "n_features": d,
                                            **est.params_.to_dict()})
    cols = ["iteration", "loss", "loss_em", "loss_tr", "loss_conf", "log_likelihood",
            "weight_mof", "boundary_error"]
    atomic_write_text(out / "diagnostics.csv",
                      _csv_text(cols, [[_fmt(r[c]) for c in cols] for r in est.diagnostics_]))
    eval_v = test_v if test_v else train_v
    preds = est.predict(eval_v)
    atomic_write_text(out / "predictions.jsonl", dumps_jsonl(
        {"id": v.id, "labels": p.tolist()} for v, p in zip(eval_v, preds)))
    metrics = {"split": "test" if test_v else "train", "n_videos": len(eval_v)}
    if all(v.gt_labels is not None for v in eval_v):
        metrics.update(_metrics(preds, eval_v))
    atomic_write_json(out / "metrics.json", metrics)
    write_manifest(out, f"train --mode {mode}", {"train": tcfg.to_dict(), "annotation": ann_cfg,
                                                  "split": test_fraction, "mode": mode,
                                                  "prior_sample_id": args.prior_sample_id},
                   tcfg.seed, {"data": args.data, "config": args.config})
    print(f"trained {mode} on {len(train_v)} videos; metrics: {metrics}")


def _metrics(preds, videos, boundaries=None) -> dict:
    gts = [v.gt_labels for v in videos]
    out = corpus_metrics(preds, gts)
    errs = []
    for i, (p, v) in enumerate(zip(preds, videos)):
        gt_b = boundaries_from_framewise(v.gt_labels)
        est_b = boundaries[i] if boundaries and boundaries[i] is not None \
            else boundaries_from_framewise(p)
        if len(est_b) == len(gt_b):
            errs.append(boundary_error_pct(est_b, gt_b, v.T))
    # only videos whose boundary count matches the ground truth are comparable
    out["boundary_error_pct"] = float(np.mean(errs)) if errs else None
    return out


def cmd_evaluate(args) -> None:
    videos, _ = load_dataset(args.data)
    by_id = {v.id: v for v in videos}
    preds, vids, bounds = [], [], []
    for lineno, rec in read_jsonl(args.pred):
        where = f"{args.pred}:{lineno}"
        if "id" not in rec or "labels" not in rec:
            raise DataFormatError(f"{where}: prediction needs 'id' and 'labels'")
        v = by_id.get(str(rec["id"]))
        if v is None:
            raise DataFormatError(f"{where}: unknown video id {rec['id']!r}")
        if v.gt_labels is None:
            raise DataFormatError(f"{where}: video {v.id!r} has no ground-truth labels")
        p = np.asarray(rec["labels"], dtype=np.int64)
        if p.shape != v.gt_labels.shape:
            raise DataFormatError(f"{where}: {p.size} labels for a video of {v.T} frames")
        preds.append(p)
        vids.append(v)
        bounds.append(rec.get("boundaries"))
    if not preds:
        raise CLIError(f"{args.pred}: no predictions")
    metrics = _metrics(preds, vids, bounds)
    out = Path(args.out)
    atomic_write_json(out, metrics)
    write_manifest(out.parent, "evaluate", {"pred": str(args.pred)}, None,
                   {"pred": args.pred, "data": args.data})
    print(metrics)


def cmd_inspect(args) -> None:
    cfg = load_config(args.config) if args.config else {}
    tcfg = TrainConfig.from_dict({**_section(cfg, "train"), "prior": args.prior})
    videos, anns = load_dataset(args.data)
    idx = 0
    if args.video_id is not None:
        ids = [v.id for v in videos]
        if args.video_id not in ids:
            raise CLIError(f"video {args.video_id!r} not in {args.data}")
        idx = ids.index(args.video_id)
    video, ann = videos[idx], anns[idx]
    mode = args.mode
    if ann is None:
        ann_cfg = {**ANNOTATION_DEFAULTS, **_section(cfg, "annotation", set(ANNOTATION_DEFAULTS))}
        ann = simulate_annotations([video], mode, ann_cfg)[0]
    pd = load_config(args.params) if str(args.params).endswith(".json") else None
    if pd is None:
        raise CLIError("--params must be a params.json written by `train`")
    params = ScorerParams.from_dict(pd)
    C = params.n_classes
    prior = _length_prior(args, videos, C, tcfg.seed)
    probs: FrameProbs = scorer_forward(params, video.features)
    out = Path(args.out)
    window = args.window if args.window is not None else tcfg.window
    if mode == EM_TSS:
        res = e_step_tss(probs, ann, prior, tcfg.boundary_range, video.id)
        post_rows = [[p.k, int(j), repr(float(q))] for p in res.posteriors
                     for j, q in zip(p.candidates, p.probs)]
        extra = {"expected_boundaries": expected_boundaries(res.posteriors)}
    else:
        gen_mode = Mode.SKIPTAG if mode == SKIPTAG else Mode.TSS_MISSING
        res = e_step_gen(probs, ann, prior, gen_mode, window, tcfg.boundary_range, video.id)
        post_rows = [[p.k, int(j), repr(float(q))] for p in res.posteriors
                     for j, q in zip(p.candidates, p.c1_marginal())]
        atomic_write_text(out / "case_mass.csv", _csv_text(
            ["k", "p_c1", "p_c2", "p_c3"],
            [[p.k, repr(p.p_c1), repr(p.p_c2), repr(p.p_c3)] for p in res.posteriors]))
        extra = {}
    w = res.weights.w
    rows = [[t, c, repr(float(w[t, c]))] for t in range(w.shape[0]) for c in range(C) if w[t, c] > 0]
    atomic_write_text(out / "weights.csv", _csv_text(["frame", "class", "weight"], rows))
    atomic_write_text(out / "posteriors.csv", _csv_text(["k", "candidate", "prob"], post_rows))
    atomic_write_json(out / "summary.json", {"video_id": video.id, "mode": mode,
                                             "log_likelihood": res.log_likelihood, **extra})
    write_manifest(out, f"inspect-posterior --mode {mode}", {"train": tcfg.to_dict(), "video": video.id},
                   tcfg.seed, {"data": args.data, "params": args.params, "config": args.config})
    print(f"wrote posterior dumps for {video.id} to {out}")


def _add_prior_flags(p) -> None:
    p.add_argument("--prior", choices=["noninf", "sample", "uniform"], default="sample",
                   help="boundary prior: non-informative, estimated from one labelled video, or flat")
    p.add_argument("--prior-sample-id", default=None,
                   help="video id used to estimate mean lengths (default: seeded random pick)")
    p.add_argument("--window", type=int, default=None,
                   help="max length of a missed middle segment in the generalized E-step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emseg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic corpus as JSONL")
    g.add_argument("--config", help="TOML/JSON with a [generator] table and optional [annotation]")
    g.add_argument("--n", type=int, required=True, help="number of videos")
    g.add_argument("--out", required=True, help="output JSONL path")
    g.add_argument("--seed", type=int, default=None, help="override generator seed")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a scorer and evaluate it on a held-out split")
    t.add_argument("--mode", choices=list(MODES), required=True)
    t.add_argument("--config", help="TOML/JSON with [train], [annotation], [split] tables")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    _add_prior_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score predictions against a labelled dataset")
    e.add_argument("--pred", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default="metrics.json")
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("inspect-posterior", help="dump E-step weights and posteriors as CSV")
    i.add_argument("--mode", choices=[EM_TSS, EM_GEN, SKIPTAG], default=EM_TSS)
    i.add_argument("--data", required=True)
    i.add_argument("--params", required=True)
    i.add_argument("--config")
    i.add_argument("--video-id", default=None)
    i.add_argument("--out", required=True, help="output directory")
    _add_prior_flags(i)
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, DataFormatError, ValueError, OSError) as e:
        print(f"emseg {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
