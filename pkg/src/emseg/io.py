"""JSONL datasets, config files and atomic output writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import AnnotationSet, Mode, VideoSample


class DataFormatError(ValueError):
    """Malformed dataset or config input; message carries the location."""


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def video_to_record(video: VideoSample, ann: AnnotationSet | None = None) -> dict:
    rec = {"id": video.id, "features": video.features.tolist()}
    if video.gt_labels is not None:
        rec["labels"] = video.gt_labels.tolist()
    if ann is not None:
        rec["stamps"] = [[t, c] for t, c in ann.stamps]
        rec["mode"] = ann.mode.value
    return rec


def record_to_video(rec: dict, where: str = "") -> tuple[VideoSample, AnnotationSet | None]:
    try:
        labels = rec.get("labels")
        video = VideoSample(str(rec["id"]), np.asarray(rec["features"], dtype=float),
                            None if labels is None else np.asarray(labels, dtype=np.int64))
        ann = None
        if rec.get("stamps") is not None:
            ann = AnnotationSet(Mode(rec.get("mode", "TSS")), [tuple(s) for s in rec["stamps"]])
            ann.check_within(video.T)
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{where}: {type(e).__name__}: {e}") from e
    return video, ann


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


def save_dataset(path, videos: Sequence[VideoSample],
                 anns: Sequence[AnnotationSet | None] | None = None) -> None:
    anns = anns if anns is not None else [None] * len(videos)
    atomic_write_text(path, dumps_jsonl(video_to_record(v, a) for v, a in zip(videos, anns)))


def read_jsonl(path) -> list[tuple[int, dict]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append((lineno, json.loads(line)))
            except json.JSONDecodeError as e:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
    return out


def load_dataset(path) -> tuple[list[VideoSample], list[AnnotationSet | None]]:
    videos, anns = [], []
    for lineno, rec in read_jsonl(path):
        v, a = record_to_video(rec, f"{path}:{lineno}")
        videos.append(v)
        anns.append(a)
    return videos, anns


def load_config(path) -> dict:
    """Read a TOML or JSON config (chosen by extension, TOML otherwise)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            return json.loads(text)
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    except Exception as e:
        line = getattr(e, "lineno", None)
        loc = f"{path}:{line}" if line else str(path)
        raise DataFormatError(f"{loc}: malformed config ({e})") from e


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
