import json

import numpy as np
import pytest

from emseg.core import AnnotationSet, Mode, VideoSample
from emseg.io import (
    DataFormatError,
    atomic_write_text,
    config_hash,
    file_sha256,
    load_config,
    load_dataset,
    save_dataset,
)
from emseg.synthdata import GenConfig, annotate_tss, generate_corpus


def test_round_trip_bit_exact(tmp_path):
    videos = generate_corpus(GenConfig(seed=9), 4)
    videos.append(VideoSample("tiny", np.array([[np.nextafter(0.1, 1.0), -1e-300]]), [0]))
    anns = [annotate_tss(v, "CENTRE") for v in videos]
    anns[1] = AnnotationSet(Mode.SKIPTAG, anns[1].stamps)
    path = tmp_path / "d.jsonl"
    save_dataset(path, videos, anns)
    v2, a2 = load_dataset(path)
    assert v2 == videos
    for x, y in zip(v2, videos):
        assert x.features.tobytes() == y.features.tobytes()
    assert a2 == anns
    save_dataset(tmp_path / "again.jsonl", v2, a2)
    assert file_sha256(path) == file_sha256(tmp_path / "again.jsonl")


def test_unlabelled_and_unannotated(tmp_path):
    path = tmp_path / "u.jsonl"
    save_dataset(path, [VideoSample("u", np.ones((2, 3)))])
    (v,), (a,) = load_dataset(path)
    assert v.gt_labels is None and a is None


@pytest.mark.parametrize("line,msg", [
    ("{not json", "invalid JSON"),
    ('{"features": [[1.0]]}', "KeyError"),
    ('{"id": "a", "features": [[1.0], [2.0]], "labels": [0]}', "labels length"),
    ('{"id": "a", "features": [[1.0]], "stamps": [[3, 0]]}', "outside video"),
    ('{"id": "a", "features": [[1.0]], "stamps": [[0, 0]], "mode": "BOGUS"}', "BOGUS"),
])
def test_malformed_lines_report_line_number(tmp_path, line, msg):
    good = json.dumps({"id": "ok", "features": [[0.0]]})
    path = tmp_path / "bad.jsonl"
    path.write_text(good + "\n\n" + line + "\n")
    with pytest.raises(DataFormatError, match=f"bad.jsonl:3.*{msg}"):
        load_dataset(path)


def test_load_config_formats(tmp_path):
    (tmp_path / "c.toml").write_text("[train]\nlr = 0.1\n")
    (tmp_path / "c.json").write_text('{"train": {"lr": 0.1}}')
    assert load_config(tmp_path / "c.toml") == load_config(tmp_path / "c.json")
    (tmp_path / "bad.toml").write_text("[train\nlr = 1\n")
    with pytest.raises(DataFormatError, match="bad.toml"):
        load_config(tmp_path / "bad.toml")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write_text(tmp_path / "sub" / "x.txt", "hello")
    assert (tmp_path / "sub" / "x.txt").read_text() == "hello"
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["x.txt"]


def test_config_hash_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
