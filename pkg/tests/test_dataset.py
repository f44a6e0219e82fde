import filecmp
import os

import numpy as np
import pytest

from ssagan.dataset import (SynthSpec, read_dataset, read_frames, read_labels, read_predictions, synth_dataset,
                            synth_generate, write_dataset, write_frames, write_predictions)
from ssagan.errors import ConfigurationError, FormatError, TruncatedFileError, ValidationError
from ssagan.metrics import evaluate
from ssagan.training import detections_from_predictions


@pytest.fixture
def small():
    return synth_dataset(SynthSpec(feature_dim=4), 5, 40, n_test=1, n_val=1)


def test_round_trip(small, tmp_path):
    write_dataset(tmp_path, small)
    back = read_dataset(tmp_path)
    assert back == small
    assert back.manifest.splits == {"train": ["video000", "video001", "video002"],
                                    "val": ["video003"], "test": ["video004"]}


def test_image_frames_round_trip(tmp_path):
    frames = np.random.default_rng(0).standard_normal((3, 2, 4, 5)).astype(np.float32)
    write_frames(tmp_path / "x.frames", frames)
    back = read_frames(tmp_path / "x.frames")
    assert back.dtype == np.float32 and np.array_equal(back, frames)


def test_frame_bytes_are_preserved(small, tmp_path):
    write_dataset(tmp_path, small)
    v = small.videos["video000"]
    raw = (tmp_path / "video000.frames").read_bytes()
    assert raw[:4] == b"SSAG"
    assert raw[-v.frames.nbytes:] == v.frames.astype("<f4").tobytes()


def test_same_seed_gives_identical_files(tmp_path):
    spec = SynthSpec(feature_dim=4, history_dependence=True)
    synth_generate(spec, 4, 50, out_dir=tmp_path / "a")
    synth_generate(spec, 4, 50, out_dir=tmp_path / "b")
    names = sorted(os.listdir(tmp_path / "a"))
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert match == names and not mismatch and not errors
    other = synth_dataset(SynthSpec(feature_dim=4, history_dependence=True, seed=8), 4, 50)
    assert other != read_dataset(tmp_path / "a")


def test_generated_contract():
    spec = SynthSpec()
    data = synth_dataset(spec, 6, 123)
    for v in data.videos.values():
        assert len(v) == 123 and v.labels.max() < spec.k and v.labels.min() >= 0
    assert data.manifest.k == 6 and data.manifest.class_names[0] == "background"
    all_labels = np.concatenate([v.labels for v in data.videos.values()])
    assert set(np.unique(all_labels)) == set(range(6))


def test_history_dependent_walk_follows_designated_predecessors():
    spec = SynthSpec.history()
    a, b = spec.aliased_pair
    for v in synth_dataset(spec, 5, 300).videos.values():
        acts = [s for s in _action_runs(v.labels)]
        for prev, cur in zip(acts, acts[1:]):
            if cur == a:
                assert prev == 1
            if cur == b:
                assert prev == 2


def _action_runs(labels):
    out = []
    for lab in labels:
        if lab != 0 and (not out or out[-1] != lab):
            out.append(int(lab))
    return out


def test_memoryless_classifier_cannot_separate_aliased_pair():
    spec = SynthSpec.history(seed=3)
    data = synth_dataset(spec, 20, 300, n_test=5)
    train = data.split("train")
    x = np.concatenate([v.frames for v in train]).astype(np.float64)
    y = np.concatenate([v.labels for v in train])
    means = np.stack([x[y == c].mean(axis=0) for c in range(spec.k)])
    test = data.split("test")
    xt = np.concatenate([v.frames for v in test]).astype(np.float64)
    yt = np.concatenate([v.labels for v in test])
    pred = np.argmin(((xt[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
    aliased = np.isin(yt, spec.aliased_pair)
    assert aliased.sum() > 100
    assert np.mean(pred[aliased] == yt[aliased]) <= 0.60
    plain = ~aliased
    assert np.mean(pred[plain] == yt[plain]) > 0.95


def test_invalid_spec():
    with pytest.raises(ConfigurationError):
        SynthSpec(n_actions=3, transition=np.ones((3, 3))).validate()
    with pytest.raises(ConfigurationError):
        SynthSpec(seg_duration=(0, 3)).validate()
    with pytest.raises(ConfigurationError):
        SynthSpec(n_actions=3, history_dependence=True).validate()


def test_corrupted_magic_names_the_file(small, tmp_path):
    write_dataset(tmp_path, small)
    path = tmp_path / "video001.frames"
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as err:
        read_dataset(tmp_path)
    assert "video001.frames" in str(err.value) and err.value.offset == 0


def test_truncated_frames(small, tmp_path):
    write_dataset(tmp_path, small)
    path = tmp_path / "video002.frames"
    path.write_bytes(path.read_bytes()[:-6])
    with pytest.raises(TruncatedFileError) as err:
        read_dataset(tmp_path)
    assert "video002.frames" in str(err.value)
    path.write_bytes(b"SSAG\x01")
    with pytest.raises(TruncatedFileError):
        read_frames(path)


def test_trailing_bytes_and_version(tmp_path):
    path = tmp_path / "x.frames"
    write_frames(path, np.zeros((2, 3)))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(FormatError):
        read_frames(path)
    raw = bytearray(path.read_bytes()[:-1])
    raw[4] = 2
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as err:
        read_frames(path)
    assert err.value.offset == 4


def test_label_out_of_range_reports_line(small, tmp_path):
    write_dataset(tmp_path, small)
    path = tmp_path / "video000.labels"
    lines = path.read_text().splitlines()
    lines[6] = "6"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError) as err:
        read_dataset(tmp_path)
    assert "line 7" in str(err.value) and "video000.labels" in str(err.value)
    path.write_text("1\nx\n")
    with pytest.raises(FormatError, match="line 2"):
        read_labels(path, 6)


def test_label_count_mismatch(small, tmp_path):
    write_dataset(tmp_path, small)
    path = tmp_path / "video000.labels"
    path.write_text("".join(path.read_text().splitlines(keepends=True)[:-1]))
    with pytest.raises(ValidationError):
        read_dataset(tmp_path)


def test_bad_manifest(small, tmp_path):
    write_dataset(tmp_path, small)
    (tmp_path / "manifest.txt").write_text("format=other\n")
    with pytest.raises(FormatError, match="manifest"):
        read_dataset(tmp_path)
    write_dataset(tmp_path, small)
    (tmp_path / "classes.txt").write_text("background\na\n")
    with pytest.raises(ValidationError):
        read_dataset(tmp_path)


def test_predictions_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(4), size=37)
    labels = probs.argmax(axis=1)
    path = tmp_path / "p.csv"
    write_predictions(path, labels, probs)
    assert len(path.read_text().splitlines()) == 37
    lab, pr = read_predictions(path)
    assert np.array_equal(lab, labels) and np.array_equal(pr, probs)
    gt = rng.integers(0, 4, 37)
    a = evaluate(lab, gt, detections_from_predictions(lab, pr))
    b = evaluate(labels, gt, detections_from_predictions(labels, probs))
    assert a == b


def test_prediction_row_sums_are_validated(tmp_path):
    probs = np.full((3, 2), 0.5)
    probs[1] = [0.5, 0.6]
    with pytest.raises(ValidationError):
        write_predictions(tmp_path / "p.csv", [0, 1, 0], probs)
    (tmp_path / "q.csv").write_text("0,0,0.5,0.5\n1,1,0.5,0.6\n")
    with pytest.raises(ValidationError, match="line 2"):
        read_predictions(tmp_path / "q.csv")
    (tmp_path / "r.csv").write_text("0,0,0.5,0.5\n2,1,0.5,0.5\n")
    with pytest.raises(FormatError):
        read_predictions(tmp_path / "r.csv")
