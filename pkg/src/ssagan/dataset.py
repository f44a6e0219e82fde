"""
On-disk dataset and prediction formats, and the synthetic sequence generator.

A dataset directory holds::

    manifest.txt     key=value lines (format, version, k, frame_shape, splits)
    classes.txt      one class name per line, line 0 is ``background``
    <video>.frames   binary frame tensor (see below)
    <video>.labels   one integer label per line

Frame files are little-endian: magic ``SSAG``, u32 version (=1), u32 T,
u32 rank, rank x u32 dims, then T * prod(dims) float32 values.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FormatError, TruncatedFileError, ValidationError

MAGIC = b"SSAG"
VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass
class FrameSequence:
    video_id: str
    frames: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.shape[0] != self.labels.shape[0]:
            raise ValidationError(
                f"{self.frames.shape[0]} frames but {self.labels.shape[0]} labels", path=self.video_id)

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class DatasetManifest:
    k: int
    class_names: list
    frame_shape: tuple
    splits: dict = field(default_factory=lambda: {s: [] for s in SPLITS})

    def __post_init__(self):
        self.frame_shape = tuple(int(v) for v in self.frame_shape)
        for s in SPLITS:
            self.splits.setdefault(s, [])

    @property
    def videos(self):
        return [v for s in SPLITS for v in self.splits[s]]

    def validate(self, path=None):
        if len(self.class_names) != self.k:
            raise ValidationError(f"{len(self.class_names)} class names for k={self.k}", path=path)
        seen = set()
        for s in SPLITS:
            for v in self.splits[s]:
                if v in seen:
                    raise ValidationError(f"video {v!r} assigned to more than one split", path=path)
                seen.add(v)


@dataclass
class Dataset:
    manifest: DatasetManifest
    videos: dict

    def split(self, name):
        return [self.videos[v] for v in self.manifest.splits[name]]

    def __eq__(self, other):
        if not isinstance(other, Dataset) or self.manifest != other.manifest:
            return False
        if list(self.videos) != list(other.videos):
            return False
        return all(
            np.array_equal(a.frames, b.frames) and np.array_equal(a.labels, b.labels)
            and a.frames.dtype == b.frames.dtype
            for a, b in zip(self.videos.values(), other.videos.values()))


# -- frame tensors ----------------------------------------------------------


def write_frames(path, frames):
    frames = np.asarray(frames, dtype="<f4")
    T = frames.shape[0]
    dims = frames.shape[1:]
    header = MAGIC + struct.pack("<III", VERSION, T, len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(frames).tobytes())


def read_frames(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise TruncatedFileError(f"header needs 16 bytes, file has {len(raw)}", path, len(raw))
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", path, 0)
    version, T, rank = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    dims_end = 16 + 4 * rank
    if len(raw) < dims_end:
        raise TruncatedFileError(f"header declares rank {rank} but ends early", path, len(raw))
    dims = struct.unpack_from(f"<{rank}I", raw, 16)
    expected = T * int(np.prod(dims, dtype=np.int64)) * 4
    body = len(raw) - dims_end
    if body < expected:
        raise TruncatedFileError(f"expected {expected} bytes of frame data, found {body}", path, len(raw))
    if body > expected:
        raise FormatError(f"{body - expected} trailing bytes after frame data", path, dims_end + expected)
    data = np.frombuffer(raw, dtype="<f4", count=expected // 4, offset=dims_end)
    return data.reshape((T,) + tuple(dims)).astype(np.float32)


# -- labels -------------------------------------------------------------------


def write_labels(path, labels):
    with open(path, "w") as fh:
        for v in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(v)}\n")


def read_labels(path, k=None):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                raise FormatError("blank line in labels file", path, f"line {lineno}")
            try:
                v = int(text)
            except ValueError:
                raise FormatError(f"not an integer: {text!r}", path, f"line {lineno}") from None
            if v < 0 or (k is not None and v >= k):
                raise ValidationError(f"label {v} out of range for k={k}", path, f"line {lineno}")
            out.append(v)
    return np.asarray(out, dtype=np.int64)


# -- manifest -------------------------------------------------------------------


def read_keyvalue(path):
    """Parse a ``key=value`` file; ``#`` starts a comment line."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise FormatError(f"expected key=value, got {text!r}", path, f"line {lineno}")
            key, value = text.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_manifest(directory, manifest):
    lines = [
        "format=ssag-dataset",
        f"version={VERSION}",
        f"k={manifest.k}",
        "frame_shape=" + ",".join(str(v) for v in manifest.frame_shape),
    ]
    lines += [f"{s}=" + ",".join(manifest.splits[s]) for s in SPLITS]
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(directory, "classes.txt"), "w") as fh:
        fh.write("\n".join(manifest.class_names) + "\n")


def read_manifest(directory):
    path = os.path.join(directory, "manifest.txt")
    kv = read_keyvalue(path)
    if kv.get("format") != "ssag-dataset":
        raise FormatError(f"not a dataset manifest (format={kv.get('format')!r})", path)
    if kv.get("version") != str(VERSION):
        raise FormatError(f"unsupported manifest version {kv.get('version')!r}", path)
    try:
        k = int(kv["k"])
        shape = tuple(int(v) for v in kv["frame_shape"].split(","))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"missing or malformed k/frame_shape ({exc})", path) from None
    splits = {s: [v for v in kv.get(s, "").split(",") if v] for s in SPLITS}
    cpath = os.path.join(directory, "classes.txt")
    with open(cpath) as fh:
        names = [line.rstrip("\n") for line in fh if line.strip()]
    manifest = DatasetManifest(k=k, class_names=names, frame_shape=shape, splits=splits)
    manifest.validate(path)
    return manifest


def write_dataset(directory, data):
    os.makedirs(directory, exist_ok=True)
    data.manifest.validate(directory)
    write_manifest(directory, data.manifest)
    for vid, seq in data.videos.items():
        write_frames(os.path.join(directory, f"{vid}.frames"), seq.frames)
        write_labels(os.path.join(directory, f"{vid}.labels"), seq.labels)


def read_dataset(directory):
    manifest = read_manifest(directory)
    videos = {}
    for vid in manifest.videos:
        fpath = os.path.join(directory, f"{vid}.frames")
        frames = read_frames(fpath)
        if frames.shape[1:] != manifest.frame_shape:
            raise ValidationError(
                f"frame shape {frames.shape[1:]} differs from manifest {manifest.frame_shape}", fpath)
        lpath = os.path.join(directory, f"{vid}.labels")
        labels = read_labels(lpath, manifest.k)
        if labels.shape[0] != frames.shape[0]:
            raise ValidationError(f"{labels.shape[0]} labels for {frames.shape[0]} frames", lpath)
        videos[vid] = FrameSequence(vid, frames, labels)
    return Dataset(manifest, videos)


# -- predictions ------------------------------------------------------------------


def write_predictions(path, labels, probs):
    """One line per frame: ``frame_index,pred_class,p_0,...,p_{k-1}``."""
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise ValidationError(f"{labels.shape[0]} labels but probabilities of shape {probs.shape}", path)
    bad = np.nonzero(np.abs(probs.sum(axis=1) - 1.0) > 1e-6)[0]
    if bad.size:
        raise ValidationError(f"probabilities of frame {bad[0]} do not sum to 1", path, f"row {bad[0]}")
    with open(path, "w") as fh:
        for t, (lab, row) in enumerate(zip(labels, probs)):
            fh.write(f"{t},{int(lab)}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_predictions(path):
    labels, rows = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.strip().split(",")
            where = f"line {lineno}"
            if len(parts) < 3:
                raise FormatError("expected frame_index,pred_class,p_0,...", path, where)
            try:
                t = int(parts[0])
                lab = int(parts[1])
                row = [float(v) for v in parts[2:]]
            except ValueError:
                raise FormatError(f"unparseable row {line.strip()!r}", path, where) from None
            if t != lineno - 1:
                raise FormatError(f"frame index {t} out of sequence", path, where)
            if rows and len(row) != len(rows[0]):
                raise FormatError(f"{len(row)} probabilities, earlier rows had {len(rows[0])}", path, where)
            if abs(sum(row) - 1.0) > 1e-6:
                raise ValidationError("probabilities do not sum to 1", path, where)
            if not 0 <= lab < len(row):
                raise ValidationError(f"predicted class {lab} out of range", path, where)
            labels.append(lab)
            rows.append(row)
    return np.asarray(labels, dtype=np.int64), np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)


# -- synthetic data ---------------------------------------------------------------


@dataclass
class SynthSpec:
    """Knobs of the synthetic fine-grained sequence generator.

    Labels: 0 is background, 1..n_actions are actions.  Videos are Markov
    walks over actions (``transition`` is over actions only) with optional
    background gaps between segments; every frame is its class mean plus
    isotropic Gaussian noise.  With ``history_dependence`` the last two
    actions share one emission distribution and each can only follow its own
    designated predecessor (actions 1 and 2), so only history tells them apart.
    """

    n_actions: int = 5
    feature_dim: int = 16
    separation: float = 4.0
    noise_scale: float = 1.0
    transition: np.ndarray = None
    bg_prob: float = 0.3
    bg_duration: tuple = (2, 8)
    seg_duration: tuple = (10, 40)
    history_dependence: bool = False
    seed: int = 7

    @classmethod
    def history(cls, **overrides):
        """History-dependent preset; short segments keep each predecessor inside a 16-frame queue."""
        base = dict(history_dependence=True, seg_duration=(5, 15))
        base.update(overrides)
        return cls(**base)

    @property
    def k(self):
        return self.n_actions + 1

    @property
    def aliased_pair(self):
        if not self.history_dependence:
            return None
        return (self.n_actions - 1, self.n_actions)

    def transition_matrix(self):
        n = self.n_actions
        if self.transition is not None:
            P = np.asarray(self.transition, dtype=np.float64)
        elif self.history_dependence:
            a, b = self.aliased_pair
            plain = [c for c in range(1, n + 1) if c not in (a, b)]
            P = np.zeros((n, n))
            for c in range(1, n + 1):
                if c == 1:
                    P[c - 1, a - 1] = 1.0
                elif c == 2:
                    P[c - 1, b - 1] = 1.0
                else:
                    targets = [t for t in plain if t != c]
                    P[c - 1, [t - 1 for t in targets]] = 1.0 / len(targets)
        else:
            P = (np.ones((n, n)) - np.eye(n)) / max(n - 1, 1) if n > 1 else np.ones((1, 1))
        return P

    def validate(self):
        n = self.n_actions
        if n < 1 or self.feature_dim < 1:
            raise ConfigurationError(f"need n_actions >= 1 and feature_dim >= 1, got {n}, {self.feature_dim}")
        if self.history_dependence and n < 4:
            raise ConfigurationError("history dependence needs at least 4 actions")
        P = self.transition_matrix()
        if P.shape != (n, n):
            raise ConfigurationError(f"transition matrix must be {n}x{n}, got {P.shape}")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigurationError("transition matrix rows must be non-negative and sum to 1")
        for lo, hi in (self.bg_duration, self.seg_duration):
            if lo < 1 or hi < lo:
                raise ConfigurationError(f"bad duration range ({lo}, {hi})")
        if not 0 <= self.bg_prob <= 1:
            raise ConfigurationError(f"bg_prob must be in [0, 1], got {self.bg_prob}")
        return self

    def class_means(self):
        rng = np.random.default_rng([self.seed, 0])
        k, D = self.k, self.feature_dim
        if k <= D:
            q, _ = np.linalg.qr(rng.standard_normal((D, D)))
            means = q[:k] * self.separation
        else:
            g = rng.standard_normal((k, D))
            means = g / np.linalg.norm(g, axis=1, keepdims=True) * self.separation
        if self.history_dependence:
            a, b = self.aliased_pair
            means[b] = means[a]
        return means


def _walk(spec, P, T, rng):
    labels = np.empty(T, dtype=np.int64)
    t = 0
    if rng.random() < spec.bg_prob:
        n = rng.integers(spec.bg_duration[0], spec.bg_duration[1] + 1)
        labels[:n] = 0
        t = n
    cls = int(rng.integers(1, spec.n_actions + 1))
    first = True
    while t < T:
        if not first and rng.random() < spec.bg_prob:
            n = rng.integers(spec.bg_duration[0], spec.bg_duration[1] + 1)
            labels[t:t + n] = 0
            t += n
            if t >= T:
                break
        first = False
        n = rng.integers(spec.seg_duration[0], spec.seg_duration[1] + 1)
        labels[t:t + n] = cls
        t += n
        cls = int(rng.choice(spec.n_actions, p=P[cls - 1])) + 1
    return labels[:T]


def synth_sequences(spec, n_videos, frames_per_video):
    """Generate ``n_videos`` FrameSequences in memory (pure in ``spec``)."""
    spec.validate()
    P = spec.transition_matrix()
    means = spec.class_means()
    out = []
    for v in range(n_videos):
        rng = np.random.default_rng([spec.seed, 1, v])
        labels = _walk(spec, P, frames_per_video, rng)
        noise = rng.standard_normal((frames_per_video, spec.feature_dim)) * spec.noise_scale
        frames = (means[labels] + noise).astype(np.float32)
        out.append(FrameSequence(f"video{v:03d}", frames, labels))
    return out


def synth_dataset(spec, n_videos, frames_per_video, n_test=None, n_val=0):
    seqs = synth_sequences(spec, n_videos, frames_per_video)
    if n_test is None:
        n_test = n_videos // 5
    n_train = n_videos - n_test - n_val
    if n_train < 0:
        raise ConfigurationError(f"{n_videos} videos cannot hold {n_test} test + {n_val} val")
    ids = [s.video_id for s in seqs]
    names = ["background"] + [f"action{c}" for c in range(1, spec.k)]
    manifest = DatasetManifest(
        k=spec.k, class_names=names, frame_shape=(spec.feature_dim,),
        splits={"train": ids[:n_train], "val": ids[n_train:n_train + n_val],
                "test": ids[n_train + n_val:]})
    return Dataset(manifest, {s.video_id: s for s in seqs})


def synth_generate(spec, n_videos, frames_per_video, out_dir=None, n_test=None, n_val=0):
    """Build a synthetic dataset; write it to ``out_dir`` when given."""
    data = synth_dataset(spec, n_videos, frames_per_video, n_test=n_test, n_val=n_val)
    if out_dir is not None:
        write_dataset(out_dir, data)
    return data
