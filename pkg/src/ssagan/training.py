"""
Objectives, the alternating D/G update, epoch driver, and inference.

Discriminator loss on a batch whose first half carries ground-truth codes
and second half generated codes::

    -mean ln D(x, y) - mean ln(1 - D(x, G(x, z, c))) + lambda_c * CE(D_c, k)

Generator loss (non-saturating)::

    -mean ln D(x, G(x, z, c)) + lambda_c * CE(D_c(x, G(x, z, c)), k)

Every frame's context comes from its own video's preceding frames, encoded by
the generator as it stands at the start of the step (eval-mode batch norm) and
held constant for that step.
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import layers
from .action_code import encode_batch
from .autograd import Tensor, getitem, no_grad
from .errors import ConfigurationError
from .gce import ContextQueue, history_windows
from .metrics import Detection, extract_segments
from .model import ModelConfig, NoiseSource, build_model
from .optim import Adam, step_schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Variant:
    name: str
    context: str
    adversarial: bool
    semi_supervised: bool
    gen_class_head: bool


VARIANTS = {
    "g-gce": Variant("g-gce", "none", False, False, True),
    "g": Variant("g", "gce", False, False, True),
    "cgan-gce": Variant("cgan-gce", "none", True, False, True),
    "cgan": Variant("cgan", "gce", True, False, True),
    "ssa-gan-gce": Variant("ssa-gan-gce", "none", True, True, False),
    "ssa-gan": Variant("ssa-gan", "gce", True, True, False),
    "ssa-gan-lstm": Variant("ssa-gan-lstm", "lstm", True, True, False),
}


def get_variant(name):
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown variant {name!r}; valid: {', '.join(VARIANTS)}") from None


@dataclass
class TrainConfig:
    variant: str = "ssa-gan"
    lambda_c: float = 100.0
    batch_size: int = 32
    epochs: tuple = (20, 60)
    lr: float = 2e-3
    lr_decay: float = 0.1
    beta1: float = 0.5
    beta2: float = 0.999
    m: int = 16
    seed: int = 0
    infer_seed: int = 0
    noise_mode: str = "concat"
    noise_dim: int = 16
    d: int = None
    enc_widths: tuple = None
    fusion_width: int = 64
    trunk_width: int = 64
    gate_mode: str = "scalar"
    classifier_input: str = "joint"
    freeze_generator: bool = False

    def __post_init__(self):
        self.epochs = tuple(int(v) for v in self.epochs)
        if self.enc_widths is not None:
            self.enc_widths = tuple(int(v) for v in self.enc_widths)

    @classmethod
    def full_schedule(cls, **overrides):
        """Full-length schedule: 250 epochs at 0.1, then 750 at 0.01, m = 400."""
        base = dict(epochs=(250, 750), lr=0.1, lr_decay=0.1, m=400, lambda_c=100.0)
        base.update(overrides)
        return cls(**base)

    @property
    def effective_lambda(self):
        return self.lambda_c if get_variant(self.variant).semi_supervised else 0.0

    def lr_phases(self):
        return [(n, self.lr * self.lr_decay ** i) for i, n in enumerate(self.epochs)]

    @property
    def total_epochs(self):
        return sum(self.epochs)

    def validate(self):
        get_variant(self.variant)
        if self.lambda_c < 0:
            raise ConfigurationError(f"lambda_c must be >= 0, got {self.lambda_c}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigurationError(f"batch size must be even and >= 2, got {self.batch_size}")
        if not self.epochs or min(self.epochs) < 0:
            raise ConfigurationError(f"bad epoch schedule {self.epochs}")
        if self.m < 0:
            raise ConfigurationError(f"m must be >= 0, got {self.m}")
        return self

    def model_config(self, k, frame_shape):
        frame_shape = tuple(frame_shape)
        image = len(frame_shape) == 3
        widths = self.enc_widths or ((16, 32, 64) if image else (64, 64))
        v = get_variant(self.variant)
        cfg = ModelConfig(
            frame_shape=frame_shape, k=k, d=0, m=self.m, noise_dim=self.noise_dim,
            enc_widths=widths, fusion_width=self.fusion_width, trunk_width=self.trunk_width,
            context=v.context, gate_mode=self.gate_mode, classifier_input=self.classifier_input,
            noise_mode=self.noise_mode, gen_class_head=v.gen_class_head)
        cfg.d = self.d if self.d is not None else cfg.encoder_output_dim()
        return cfg.validate()

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**data)


# -- loss arithmetic -----------------------------------------------------------


def d_loss_terms(p_real, p_fake, class_probs, labels, lambda_c):
    """Discriminator objective from the heads' outputs."""
    loss = layers.bce_loss(p_real, 1.0) + layers.bce_loss(p_fake, 0.0)
    if lambda_c:
        loss = loss + lambda_c * layers.ce_loss(class_probs, labels)
    return loss


def g_loss_terms(p_fake, class_probs, labels, lambda_c):
    """Non-saturating generator objective from the heads' outputs."""
    loss = layers.bce_loss(p_fake, 1.0)
    if lambda_c:
        loss = loss + lambda_c * layers.ce_loss(class_probs, labels)
    return loss


# -- batches -------------------------------------------------------------------


class FramePool:
    """All training frames of a dataset split, flattened, with video positions."""

    def __init__(self, sequences, k):
        self.k = k
        self.frames = np.concatenate([s.frames for s in sequences]).astype(np.float64)
        self.labels = np.concatenate([s.labels for s in sequences]).astype(np.int64)
        self.position = np.concatenate([np.arange(len(s)) for s in sequences])
        self.codes = encode_batch(self.labels, k)

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class LabeledBatch:
    x: np.ndarray
    labels: np.ndarray
    codes: np.ndarray
    entries: np.ndarray  # (n, m, d) newest-first queues, or None without context

    def __len__(self):
        return self.labels.shape[0]


def queue_entries(model, pool, idx):
    """Newest-first queues for frames ``idx`` of ``pool`` under the current generator."""
    m, d = model.config.m, model.config.d
    n = len(idx)
    if model.ctx is None or m == 0:
        return None
    back = np.arange(1, m + 1)
    src = idx[:, None] - back[None, :]
    valid = pool.position[idx][:, None] >= back[None, :]
    need = np.unique(src[valid])
    entries = np.zeros((n, m, d))
    if need.size:
        with no_grad():
            states = model.gen.encode(pool.frames[need], train=False).data
        entries[valid] = states[np.searchsorted(need, src[valid])]
    return entries


def make_batch(model, pool, idx):
    idx = np.asarray(idx)
    return LabeledBatch(pool.frames[idx], pool.labels[idx], pool.codes[idx],
                        queue_entries(model, pool, idx))


def _context(model, entries, n):
    if entries is None:
        return Tensor(np.zeros((n, model.config.d)))
    return model.context(entries)


def d_loss(batch, model, lambda_c, noise):
    """Discriminator loss; the second half of ``batch`` gets generated codes."""
    h = len(batch) // 2
    fake_rows = slice(h, None)
    entries = None if batch.entries is None else batch.entries[fake_rows]
    with no_grad():
        c = _context(model, entries, len(batch) - h)
        fake, _ = model.gen.forward(batch.x[fake_rows], noise.sample(len(batch) - h), c,
                                    train=True, update_stats=False)
    codes = np.concatenate([batch.codes[:h], fake.data])
    p, probs = model.disc.forward(batch.x, codes, train=True, update_stats=True)
    return d_loss_terms(getitem(p, slice(0, h)), getitem(p, slice(h, None)), probs,
                        batch.labels, lambda_c)


def g_loss(batch, model, lambda_c, noise):
    c = _context(model, batch.entries, len(batch))
    codes, _ = model.gen.forward(batch.x, noise.sample(len(batch)), c, train=True, update_stats=True)
    p, probs = model.disc.forward(batch.x, codes, train=True, update_stats=False)
    return g_loss_terms(p, probs, batch.labels, lambda_c), codes


def supervised_loss(batch, model, noise):
    c = _context(model, batch.entries, len(batch))
    codes, _ = model.gen.forward(batch.x, noise.sample(len(batch)), c, train=True, update_stats=True)
    return layers.ce_loss(model.gen.class_probs(codes), batch.labels)


class Trainer:
    """Holds a model, its two Adam states, and the training RNG."""

    def __init__(self, model, config, rng=None):
        self.model = model
        self.config = config
        self.variant = get_variant(config.variant)
        gen_params = dict(model.gen.parameters())
        gen_params.update(model.context_parameters())
        self.opt_g = Adam(gen_params, lr=config.lr, beta1=config.beta1, beta2=config.beta2)
        self.opt_d = Adam(model.disc.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2)
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.noise = NoiseSource(model.config, rng=self.rng)

    def set_lr(self, lr):
        self.opt_g.lr = lr
        self.opt_d.lr = lr

    def train_step(self, batch):
        """One D update then one G(+context) update; returns (d_loss, g_loss)."""
        model, v = self.model, self.variant
        lam = self.config.effective_lambda
        d_val = 0.0
        if v.adversarial:
            self.opt_d.zero_grad()
            loss = d_loss(batch, model, lam, self.noise)
            loss.backward()
            self.opt_d.step()
            d_val = loss.item()
        if self.config.freeze_generator:
            return d_val, self._g_value_only(batch, lam)
        self.opt_g.zero_grad()
        if v.adversarial:
            loss, codes = g_loss(batch, model, lam, self.noise)
            loss.backward()
            g_val = loss.item()
            if v.gen_class_head:
                head = layers.ce_loss(model.gen.class_probs(Tensor(codes.data)), batch.labels)
                head.backward()
            self.opt_d.zero_grad()
        else:
            loss = supervised_loss(batch, model, self.noise)
            loss.backward()
            g_val = loss.item()
        self.opt_g.step()
        return d_val, g_val

    def _g_value_only(self, batch, lam):
        with no_grad():
            if self.variant.adversarial:
                loss, _ = g_loss(batch, self.model, lam, self.noise)
            else:
                loss = supervised_loss(batch, self.model, self.noise)
        return loss.item()

    def run_epoch(self, pool):
        bs = self.config.batch_size
        perm = self.rng.permutation(len(pool))
        n_batches = len(pool) // bs
        if n_batches == 0:
            raise ConfigurationError(f"{len(pool)} training frames cannot fill one batch of {bs}")
        d_sum = g_sum = 0.0
        for b in range(n_batches):
            batch = make_batch(self.model, pool, perm[b * bs:(b + 1) * bs])
            d_val, g_val = self.train_step(batch)
            d_sum += d_val
            g_sum += g_val
        return d_sum / n_batches, g_sum / n_batches


def train_step(batch, trainer):
    return trainer.train_step(batch)


def new_model(config, k, frame_shape):
    config.validate()
    model = build_model(config.model_config(k, frame_shape), config.seed)
    model.extra["predictor"] = "gen" if get_variant(config.variant).gen_class_head else "disc"
    return model


def format_loss_log(rows):
    lines = ["epoch,d_loss,g_loss,lr"]
    for epoch, d, g, lr in rows:
        lines.append(f"{epoch},{d!r},{g!r},{lr!r}")
    return "\n".join(lines) + "\n"


def train_epochs(dataset, config, out_dir=None, resume=None, stop_after=None, progress=None):
    """Train on the dataset's train split.

    Writes ``checkpoint.bin`` (after every epoch) and ``losses.csv`` into
    ``out_dir`` when given.  ``resume`` is a checkpoint path to continue from;
    ``stop_after`` ends the run after that many epochs in total.
    Returns (model, loss_rows).
    """
    from .checkpoint import checkpoint_load, checkpoint_save

    config.validate()
    pool = FramePool(dataset.split("train"), dataset.manifest.k)
    if resume is not None:
        ckpt = checkpoint_load(resume)
        if asdict(ckpt.train_config) != asdict(config):
            raise ConfigurationError("resume: checkpoint was written with a different training config")
        model = ckpt.model
        trainer = Trainer(model, config)
        trainer.opt_g.load_state_dict(ckpt.optimizers["gen"])
        trainer.opt_d.load_state_dict(ckpt.optimizers["disc"])
        trainer.rng.bit_generator.state = ckpt.rng_state
        rows = [tuple(r) for r in ckpt.loss_log]
        start = ckpt.epoch
    else:
        model = new_model(config, dataset.manifest.k, dataset.manifest.frame_shape)
        trainer = Trainer(model, config)
        rows = []
        start = 0
    end = config.total_epochs if stop_after is None else min(stop_after, config.total_epochs)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    phases = config.lr_phases()
    for epoch in range(start + 1, end + 1):
        lr = step_schedule(epoch, phases)
        trainer.set_lr(lr)
        d_val, g_val = trainer.run_epoch(pool)
        rows.append((epoch, d_val, g_val, lr))
        log.info("epoch %d  d_loss %.4f  g_loss %.4f  lr %g", epoch, d_val, g_val, lr)
        if progress is not None:
            progress(epoch, d_val, g_val, lr)
        if out_dir is not None:
            checkpoint_save(os.path.join(out_dir, "checkpoint.bin"), model, config, trainer=trainer,
                            epoch=epoch, loss_log=rows)
            with open(os.path.join(out_dir, "losses.csv"), "w") as fh:
                fh.write(format_loss_log(rows))
    return model, rows


# -- inference -----------------------------------------------------------------


def _check_video(model, video):
    cfg = model.config
    if tuple(video.frames.shape[1:]) != cfg.frame_shape:
        raise ConfigurationError(
            f"video frames {video.frames.shape[1:]} do not match checkpoint frame shape {cfg.frame_shape}")


def _predict_probs(model, x, codes):
    if model.extra.get("predictor", "disc") == "gen":
        return model.gen.class_probs(codes)
    return model.disc.forward(x, codes, train=False)[1]


def infer_labels(video, model, seed=0):
    """Per-frame (labels, class_probs) for one video, frames in temporal order.

    Equivalent to :class:`StreamingSegmenter` fed frame by frame; done here in
    one batched pass because in eval mode every frame's computation depends
    only on the encoder states of the frames before it.
    """
    _check_video(model, video)
    cfg = model.config
    x = np.asarray(video.frames, dtype=np.float64)
    T = x.shape[0]
    noise = NoiseSource(cfg, seed)
    with no_grad():
        z = np.concatenate([noise.sample(1) for _ in range(T)]) if T else noise.sample(0)
        states = model.gen.encode(x, train=False).data
        if model.ctx is None or cfg.m == 0:
            c = Tensor(np.zeros((T, cfg.d)))
        else:
            c = model.context(history_windows(states, cfg.m))
        codes, _ = model.gen.forward(x, z, c, train=False)
        probs = _predict_probs(model, x, codes).data
    return np.argmax(probs, axis=1), probs


class StreamingSegmenter:
    """Frame-at-a-time inference with an explicit context queue."""

    def __init__(self, model, seed=0):
        self.model = model
        self.seed = seed
        cfg = model.config
        self.queue = ContextQueue(cfg.m if model.ctx is not None else 0, cfg.d)
        self.reset()

    def reset(self):
        self.queue.reset()
        self.noise = NoiseSource(self.model.config, self.seed)

    def step(self, frame):
        model = self.model
        cfg = model.config
        x = np.asarray(frame, dtype=np.float64).reshape((1,) + cfg.frame_shape)
        with no_grad():
            if self.queue.capacity == 0:
                c = Tensor(np.zeros((1, cfg.d)))
            else:
                c = model.context(self.queue.snapshot()[None])
            code, s = model.gen.forward(x, self.noise.sample(1), c, train=False)
            probs = _predict_probs(model, x, code).data[0]
        self.queue.push(s.data[0])
        return int(np.argmax(probs)), probs


def detections_from_predictions(labels, probs, include_background=False):
    """Predicted segments scored by the mean probability of their class."""
    out = []
    for seg in extract_segments(labels):
        if seg.cls == 0 and not include_background:
            continue
        score = float(np.mean(probs[seg.start:seg.end + 1, seg.cls]))
        out.append(Detection(seg.cls, seg.start, seg.end, score))
    return out


__all__ = [
    "VARIANTS", "Variant", "TrainConfig", "LabeledBatch", "FramePool", "Trainer",
    "d_loss", "g_loss", "d_loss_terms", "g_loss_terms", "train_step", "train_epochs",
    "infer_labels", "StreamingSegmenter", "new_model", "make_batch", "detections_from_predictions",
]
