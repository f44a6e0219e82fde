"""
Generator and discriminator networks.

Vector frames go through ``affine -> batch norm -> relu`` groups, image frames
through ``conv -> batch norm -> relu`` groups (3x3, stride 2, pad 1).  The
flattened encoder output is both the generator's hidden state ``s_t`` (the
thing pushed onto the context queue) and the input of its fusion layer:

    G:  [enc(x); z; c] -> affine/BN/relu -> affine -> sigmoid -> code (k)
    D:  [enc(x); code] -> affine/BN/relu -> FC(1) sigmoid  (real/fake)
                                         -> FC(k) softmax  (class probs)

With ``noise_mode="dropout"`` there is no z input; the noise is a dropout
keep-mask on the fusion layer instead.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers
from .autograd import Tensor, as_tensor, concat, reshape
from .errors import ConfigurationError, DimensionError
from .gce import GceParams, LstmParams, gce_forward_batch, lstm_context_batch

CONTEXT_MODES = ("gce", "lstm", "none")


@dataclass
class ModelConfig:
    frame_shape: tuple = (16,)
    k: int = 6
    d: int = 64
    m: int = 16
    noise_dim: int = 16
    enc_widths: tuple = (64, 64)
    fusion_width: int = 64
    trunk_width: int = 64
    context: str = "gce"
    gate_mode: str = "scalar"
    classifier_input: str = "joint"
    noise_mode: str = "concat"
    dropout_rate: float = 0.5
    gen_class_head: bool = False
    bn_momentum: float = layers.BN_MOMENTUM
    bn_eps: float = layers.BN_EPS

    def __post_init__(self):
        self.frame_shape = tuple(int(v) for v in self.frame_shape)
        self.enc_widths = tuple(int(v) for v in self.enc_widths)

    @property
    def is_image(self):
        return len(self.frame_shape) == 3

    def encoder_output_dim(self):
        if not self.is_image:
            return self.enc_widths[-1]
        _, h, w = self.frame_shape
        for _ in self.enc_widths:
            h = (h + 2 - 3) // 2 + 1
            w = (w + 2 - 3) // 2 + 1
        return self.enc_widths[-1] * h * w

    def validate(self):
        if self.k < 2:
            raise ConfigurationError(f"k must be >= 2 (background + at least one action), got {self.k}")
        if len(self.frame_shape) not in (1, 3):
            raise ConfigurationError(f"frame_shape must be (D,) or (C, H, W), got {self.frame_shape}")
        if not self.enc_widths or min(self.enc_widths) < 1:
            raise ConfigurationError(f"enc_widths must be positive, got {self.enc_widths}")
        if self.m < 0 or self.d < 1 or self.noise_dim < 0:
            raise ConfigurationError(f"bad m={self.m} / d={self.d} / noise_dim={self.noise_dim}")
        if self.encoder_output_dim() != self.d:
            raise ConfigurationError(
                f"encoder output dimension {self.encoder_output_dim()} != d={self.d}")
        if self.context not in CONTEXT_MODES:
            raise ConfigurationError(f"context must be one of {CONTEXT_MODES}, got {self.context!r}")
        if self.gate_mode not in ("scalar", "vector"):
            raise ConfigurationError(f"gate_mode must be scalar|vector, got {self.gate_mode!r}")
        if self.classifier_input not in ("joint", "frame"):
            raise ConfigurationError(f"classifier_input must be joint|frame, got {self.classifier_input!r}")
        if self.noise_mode not in ("concat", "dropout"):
            raise ConfigurationError(f"noise_mode must be concat|dropout, got {self.noise_mode!r}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        return self

    def architecture(self):
        """The fields a checkpoint must agree on to be loadable."""
        return asdict(self)


def _param_rng(seed, name):
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def _uniform(seed, name, shape, fan_in):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(_param_rng(seed, name).uniform(-bound, bound, shape), requires_grad=True, name=name)


class _Net:
    """Shared plumbing: named parameters, batch-norm states, encoder."""

    prefix = ""

    def __init__(self, config, seed):
        self.config = config
        self.params = {}
        self.bn = {}
        self._seed = seed

    def _weight(self, name, shape, fan_in):
        full = f"{self.prefix}.{name}"
        self.params[full] = _uniform(self._seed, full, shape, fan_in)
        return self.params[full]

    def _zeros(self, name, shape, value=0.0):
        full = f"{self.prefix}.{name}"
        self.params[full] = Tensor(np.full(shape, value), requires_grad=True, name=full)
        return self.params[full]

    def _bn_layer(self, name, dim):
        self._zeros(f"{name}.gamma", (dim,), 1.0)
        self._zeros(f"{name}.beta", (dim,))
        self.bn[f"{self.prefix}.{name}"] = layers.BatchNormState(
            dim, self.config.bn_momentum, self.config.bn_eps)

    def p(self, name):
        return self.params[f"{self.prefix}.{name}"]

    def _build_encoder(self):
        cfg = self.config
        if cfg.is_image:
            c = cfg.frame_shape[0]
            for i, width in enumerate(cfg.enc_widths):
                self._weight(f"enc{i}.K", (width, c, 3, 3), c * 9)
                self._bn_layer(f"enc{i}.bn", width)
                c = width
        else:
            dim = cfg.frame_shape[0]
            for i, width in enumerate(cfg.enc_widths):
                self._weight(f"enc{i}.W", (dim, width), dim)
                self._bn_layer(f"enc{i}.bn", width)
                dim = width

    def _bn(self, name, x, train, update_stats):
        return layers.batch_norm(x, self.p(f"{name}.gamma"), self.p(f"{name}.beta"),
                                 self.bn[f"{self.prefix}.{name}"], train=train, update_state=update_stats)

    def encode(self, x, train=False, update_stats=False):
        """Flattened encoder features, shape (n, d)."""
        cfg = self.config
        x = as_tensor(x)
        if x.shape[1:] != cfg.frame_shape:
            raise DimensionError(f"frames of shape {x.shape[1:]} do not match config {cfg.frame_shape}")
        h = x
        if cfg.is_image:
            for i in range(len(cfg.enc_widths)):
                h = layers.conv2d(h, self.p(f"enc{i}.K"), stride=2, padding=1)
                name = f"enc{i}.bn"
                h = layers.spatial_batch_norm(h, self.p(f"{name}.gamma"), self.p(f"{name}.beta"),
                                              self.bn[f"{self.prefix}.{name}"], train=train,
                                              update_state=update_stats)
                h = layers.relu(h)
            return reshape(h, (h.shape[0], -1))
        for i in range(len(cfg.enc_widths)):
            h = layers.affine(h, self.p(f"enc{i}.W"))
            h = layers.relu(self._bn(f"enc{i}.bn", h, train, update_stats))
        return h

    def parameters(self):
        return dict(self.params)

    def n_params(self):
        return sum(p.size for p in self.params.values())


class Generator(_Net):
    prefix = "gen"

    def __init__(self, config, seed):
        super().__init__(config, seed)
        cfg = config
        self._build_encoder()
        fuse_in = cfg.d + cfg.d + (cfg.noise_dim if cfg.noise_mode == "concat" else 0)
        self._weight("fuse.W", (fuse_in, cfg.fusion_width), fuse_in)
        self._bn_layer("fuse.bn", cfg.fusion_width)
        self._weight("code.W", (cfg.fusion_width, cfg.k), cfg.fusion_width)
        self._zeros("code.b", (cfg.k,))
        if cfg.gen_class_head:
            self._weight("cls.W", (cfg.k, cfg.k), cfg.k)
            self._zeros("cls.b", (cfg.k,))

    def forward(self, x, z, c, train=False, update_stats=False):
        """Return (code, s): internal-form codes (n, k) and hidden states (n, d).

        ``z`` is the noise sample from :class:`NoiseSource` (a concatenated
        vector or a dropout keep-mask, per ``noise_mode``); ``c`` the (n, d)
        context vectors.
        """
        cfg = self.config
        s = self.encode(x, train=train, update_stats=update_stats)
        c = as_tensor(c)
        if c.shape != (s.shape[0], cfg.d):
            raise DimensionError(f"context {c.shape} does not fit {(s.shape[0], cfg.d)}")
        parts = [s, c]
        if cfg.noise_mode == "concat":
            parts.insert(1, as_tensor(z))
        h = layers.affine(concat(parts, axis=1), self.p("fuse.W"))
        h = layers.relu(self._bn("fuse.bn", h, train, update_stats))
        if cfg.noise_mode == "dropout":
            h = h * as_tensor(z)
        code = layers.sigmoid(layers.affine(h, self.p("code.W"), self.p("code.b")))
        return code, s

    def class_probs(self, code):
        """Softmax head appended to the generator (supervised / cGAN variants)."""
        if not self.config.gen_class_head:
            raise ConfigurationError("generator was built without a class head")
        return layers.softmax(layers.affine(code, self.p("cls.W"), self.p("cls.b")))

    def class_head_parameters(self):
        return {k: v for k, v in self.params.items() if k.startswith("gen.cls.")}


class Discriminator(_Net):
    prefix = "disc"

    def __init__(self, config, seed):
        super().__init__(config, seed)
        cfg = config
        self._build_encoder()
        trunk_in = cfg.d + cfg.k
        self._weight("trunk.W", (trunk_in, cfg.trunk_width), trunk_in)
        self._bn_layer("trunk.bn", cfg.trunk_width)
        self._weight("adv.W", (cfg.trunk_width, 1), cfg.trunk_width)
        self._zeros("adv.b", (1,))
        cls_in = cfg.trunk_width if cfg.classifier_input == "joint" else cfg.d
        self._weight("cls.W", (cls_in, cfg.k), cls_in)
        self._zeros("cls.b", (cfg.k,))

    def forward(self, x, code, train=False, update_stats=False):
        """Return (real_prob (n,), class_probs (n, k))."""
        cfg = self.config
        e = self.encode(x, train=train, update_stats=update_stats)
        code = as_tensor(code)
        if code.shape != (e.shape[0], cfg.k):
            raise DimensionError(f"codes {code.shape} do not fit {(e.shape[0], cfg.k)}")
        t = layers.affine(concat([e, code], axis=1), self.p("trunk.W"))
        t = layers.relu(self._bn("trunk.bn", t, train, update_stats))
        real = layers.sigmoid(layers.affine(t, self.p("adv.W"), self.p("adv.b")))
        cls_in = t if cfg.classifier_input == "joint" else e
        probs = layers.softmax(layers.affine(cls_in, self.p("cls.W"), self.p("cls.b")))
        return reshape(real, (e.shape[0],)), probs

    def class_head_parameters(self):
        return {k: v for k, v in self.params.items() if k.startswith("disc.cls.")}


class NoiseSource:
    """Seeded per-frame noise: z vectors, or dropout keep-masks."""

    def __init__(self, config, seed=None, rng=None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(seed)

    def sample(self, n):
        cfg = self.config
        if cfg.noise_mode == "concat":
            return self.rng.standard_normal((n, cfg.noise_dim))
        keep = self.rng.random((n, cfg.fusion_width)) >= cfg.dropout_rate
        return keep / (1.0 - cfg.dropout_rate)

    def neutral(self, n):
        """Noise-free input: zero z, or an all-ones mask."""
        cfg = self.config
        if cfg.noise_mode == "concat":
            return np.zeros((n, cfg.noise_dim))
        return np.ones((n, cfg.fusion_width))


def build_context(config, seed):
    if config.context == "gce":
        g = 1 if config.gate_mode == "scalar" else config.d
        m, d = config.m, config.d
        W_h = _uniform(seed, "gce.W_h", (d, d), d)
        W_q = _uniform(seed, "gce.W_q", (m * g, m * d), m * d)
        return GceParams(m, d, config.gate_mode, W_h=W_h, W_q=W_q)
    if config.context == "lstm":
        d = config.d
        W = _uniform(seed, "lstm.W", (2 * d, 4 * d), 2 * d)
        b = Tensor(np.zeros(4 * d), requires_grad=True, name="lstm.b")
        return LstmParams(d, W=W, b=b, m=config.m)
    return None


@dataclass
class Model:
    config: ModelConfig
    gen: Generator
    disc: Discriminator
    ctx: object = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def context(self, entries):
        """Context vectors (n, d) from an (n, m, d) array of newest-first queues."""
        cfg = self.config
        entries = np.asarray(entries.data if isinstance(entries, Tensor) else entries)
        n = entries.shape[0]
        if self.ctx is None or cfg.m == 0:
            return Tensor(np.zeros((n, cfg.d)))
        if isinstance(self.ctx, GceParams):
            return gce_forward_batch(entries, self.ctx)
        return lstm_context_batch(entries, self.ctx)

    def context_parameters(self):
        return {} if self.ctx is None else self.ctx.parameters()

    def parameters(self):
        out = {}
        out.update(self.gen.parameters())
        out.update(self.context_parameters())
        out.update(self.disc.parameters())
        return out

    def buffers(self):
        out = {}
        for net in (self.gen, self.disc):
            for name, st in net.bn.items():
                out[f"{name}.running_mean"] = st.mean
                out[f"{name}.running_var"] = st.var
        return out

    def load_buffers(self, buffers):
        for net in (self.gen, self.disc):
            for name, st in net.bn.items():
                st.mean = np.array(buffers[f"{name}.running_mean"], dtype=np.float64)
                st.var = np.array(buffers[f"{name}.running_var"], dtype=np.float64)

    def n_params(self):
        return sum(p.size for p in self.parameters().values())


def init_params(config, seed):
    """Build (Generator, Discriminator, context params) deterministically from ``seed``.

    Each tensor draws from its own stream keyed by (seed, name), so adding or
    removing a head never shifts the initial values of the others.
    """
    config.validate()
    return Generator(config, seed), Discriminator(config, seed), build_context(config, seed)


def build_model(config, seed):
    gen, disc, ctx = init_params(config, seed)
    return Model(config, gen, disc, ctx, seed)


def expected_param_count(config):
    """Closed-form parameter count of :func:`init_params` for ``config``."""
    cfg = config
    enc = 0
    if cfg.is_image:
        c = cfg.frame_shape[0]
        for w in cfg.enc_widths:
            enc += w * c * 9 + 2 * w
            c = w
    else:
        dim = cfg.frame_shape[0]
        for w in cfg.enc_widths:
            enc += dim * w + 2 * w
            dim = w
    F, T, k, d, m = cfg.fusion_width, cfg.trunk_width, cfg.k, cfg.d, cfg.m
    fuse_in = 2 * d + (cfg.noise_dim if cfg.noise_mode == "concat" else 0)
    gen = enc + fuse_in * F + 2 * F + F * k + k
    if cfg.gen_class_head:
        gen += k * k + k
    cls_in = T if cfg.classifier_input == "joint" else d
    disc = enc + (d + k) * T + 2 * T + T + 1 + cls_in * k + k
    if cfg.context == "gce":
        g = 1 if cfg.gate_mode == "scalar" else d
        ctx = d * d + (m * g) * (m * d)
    elif cfg.context == "lstm":
        ctx = 2 * d * 4 * d + 4 * d
    else:
        ctx = 0
    return gen + disc + ctx
