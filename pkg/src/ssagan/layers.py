"""
Layer and loss primitives with hand-written backward rules.

Each primitive is a single tape node, so the backward formula here is the
one that :func:`ssagan.gradcheck.grad_check` actually exercises.
"""

from __future__ import annotations

import numpy as np

from .autograd import DTYPE, Tensor, _node, as_tensor, reshape, transpose
from .errors import ConfigurationError, ContractError, DimensionError

EPS_CLIP = 1e-7
BN_MOMENTUM = 0.1
BN_EPS = 1e-5

# Test hook: names listed here get a deliberately wrong backward rule.
_FAULTS = set()


def inject_fault(name, enabled=True):
    """Corrupt (or restore) the backward rule of primitive ``name``.

    Only meant for negative-control checks of the gradient checker.
    """
    if enabled:
        _FAULTS.add(name)
    else:
        _FAULTS.discard(name)


def affine(x, W, b=None):
    """``x @ W + b`` for x of shape (n, d_in) and W of shape (d_in, d_out)."""
    x, W = as_tensor(x), as_tensor(W)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"affine: x {x.shape} does not fit W {W.shape}")
    if b is None:
        return _node(x.data @ W.data, (x, W), lambda g: (g @ W.data.T, x.data.T @ g))
    b = as_tensor(b)
    if b.shape != (W.shape[1],):
        raise DimensionError(f"affine: bias {b.shape} does not fit W {W.shape}")
    out = x.data @ W.data + b.data

    def backward(g):
        return g @ W.data.T, x.data.T @ g, g.sum(axis=0)

    return _node(out, (x, W, b), backward)


def conv2d(x, kernel, stride=1, padding=0):
    """Cross-correlation of an (n, c, h, w) batch with an (f, c, kh, kw) kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d: bad stride={stride} / padding={padding}")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise DimensionError(f"conv2d: input has {c} channels, kernel {kernel.shape} expects {kc}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(f"conv2d: kernel {kernel.shape} larger than padded input {x.shape}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, f, ho, wo), dtype=DTYPE)
    rows = slice(None)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            out += np.einsum("nchw,fc->nfhw", patch, kernel.data[:, :, i, j], optimize=True)

    def backward(g):
        dxp = np.zeros_like(xp)
        dk = np.zeros_like(kernel.data)
        for i in range(kh):
            for j in range(kw):
                sl = (rows, rows, slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
                dk[:, :, i, j] = np.einsum("nfhw,nchw->fc", g, xp[sl], optimize=True)
                dxp[sl] += np.einsum("nfhw,fc->nchw", g, kernel.data[:, :, i, j], optimize=True)
        dx = dxp[:, :, padding:padding + h, padding:padding + w]
        return dx, dk

    return _node(out, (x, kernel), backward)


class BatchNormState:
    """Running mean/variance for one batch-norm layer."""

    def __init__(self, dim, momentum=BN_MOMENTUM, eps=BN_EPS):
        if eps <= 0:
            raise ConfigurationError(f"batch norm eps must be positive, got {eps}")
        self.mean = np.zeros(dim, dtype=DTYPE)
        self.var = np.ones(dim, dtype=DTYPE)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x, gamma, beta, state, train=True, update_state=True):
    """Normalize the columns of an (n, d) input.

    In training mode the batch statistics are used (and folded into
    ``state`` when ``update_state``); in eval mode only ``state`` is read.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batch_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    if state.eps <= 0:
        raise ConfigurationError(f"batch norm eps must be positive, got {state.eps}")
    n = x.shape[0]
    if n < 1:
        raise ContractError("batch_norm needs at least one row")
    if train:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        if update_state:
            unbiased = var * n / (n - 1) if n > 1 else var
            state.mean = (1 - state.momentum) * state.mean + state.momentum * mu
            state.var = (1 - state.momentum) * state.var + state.momentum * unbiased
    else:
        mu, var = state.mean, state.var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mu) * inv
    out = gamma.data * xhat + beta.data

    def backward(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        gx = g * gamma.data
        if train:
            dx = inv / n * (n * gx - gx.sum(axis=0) - xhat * (gx * xhat).sum(axis=0))
        else:
            dx = gx * inv
        return dx, dgamma, dbeta

    return _node(out, (x, gamma, beta), backward)


def spatial_batch_norm(x, gamma, beta, state, train=True, update_state=True):
    """Per-channel batch norm for (n, c, h, w) feature maps."""
    n, c, h, w = x.shape
    flat = reshape(transpose(x, (0, 2, 3, 1)), (n * h * w, c))
    y = batch_norm(flat, gamma, beta, state, train=train, update_state=update_state)
    return transpose(reshape(y, (n, h, w, c)), (0, 3, 1, 2))


# -- activations ---------------------------------------------------------


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)
    scale = 1.5 if "sigmoid" in _FAULTS else 1.0
    return _node(y, (x,), lambda g: (scale * g * y * (1.0 - y),))


def softmax(x):
    """Softmax over the last axis."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), backward)


_ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid, "softmax": softmax}


def activation(kind, x):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")
    return fn(x)


def dropout(x, rate, rng):
    """Inverted dropout driven by an explicit generator (used as a noise source)."""
    x = as_tensor(x)
    if rate <= 0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _node(x.data * keep, (x,), lambda g: (g * keep,))


# -- losses ----------------------------------------------------------------


def bce_loss(p, target, eps_clip=EPS_CLIP):
    """Mean binary cross-entropy of probabilities ``p`` against 0/1 targets."""
    p = as_tensor(p)
    t = np.broadcast_to(np.asarray(target, dtype=DTYPE), p.shape)
    pc = np.clip(p.data, eps_clip, 1.0 - eps_clip)
    n = p.data.size
    loss = -(t * np.log(pc) + (1 - t) * np.log(1 - pc)).mean()
    inside = (p.data > eps_clip) & (p.data < 1.0 - eps_clip)

    def backward(g):
        return (g * inside * (-(t / pc) + (1 - t) / (1 - pc)) / n,)

    return _node(np.asarray(loss, DTYPE), (p,), backward)


def ce_loss(probs, labels, eps_clip=EPS_CLIP):
    """Mean negative log-probability of the labelled class, rows of ``probs``."""
    probs = as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, k = probs.shape
    if labels.shape[0] != n:
        raise DimensionError(f"ce_loss: {n} rows but {labels.shape[0]} labels")
    if labels.size and (labels.max() >= k or labels.min() < 0):
        raise IndexError(f"ce_loss: label out of range for {k} classes")
    rows = np.arange(n)
    picked = probs.data[rows, labels]
    pc = np.clip(picked, eps_clip, 1.0 - eps_clip)
    loss = -np.log(pc).mean()
    inside = (picked > eps_clip) & (picked < 1.0 - eps_clip)

    def backward(g):
        d = np.zeros_like(probs.data)
        d[rows, labels] = -g * inside / pc / n
        return (d,)

    return _node(np.asarray(loss, DTYPE), (probs,), backward)


__all__ = [
    "Tensor", "affine", "conv2d", "BatchNormState", "batch_norm", "spatial_batch_norm",
    "relu", "tanh", "sigmoid", "softmax", "activation", "dropout", "bce_loss", "ce_loss",
    "inject_fault", "EPS_CLIP",
]
