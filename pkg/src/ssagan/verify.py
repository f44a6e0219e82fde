"""Finite-difference checks of every primitive, the context modules, and both losses."""

from __future__ import annotations

import numpy as np

from . import layers
from .action_code import encode_batch
from .autograd import Tensor, mul, tsum
from .gce import GceParams, LstmParams, gce_forward_batch, lstm_context_batch
from .gradcheck import grad_check
from .model import ModelConfig, build_model
from .training import LabeledBatch, d_loss, g_loss


class FixedNoise:
    """Noise source that returns the same draw every call (finite differences need it)."""

    def __init__(self, values):
        self.values = values

    def sample(self, n):
        return self.values[:n]


def _leaf(rng, shape, name, low=None, scale=1.0):
    if low is None:
        data = rng.standard_normal(shape) * scale
    else:
        # magnitudes in [low, low + scale], random sign: keeps relu away from its kink
        data = (low + scale * rng.random(shape)) * rng.choice([-1.0, 1.0], size=shape)
    return Tensor(data, requires_grad=True, name=name)


def _layer_cases(rng):
    cases = {}

    x, W, b = _leaf(rng, (4, 5), "x"), _leaf(rng, (5, 3), "W"), _leaf(rng, (3,), "b")
    R = rng.standard_normal((4, 3))
    cases["affine"] = (lambda: tsum(mul(layers.affine(x, W, b), Tensor(R))), [x, W, b])

    xi, K = _leaf(rng, (2, 2, 5, 5), "x"), _leaf(rng, (3, 2, 3, 3), "kernel")
    Rc = rng.standard_normal((2, 3, 3, 3))
    cases["conv2d"] = (lambda: tsum(mul(layers.conv2d(xi, K, stride=2, padding=1), Tensor(Rc))), [xi, K])

    xb, gam, bet = _leaf(rng, (6, 4), "x"), _leaf(rng, (4,), "gamma"), _leaf(rng, (4,), "beta")
    Rb = rng.standard_normal((6, 4))
    st = layers.BatchNormState(4)
    cases["batch_norm"] = (
        lambda: tsum(mul(layers.batch_norm(xb, gam, bet, st, train=True, update_state=False), Tensor(Rb))),
        [xb, gam, bet])

    xs, gs, bs = _leaf(rng, (3, 2, 4, 4), "x"), _leaf(rng, (2,), "gamma"), _leaf(rng, (2,), "beta")
    Rs = rng.standard_normal((3, 2, 4, 4))
    sst = layers.BatchNormState(2)
    cases["spatial_batch_norm"] = (
        lambda: tsum(mul(layers.spatial_batch_norm(xs, gs, bs, sst, train=True, update_state=False),
                         Tensor(Rs))),
        [xs, gs, bs])

    for kind in ("relu", "tanh", "sigmoid", "softmax"):
        xa = _leaf(rng, (5, 4), "x", low=0.05)
        Ra = rng.standard_normal((5, 4))
        cases[kind] = ((lambda xa=xa, Ra=Ra, kind=kind:
                        tsum(mul(layers.activation(kind, xa), Tensor(Ra)))), [xa])

    xd = _leaf(rng, (6, 5), "x")
    Rd = rng.standard_normal((6, 5))
    cases["dropout"] = (
        lambda: tsum(mul(layers.dropout(xd, 0.5, np.random.default_rng(3)), Tensor(Rd))), [xd])

    p = Tensor(0.1 + 0.8 * rng.random(7), requires_grad=True, name="p")
    target = (rng.random(7) < 0.5).astype(np.float64)
    cases["bce_loss"] = (lambda: layers.bce_loss(p, target), [p])

    probs = Tensor(0.1 + rng.random((5, 3)), requires_grad=True, name="probs")
    labels = rng.integers(0, 3, size=5)
    cases["ce_loss"] = (lambda: layers.ce_loss(probs, labels), [probs])
    return cases


def _context_cases(rng, d, m):
    cases = {}
    entries = rng.standard_normal((3, m, d))
    Rc = rng.standard_normal((3, d))
    for mode in ("scalar", "vector"):
        gp = GceParams(m, d, mode, rng=np.random.default_rng(rng.integers(1 << 31)))
        cases[f"gce_{mode}"] = ((lambda gp=gp: tsum(mul(gce_forward_batch(entries, gp), Tensor(Rc)))),
                                list(gp.parameters().values()))
    lp = LstmParams(d, rng=np.random.default_rng(rng.integers(1 << 31)), m=m)
    cases["lstm"] = (lambda: tsum(mul(lstm_context_batch(entries, lp), Tensor(Rc))),
                     list(lp.parameters().values()))
    return cases


def tiny_model(d=4, m=3, k=3, context="gce", seed=0):
    cfg = ModelConfig(frame_shape=(5,), k=k, d=d, m=m, noise_dim=2, enc_widths=(d,),
                      fusion_width=6, trunk_width=6, context=context)
    return build_model(cfg.validate(), seed)


def _loss_cases(rng, d, m, k, lambda_c=1.0, context="gce"):
    model = tiny_model(d, m, k, context=context, seed=int(rng.integers(1 << 31)))
    n = 6
    labels = np.arange(n) % k
    batch = LabeledBatch(x=rng.standard_normal((n, 5)), labels=labels,
                         codes=encode_batch(labels, k), entries=rng.standard_normal((n, m, d)))
    noise = FixedNoise(rng.standard_normal((n, model.config.noise_dim)))
    d_params = list(model.disc.parameters().values())
    g_params = list(model.gen.parameters().values()) + list(model.context_parameters().values())
    return {
        "d_loss": (lambda: d_loss(batch, model, lambda_c, noise), d_params),
        "g_loss": (lambda: g_loss(batch, model, lambda_c, noise)[0], g_params),
    }


def gradcheck_suite(tol=1e-4, h=1e-4, seed=0, d=4, m=3, k=3):
    """Run every check; returns an ordered list of (name, GradCheckReport)."""
    rng = np.random.default_rng(seed)
    cases = {}
    cases.update(_layer_cases(rng))
    cases.update(_context_cases(rng, d, m))
    cases.update(_loss_cases(rng, d, m, k))
    lstm = _loss_cases(rng, d, m, k, context="lstm")
    cases["g_loss_lstm"] = lstm["g_loss"]
    return [(name, grad_check(f, params, h=h, tol=tol)) for name, (f, params) in cases.items()]
