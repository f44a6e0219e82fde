"""Adam with bias correction, plus the two-phase step learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ContractError


class Adam:
    """Adam over a fixed, ordered mapping of name -> Tensor.

    Gradients are zeroed after every :meth:`step`.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0 or not 0 <= beta1 < 1 or not 0 <= beta2 < 1 or eps <= 0:
            raise ConfigurationError(f"bad Adam hyper-parameters lr={lr} b1={beta1} b2={beta2} eps={eps}")
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"Adam.step: parameter {name!r} has no gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad.fill(0.0)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self):
        return {
            "t": self.t, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state):
        if set(state["m"]) != set(self.params):
            raise ContractError("optimizer state does not match parameter names")
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])
        for k in self.params:
            self.m[k] = np.array(state["m"][k], dtype=np.float64).reshape(self.params[k].shape)
            self.v[k] = np.array(state["v"][k], dtype=np.float64).reshape(self.params[k].shape)


def adam_step(params, state):
    """Functional spelling of :meth:`Adam.step` (``params`` must be ``state``'s)."""
    if params is not state.params and dict(params) != state.params:
        raise ContractError("adam_step: params do not belong to this optimizer state")
    state.step()


def step_schedule(epoch, phases):
    """Learning rate for 1-based ``epoch`` under ``phases`` = [(n_epochs, lr), ...].

    Epochs past the last phase keep its rate.
    """
    if epoch < 1:
        raise ValueError("epochs are 1-based")
    end = 0
    for n, lr in phases:
        end += n
        if epoch <= end:
            return lr
    return phases[-1][1]
