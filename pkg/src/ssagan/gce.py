"""
Gated Context Extractor.

A :class:`ContextQueue` keeps the generator states of the last ``m`` frames,
newest first: ``entries[j - 1]`` is the state from ``j`` frames ago.  Each
queue slot ``j`` has a gated attention unit

    h_j = tanh(W_h s_j)
    q_j = sigmoid(W_q[j] . [s_{t-m}, ..., s_{t-1}])
    r_j = h_j * q_j

and the context vector is ``c = sum_j r_j``.  ``W_h`` is shared by every slot;
each slot owns its own gate row(s) in ``W_q`` (one row for a scalar gate,
``d`` rows for a vector gate).  Missing history is zero padding, which
contributes exactly nothing because ``tanh(0) = 0``.

The batched entry points take an ``(n, m, d)`` array of queues so that a
whole mini-batch of frames, each with its own history, goes through the
tape as a handful of nodes.
"""

from __future__ import annotations

import numpy as np

from . import layers
from .autograd import Tensor, as_tensor, concat, getitem, matmul, mul, reshape, transpose
from .errors import ConfigurationError, ContractError


class ContextQueue:
    """Fixed-capacity FIFO of hidden states, newest first."""

    def __init__(self, capacity, dim):
        if capacity < 0 or dim < 1:
            raise ConfigurationError(f"ContextQueue needs capacity >= 0 and dim >= 1, got {capacity}, {dim}")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.entries = np.zeros((self.capacity, self.dim))
        self.fill = 0

    def push(self, state):
        state = np.asarray(state.data if isinstance(state, Tensor) else state, dtype=np.float64).reshape(-1)
        if state.shape[0] != self.dim:
            raise ContractError(f"queue holds {self.dim}-dim states, got {state.shape[0]}")
        if self.capacity == 0:
            return
        self.entries[1:] = self.entries[:-1].copy()
        self.entries[0] = state
        self.fill = min(self.fill + 1, self.capacity)

    def reset(self):
        self.entries[:] = 0.0
        self.fill = 0

    def __len__(self):
        return self.fill

    def snapshot(self):
        """The zero-padded (m, d) entry array, newest first."""
        return self.entries.copy()

    def items(self):
        """Filled entries only, newest first."""
        return [self.entries[j].copy() for j in range(self.fill)]


def queue_push(q, s):
    q.push(s)


def queue_reset(q):
    q.reset()


def history_windows(states, m):
    """Queues for every frame of one video: out[t, j-1] = states[t - j] (or 0).

    ``states`` is the (T, d) array of per-frame generator states in order.
    """
    states = np.asarray(states, dtype=np.float64)
    T, d = states.shape
    padded = np.concatenate([np.zeros((m, d)), states], axis=0)
    out = np.empty((T, m, d))
    for j in range(1, m + 1):
        out[:, j - 1] = padded[m - j:m - j + T]
    return out


class GceParams:
    """Learnable weights of the extractor.

    W_h : (d, d), shared across slots.
    W_q : (m * g, m * d) where g = 1 (scalar gates) or d (vector gates);
          rows ``j*g:(j+1)*g`` gate slot ``j + 1`` and read the oldest-first
          concatenation of the queue.
    """

    def __init__(self, m, d, gate_mode="scalar", rng=None, W_h=None, W_q=None):
        if gate_mode not in ("scalar", "vector"):
            raise ConfigurationError(f"gate_mode must be 'scalar' or 'vector', got {gate_mode!r}")
        self.m, self.d, self.gate_mode = int(m), int(d), gate_mode
        g = self.gate_width
        rng = rng if rng is not None else np.random.default_rng(0)
        if W_h is None:
            W_h = rng.uniform(-1, 1, (d, d)) / np.sqrt(d)
        if W_q is None:
            W_q = rng.uniform(-1, 1, (m * g, m * d)) / np.sqrt(max(m * d, 1))
        self.W_h = W_h if isinstance(W_h, Tensor) else Tensor(W_h, requires_grad=True, name="gce.W_h")
        self.W_q = W_q if isinstance(W_q, Tensor) else Tensor(W_q, requires_grad=True, name="gce.W_q")
        if self.W_h.shape != (d, d) or self.W_q.shape != (m * g, m * d):
            raise ConfigurationError(
                f"GCE weights have shapes {self.W_h.shape}, {self.W_q.shape}; "
                f"expected {(d, d)}, {(m * g, m * d)}")

    @property
    def gate_width(self):
        return 1 if self.gate_mode == "scalar" else self.d

    def parameters(self):
        return {"gce.W_h": self.W_h, "gce.W_q": self.W_q}

    def n_params(self):
        return self.W_h.size + self.W_q.size


def _oldest_first(entries):
    """(n, m, d) newest-first queues -> (n, m*d) oldest-first concatenation."""
    n, m, d = entries.shape
    rev = getitem(entries, (slice(None), slice(None, None, -1), slice(None)))
    return reshape(rev, (n, m * d))


def gate_values(entries, params):
    """Gates q for a batch of queues; shape (n, m, g)."""
    entries = as_tensor(entries)
    n, m, d = entries.shape
    logits = matmul(_oldest_first(entries), transpose(params.W_q))
    return reshape(layers.sigmoid(logits), (n, m, params.gate_width))


def gce_forward_batch(entries, params):
    """Context vectors (n, d) for an (n, m, d) batch of newest-first queues."""
    entries = as_tensor(entries)
    n, m, d = entries.shape
    if m != params.m or d != params.d:
        raise ContractError(f"queue batch {entries.shape} does not fit GCE with m={params.m}, d={params.d}")
    h = layers.tanh(matmul(reshape(entries, (n * m, d)), transpose(params.W_h)))
    q = gate_values(entries, params)
    r = mul(reshape(h, (n, m, d)), q)
    return r.sum(axis=1)


def gce_forward(queue, params):
    """Context vector c_t (length d) for one queue."""
    entries = queue.snapshot() if isinstance(queue, ContextQueue) else queue
    entries = as_tensor(entries)
    return reshape(gce_forward_batch(reshape(entries, (1,) + entries.shape), params), (params.d,))


def gau_forward(s_j, all_entries, params, j):
    """Output r_{t-j} of the gated unit at slot ``j`` (1-based).

    ``all_entries`` is the (m, d) newest-first queue and ``s_j`` its row j-1.
    """
    if not 1 <= j <= params.m:
        raise ContractError(f"slot j must be in 1..{params.m}, got {j}")
    s_j = as_tensor(s_j)
    all_entries = as_tensor(all_entries)
    h = layers.tanh(matmul(reshape(s_j, (1, params.d)), transpose(params.W_h)))
    g = params.gate_width
    flat = _oldest_first(reshape(all_entries, (1,) + all_entries.shape))
    row = getitem(params.W_q, slice((j - 1) * g, j * g))
    q = layers.sigmoid(matmul(flat, transpose(row)))
    return reshape(mul(h, q), (params.d,))


# -- LSTM replacement for the extractor --------------------------------------


class LstmParams:
    """A single LSTM cell, input and hidden size ``d`` (gate order i, f, g, o)."""

    def __init__(self, d, rng=None, W=None, b=None, m=0):
        self.d = int(d)
        self.m = int(m)
        rng = rng if rng is not None else np.random.default_rng(0)
        if W is None:
            W = rng.uniform(-1, 1, (2 * d, 4 * d)) / np.sqrt(2 * d)
        if b is None:
            b = np.zeros(4 * d)
        self.W = W if isinstance(W, Tensor) else Tensor(W, requires_grad=True, name="lstm.W")
        self.b = b if isinstance(b, Tensor) else Tensor(b, requires_grad=True, name="lstm.b")

    def parameters(self):
        return {"lstm.W": self.W, "lstm.b": self.b}

    def n_params(self):
        return self.W.size + self.b.size


def lstm_step(x, h, c, params):
    d = params.d
    z = layers.affine(concat([x, h], axis=1), params.W, params.b)
    i = layers.sigmoid(getitem(z, (slice(None), slice(0, d))))
    f = layers.sigmoid(getitem(z, (slice(None), slice(d, 2 * d))))
    g = layers.tanh(getitem(z, (slice(None), slice(2 * d, 3 * d))))
    o = layers.sigmoid(getitem(z, (slice(None), slice(3 * d, 4 * d))))
    c = f * c + i * g
    h = o * layers.tanh(c)
    return h, c


def lstm_context_batch(entries, params):
    """Run the cell over each queue oldest -> newest; return final hidden (n, d)."""
    entries = as_tensor(entries)
    n, m, d = entries.shape
    h = Tensor(np.zeros((n, d)))
    c = Tensor(np.zeros((n, d)))
    for j in range(m, 0, -1):
        x = getitem(entries, (slice(None), j - 1, slice(None)))
        h, c = lstm_step(x, h, c, params)
    return h


def lstm_context(queue, params):
    entries = queue.snapshot() if isinstance(queue, ContextQueue) else queue
    entries = as_tensor(entries)
    return reshape(lstm_context_batch(reshape(entries, (1,) + entries.shape), params), (params.d,))
