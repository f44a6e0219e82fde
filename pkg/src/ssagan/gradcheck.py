"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, no_grad
from .errors import ContractError, NumericalError


@dataclass
class GradCheckReport:
    max_relative_error: float
    passed: bool
    tolerance: float
    n_coords: int
    worst: tuple = field(default=None)

    # the report is truthy iff it passed
    def __bool__(self):
        return self.passed


def _scalar(value):
    if isinstance(value, Tensor):
        if value.size != 1:
            raise ContractError(f"grad_check: f must return a scalar, got shape {value.shape}")
        value = value.item()
    value = float(value)
    if not np.isfinite(value):
        raise NumericalError("grad_check: f returned a non-finite value")
    return value


def grad_check(f, params, h=1e-4, tol=1e-4, max_coords=None, rng=None):
    """Compare backprop gradients of ``f()`` with central differences.

    ``params`` is a list (or dict) of leaf tensors that ``f`` closes over.
    The error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    When ``max_coords`` is set, that many coordinates per tensor are sampled
    with ``rng`` instead of sweeping them all.
    """
    if h <= 0:
        raise ContractError(f"grad_check: step h must be positive, got {h}")
    if isinstance(params, dict):
        params = list(params.values())
    for p in params:
        if not p.requires_grad:
            raise ContractError("grad_check: every parameter must require grad")
        p.zero_grad()
    loss = f()
    _scalar(loss)
    loss.backward()
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    worst = 0.0
    worst_at = None
    count = 0
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        coords = range(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = sorted(rng.choice(flat.size, size=max_coords, replace=False))
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                fp = _scalar(f())
                flat[i] = orig - h
                fm = _scalar(f())
                flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            a = analytic[pi].reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(numeric))
            count += 1
            if err > worst or worst_at is None:
                worst = max(err, worst)
                worst_at = (p.name or pi, int(i), float(a), float(numeric))
    return GradCheckReport(max_relative_error=float(worst), passed=bool(worst < tol), tolerance=tol,
                           n_coords=count, worst=worst_at)
