"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad


class GradientCheckError(FloatingPointError):
    pass


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
    tolerance: float | None = None,
) -> float:
    """Return the maximum relative error between analytic and numeric gradients.

    ``loss_fn`` must be deterministic (fixed noise, dropout off).  The relative
    error for one scalar is ``|a - n| / max(|a|, |n|, 1e-8)``.  When
    ``tolerance`` is given, exceeding it raises :class:`GradientCheckError`.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    for p in params:
        p.grad = None
    with Tape():
        loss = loss_fn()
        backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for k, p in enumerate(params):
            flat = p.data.reshape(-1)
            ga = analytic[k].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = loss_fn().item()
                flat[i] = orig - epsilon
                down = loss_fn().item()
                flat[i] = orig
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise GradientCheckError(
                        f"non-finite loss while probing parameter {k} entry {i}"
                    )
                num = (up - down) / (2.0 * epsilon)
                err = abs(ga[i] - num) / max(abs(ga[i]), abs(num), 1e-8)
                worst = max(worst, err)
    if tolerance is not None and worst > tolerance:
        raise GradientCheckError(f"max relative error {worst:.3e} exceeds {tolerance:.1e}")
    return worst
