"""SGD with classical momentum."""

from __future__ import annotations

import numpy as np

from .tensor import GradientError, ParameterSet


def sgd_step(params: ParameterSet, lr: float, momentum: float = 0.9) -> ParameterSet:
    """v <- momentum * v + grad; p <- p - lr * v.

    Velocity buffers live on the ParameterSet and persist across steps.
    Every parameter must carry a gradient; the set is updated in place and
    returned.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    for name, p in params.items():
        if p.grad is None:
            raise GradientError(f"sgd_step: parameter {name!r} has no gradient")
        v = params.velocities.get(name)
        if v is None:
            v = np.zeros_like(p.data)
            params.velocities[name] = v
        v *= momentum
        v += p.grad
        p.data -= lr * v
    return params
