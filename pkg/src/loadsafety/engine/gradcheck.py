"""Finite-difference verification of analytic gradients.

Works at float64 only.  The output is scalarized with a fixed random
weighting S = sum(W * f(args)) so that sign errors cannot cancel, and the
analytic gradient of S is compared elementwise against central
differences (f(x+eps) - f(x-eps)) / 2 eps.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import GradientError

REL_DENOM_FLOOR = 1e-8


def grad_check(
    forward: Callable[..., np.ndarray],
    backward: Callable[..., Sequence[np.ndarray | None]],
    args: Sequence[np.ndarray],
    epsilon: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and numeric gradients.

    ``forward(*args)`` returns an ndarray (a Tensor's .data is fine too).
    ``backward(dout, *args)`` returns one gradient per argument, aligned
    with ``args``; a None entry marks an argument that is not checked.
    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    args = [np.asarray(a) for a in args]
    for a in args:
        if a.dtype != np.float64:
            raise GradientError("grad_check requires float64 inputs")

    def run() -> np.ndarray:
        out = forward(*args)
        return np.asarray(out, dtype=np.float64)

    out = run()
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0x67726164], dtype=np.uint64)))
    weights = rng.standard_normal(out.shape)

    analytic = backward(weights, *args)
    if len(analytic) != len(args):
        raise ValueError(
            f"backward returned {len(analytic)} gradients for {len(args)} arguments"
        )

    max_rel = 0.0
    for arg, grad in zip(args, analytic):
        if grad is None:
            continue
        grad = np.asarray(grad, dtype=np.float64)
        flat = arg.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            s_plus = float(np.sum(weights * run()))
            flat[j] = orig - epsilon
            s_minus = float(np.sum(weights * run()))
            flat[j] = orig
            numeric = (s_plus - s_minus) / (2.0 * epsilon)
            a = gflat[j]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), REL_DENOM_FLOOR)
            if rel > max_rel:
                max_rel = rel
    return max_rel
