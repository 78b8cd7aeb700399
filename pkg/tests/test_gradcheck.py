"""Finite-difference validation of each analytical backward pass."""

import numpy as np
import pytest

from loadsafety.engine import (
    GradientError,
    batchnorm2d,
    batchnorm2d_backward,
    conv2d,
    conv2d_backward,
    dense,
    dense_backward,
    grad_check,
    relu,
    relu_backward,
    softmax_cross_entropy,
)


def test_dense_grad_small():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal((4, 2))
    b = rng.standard_normal(2)

    def forward(x, w, b):
        return dense(x, w, b).data

    def backward(dout, x, w, b):
        dx, dw, db = dense_backward(dout, x, w)
        return dx, dw, db

    assert grad_check(forward, backward, (x, w, b)) < 1e-6


def test_conv_grad_small():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 1, 6, 6))
    w = rng.standard_normal((2, 1, 3, 3))
    b = rng.standard_normal(2)

    def forward(x, w, b):
        return conv2d(x, w, b, stride=1, padding=1).data

    def backward(dout, x, w, b):
        return conv2d_backward(dout, x, w, stride=1, padding=1)

    assert grad_check(forward, backward, (x, w, b)) < 1e-6


def test_conv_grad_strided_padded():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)

    def forward(x, w, b):
        return conv2d(x, w, b, stride=2, padding=1).data

    def backward(dout, x, w, b):
        return conv2d_backward(dout, x, w, stride=2, padding=1)

    assert grad_check(forward, backward, (x, w, b)) < 1e-5


def test_relu_grad_away_from_kink():
    rng = np.random.default_rng(3)
    # keep samples off the origin so the finite difference never straddles it
    x = rng.standard_normal((4, 5))
    x[np.abs(x) < 1e-2] += 0.5

    def forward(x):
        return relu(x).data

    def backward(dout, x):
        return (relu_backward(dout, x),)

    assert grad_check(forward, backward, (x,)) < 1e-6


def test_batchnorm_grad():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 2, 4, 4))
    gamma = rng.standard_normal(2) + 1.5
    beta = rng.standard_normal(2)

    def forward(x, gamma, beta):
        return batchnorm2d(x, gamma, beta).data

    def backward(dout, x, gamma, beta):
        return batchnorm2d_backward(dout, x, gamma)

    assert grad_check(forward, backward, (x, gamma, beta)) < 1e-5


def test_cross_entropy_grad():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((4, 3))
    labels = np.array([0, 2, 1, 0])

    def forward(z):
        loss, _ = softmax_cross_entropy(z, labels)
        return np.array([loss])

    def backward(dout, z):
        _, grad = softmax_cross_entropy(z, labels)
        return (grad.data * dout[0],)

    assert grad_check(forward, backward, (z,)) < 1e-6


def test_requires_float64():
    x = np.zeros((2, 2), dtype=np.float32)
    with pytest.raises(GradientError, match="float64"):
        grad_check(lambda x: x, lambda d, x: (d,), (x,))


@pytest.mark.parametrize("seed", range(20))
def test_dense_grad_many_seeds(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 6))
    w = rng.standard_normal((6, 3))
    b = rng.standard_normal(3)

    def forward(x, w, b):
        return dense(x, w, b).data

    def backward(dout, x, w, b):
        return dense_backward(dout, x, w)

    assert grad_check(forward, backward, (x, w, b), seed=seed) < 1e-4
