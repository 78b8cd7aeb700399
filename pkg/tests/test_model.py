"""SequentialModel: init determinism, forward/backward plumbing, state I/O."""

import numpy as np
import pytest

from loadsafety.architectures import (
    ArchitectureSpec,
    batchnorm,
    conv,
    dense_layer,
    dropout_layer,
    flatten,
    maxpool,
    relu_layer,
)
from loadsafety.engine import ShapeError, sgd_step, softmax_cross_entropy
from loadsafety.model import SequentialModel


def tiny_spec():
    return ArchitectureSpec("tiny", (1, 8, 8), [
        conv(3, 4, padding=1),
        relu_layer(),
        batchnorm(),
        maxpool(2, 2),
        flatten(),
        dense_layer(8),
        relu_layer(),
        dropout_layer(0.5),
        dense_layer(2),
    ])


def test_forward_shape():
    m = SequentialModel(tiny_spec(), seed=0)
    x = np.random.default_rng(0).random((3, 1, 8, 8), dtype=np.float32)
    assert m.forward(x).shape == (3, 2)


def test_same_seed_same_logits():
    x = np.random.default_rng(1).random((2, 1, 8, 8), dtype=np.float32)
    a = SequentialModel(tiny_spec(), seed=7).forward(x)
    b = SequentialModel(tiny_spec(), seed=7).forward(x)
    assert a.tobytes() == b.tobytes()


def test_different_seeds_differ():
    x = np.random.default_rng(1).random((2, 1, 8, 8), dtype=np.float32)
    a = SequentialModel(tiny_spec(), seed=7).forward(x)
    b = SequentialModel(tiny_spec(), seed=8).forward(x)
    assert not np.array_equal(a, b)


def test_train_mode_dropout_varies_with_step():
    m = SequentialModel(tiny_spec(), seed=0)
    x = np.random.default_rng(2).random((4, 1, 8, 8), dtype=np.float32)
    a = m.forward(x, mode="train", step=0)
    b = m.forward(x, mode="train", step=0)
    c = m.forward(x, mode="train", step=1)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_infer_mode_has_no_dropout_noise():
    m = SequentialModel(tiny_spec(), seed=0)
    x = np.random.default_rng(3).random((2, 1, 8, 8), dtype=np.float32)
    assert m.forward(x).tobytes() == m.forward(x).tobytes()


def test_backward_populates_every_grad():
    m = SequentialModel(tiny_spec(), seed=0)
    x = np.random.default_rng(4).random((4, 1, 8, 8), dtype=np.float32)
    logits = m.forward(x, mode="train", step=0)
    _, grad = softmax_cross_entropy(logits, [0, 1, 0, 1])
    m.backward(grad.data)
    m.params.require_grads()  # raises if any parameter is missing a gradient


def test_backward_without_forward_rejected():
    m = SequentialModel(tiny_spec(), seed=0)
    with pytest.raises(RuntimeError, match="forward"):
        m.backward(np.zeros((2, 2)))


def test_single_step_reduces_memorization_loss():
    m = SequentialModel(tiny_spec(), seed=3)
    rng = np.random.default_rng(5)
    x = rng.random((8, 1, 8, 8), dtype=np.float32)
    y = [0, 1] * 4
    losses = []
    for step in range(40):
        logits = m.forward(x, mode="train", step=step)
        loss, grad = softmax_cross_entropy(logits, y)
        losses.append(loss)
        m.params.zero_grads()
        m.backward(grad.data)
        sgd_step(m.params, lr=0.05, momentum=0.9)
    assert losses[-1] < losses[0]


def test_wrong_input_shape_rejected():
    m = SequentialModel(tiny_spec(), seed=0)
    with pytest.raises(ShapeError):
        m.forward(np.zeros((2, 3, 8, 8), dtype=np.float32))


def test_state_round_trip_reproduces_logits():
    src = SequentialModel(tiny_spec(), seed=11)
    x = np.random.default_rng(6).random((2, 1, 8, 8), dtype=np.float32)
    want = src.forward(x)
    params, buffers = src.state_arrays()
    dst = SequentialModel(tiny_spec(), seed=99).load_state(params, buffers)
    assert dst.forward(x).tobytes() == want.tobytes()


def test_load_state_rejects_shape_mismatch():
    src = SequentialModel(tiny_spec(), seed=0)
    params, buffers = src.state_arrays()
    params["layer00/weight"] = np.zeros((2, 2))
    with pytest.raises(ShapeError, match="layer00/weight"):
        SequentialModel(tiny_spec(), seed=0).load_state(params, buffers)
