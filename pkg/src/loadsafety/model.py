"""Sequential model runtime: materializes an ArchitectureSpec as engine ops.

Weight initialization, dropout, and shuffling all use counter-based
generators keyed off a single seed, so a (spec, seed) pair fully
determines every forward and backward pass.
"""

from __future__ import annotations

import numpy as np

from .architectures import ArchitectureSpec, output_shape
from .engine import (
    ParameterSet,
    ShapeError,
    batchnorm2d,
    batchnorm2d_backward,
    conv2d,
    conv2d_backward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    maxpool2d,
    maxpool2d_backward,
    relu,
    relu_backward,
)

# counter namespaces so different random uses of the same seed never
# share a Philox stream
_INIT_TAG = 1 << 62
_DROPOUT_TAG = 2 << 62


def _init_rng(seed, layer_idx):
    return np.random.Generator(np.random.Philox(key=[seed, _INIT_TAG | layer_idx]))


class SequentialModel:
    """Owns the parameters for one architecture and runs it layer by layer."""

    def __init__(self, spec: ArchitectureSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.params = ParameterSet()
        self._shapes = [tuple(spec.input_shape)] + output_shape(spec)
        for idx, layer in enumerate(spec.layers):
            in_shape = self._shapes[idx]
            prefix = f"layer{idx:02d}"
            if layer.kind == "conv":
                fan_in = in_shape[0] * layer.kernel_size ** 2
                limit = np.sqrt(6.0 / fan_in)
                rng = _init_rng(seed, idx)
                w = rng.uniform(-limit, limit,
                                (layer.filters, in_shape[0],
                                 layer.kernel_size, layer.kernel_size))
                self.params.add_param(f"{prefix}/weight", _tensor(w))
                self.params.add_param(f"{prefix}/bias", _tensor(np.zeros(layer.filters)))
            elif layer.kind == "batchnorm":
                c = in_shape[0]
                self.params.add_param(f"{prefix}/gamma", _tensor(np.ones(c)))
                self.params.add_param(f"{prefix}/beta", _tensor(np.zeros(c)))
                self.params.add_buffer(f"{prefix}/running_mean",
                                       np.zeros(c, dtype=np.float32))
                self.params.add_buffer(f"{prefix}/running_var",
                                       np.ones(c, dtype=np.float32))
            elif layer.kind == "dense":
                fan_in = in_shape[0]
                limit = np.sqrt(6.0 / fan_in)
                rng = _init_rng(seed, idx)
                w = rng.uniform(-limit, limit, (fan_in, layer.width))
                self.params.add_param(f"{prefix}/weight", _tensor(w))
                self.params.add_param(f"{prefix}/bias", _tensor(np.zeros(layer.width)))

    @property
    def num_classes(self):
        return self._shapes[-1][0]

    @property
    def input_resolution(self):
        return self.spec.input_shape[1]

    def forward(self, x, mode="infer", step=0):
        """Run the network; returns logits (batch, num_classes).

        In train mode the per-layer inputs are cached on the model for the
        next backward() call, and batchnorm updates its running stats.
        """
        x = np.ascontiguousarray(x)
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(
                f"expected input (batch, {self.spec.input_shape}), got {x.shape}"
            )
        cache = [] if mode == "train" else None
        for idx, layer in enumerate(self.spec.layers):
            prefix = f"layer{idx:02d}"
            if layer.kind == "conv":
                w = self.params.params[f"{prefix}/weight"]
                b = self.params.params[f"{prefix}/bias"]
                if cache is not None:
                    cache.append(x)
                x = conv2d(x, w.data, b.data, stride=layer.stride,
                           padding=layer.padding).data
            elif layer.kind == "relu":
                if cache is not None:
                    cache.append(x)
                x = relu(x).data
            elif layer.kind == "batchnorm":
                g = self.params.params[f"{prefix}/gamma"]
                b = self.params.params[f"{prefix}/beta"]
                rm = self.params.buffers[f"{prefix}/running_mean"]
                rv = self.params.buffers[f"{prefix}/running_var"]
                if cache is not None:
                    cache.append(x)
                x = batchnorm2d(x, g.data, b.data, running_mean=rm, running_var=rv,
                                mode=mode).data
            elif layer.kind == "maxpool":
                if cache is not None:
                    cache.append(x)
                x = maxpool2d(x, layer.pool_size, layer.stride).data
            elif layer.kind == "flatten":
                if cache is not None:
                    cache.append(x.shape)
                x = x.reshape(x.shape[0], -1)
            elif layer.kind == "dense":
                w = self.params.params[f"{prefix}/weight"]
                b = self.params.params[f"{prefix}/bias"]
                if cache is not None:
                    cache.append(x)
                x = dense(x, w.data, b.data).data
            elif layer.kind == "dropout":
                if cache is not None:
                    cache.append(None)
                counter = _DROPOUT_TAG | (step << 8) | idx
                x = dropout(x, layer.rate, self.seed, mode=mode, counter=counter).data
        if cache is not None:
            self._cache = cache
            self._step = step
        return x

    def backward(self, dlogits):
        """Accumulate parameter gradients from the last train-mode forward."""
        cache = getattr(self, "_cache", None)
        if cache is None:
            raise RuntimeError("backward() requires a prior forward(mode='train')")
        step = self._step
        dout = dlogits
        for idx in range(len(self.spec.layers) - 1, -1, -1):
            layer = self.spec.layers[idx]
            prefix = f"layer{idx:02d}"
            saved = cache[idx]
            if layer.kind == "conv":
                w = self.params.params[f"{prefix}/weight"]
                b = self.params.params[f"{prefix}/bias"]
                dout, dw, db = conv2d_backward(dout, saved, w.data,
                                               stride=layer.stride,
                                               padding=layer.padding)
                w.add_grad(dw)
                b.add_grad(db)
            elif layer.kind == "relu":
                dout = relu_backward(dout, saved)
            elif layer.kind == "batchnorm":
                g = self.params.params[f"{prefix}/gamma"]
                b = self.params.params[f"{prefix}/beta"]
                dout, dg, dbeta = batchnorm2d_backward(dout, saved, g.data)
                g.add_grad(dg)
                b.add_grad(dbeta)
            elif layer.kind == "maxpool":
                dout = maxpool2d_backward(dout, saved, layer.pool_size, layer.stride)
            elif layer.kind == "flatten":
                dout = dout.reshape(saved)
            elif layer.kind == "dense":
                w = self.params.params[f"{prefix}/weight"]
                b = self.params.params[f"{prefix}/bias"]
                dout, dw, db = dense_backward(dout, saved, w.data)
                w.add_grad(dw)
                b.add_grad(db)
            elif layer.kind == "dropout":
                counter = _DROPOUT_TAG | (step << 8) | idx
                dout = dropout_backward(dout, layer.rate, self.seed,
                                        mode="train", counter=counter)
        self._cache = None
        return dout

    def state_arrays(self):
        """(params, buffers) as plain name->array dicts, float32 copies."""
        params = {k: np.asarray(v.data, dtype=np.float32).copy()
                  for k, v in self.params.params.items()}
        buffers = {k: np.asarray(v, dtype=np.float32).copy()
                   for k, v in self.params.buffers.items()}
        return params, buffers

    def load_state(self, params, buffers):
        for name, tensor in self.params.params.items():
            if name not in params:
                raise ShapeError(f"missing parameter {name}")
            arr = np.asarray(params[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise ShapeError(
                    f"parameter {name}: expected {tensor.data.shape}, got {arr.shape}"
                )
            tensor.data[...] = arr
        for name, buf in self.params.buffers.items():
            if name not in buffers:
                raise ShapeError(f"missing buffer {name}")
            arr = np.asarray(buffers[name], dtype=buf.dtype)
            if arr.shape != buf.shape:
                raise ShapeError(
                    f"buffer {name}: expected {buf.shape}, got {arr.shape}"
                )
            buf[...] = arr
        return self


def _tensor(arr):
    from .engine import Tensor

    return Tensor(np.asarray(arr, dtype=np.float32))
