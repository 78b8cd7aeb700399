"""Forward and backward passes for every layer of the sequential CNN.

Each forward op takes Tensors (or ndarrays) and returns a Tensor; each
backward op works on plain ndarrays and returns the gradients of its
inputs.  Convolution is cross-correlation (no kernel flip).

Two convolution code paths exist on purpose.  In float32 the forward pass
goes through im2col + matmul, which is what makes CPU training viable.
In float64 it accumulates kernel taps one at a time in a fixed
(channel, row, col) order, so every output element sees the exact same
sequence of rounded additions as a naive six-loop implementation; that is
the contract the verification suite holds it to, bit for bit.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_array

__all__ = [
    "conv2d",
    "conv2d_backward",
    "maxpool2d",
    "maxpool2d_backward",
    "batchnorm2d",
    "batchnorm2d_backward",
    "dense",
    "dense_backward",
    "relu",
    "relu_backward",
    "dropout",
    "dropout_backward",
    "dropout_mask",
    "softmax_cross_entropy",
]


def _check_conv_args(x, w, b, stride, padding):
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects BCHW input, got shape {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d expects OIKK weights, got shape {w.shape}")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d padding must be >= 0, got {padding}")
    _, c, h, win = x.shape
    o, i, kh, kw = w.shape
    if i != c:
        raise ShapeError(
            f"conv2d channel mismatch: input shape {x.shape} has {c} channels, "
            f"weights shape {w.shape} expect {i}"
        )
    if b.shape != (o,):
        raise ShapeError(f"conv2d bias shape {b.shape} does not match {o} filters")
    if h + 2 * padding < kh or win + 2 * padding < kw:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} does not fit padded input "
            f"{h + 2 * padding}x{win + 2 * padding}"
        )


def _conv_out_extent(extent: int, k: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - k) // stride + 1


def _pad_hw(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    # (B, C, OH, OW, KH, KW) view, then a contiguous (B, OH*OW, C*KH*KW) copy
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c = xp.shape[0], xp.shape[1]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, oh * ow, c * kh * kw)


def conv2d(x, weights, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate BCHW input with OIKK weights; add per-filter bias."""
    x = as_array(x)
    w = as_array(weights).astype(x.dtype, copy=False)
    b = as_array(bias).astype(x.dtype, copy=False)
    _check_conv_args(x, w, b, stride, padding)
    bs, c, h, win_ = x.shape
    o, _, kh, kw = w.shape
    oh = _conv_out_extent(h, kh, stride, padding)
    ow = _conv_out_extent(win_, kw, stride, padding)
    xp = _pad_hw(x, padding)

    if x.dtype == np.float64:
        # Exact-order path: accumulate taps in (c, p, q) order so each output
        # element is the same rounded sum a scalar triple loop would produce.
        out = np.zeros((bs, o, oh, ow), dtype=np.float64)
        for ci in range(c):
            for p in range(kh):
                for q in range(kw):
                    patch = xp[:, ci, p : p + oh * stride : stride, q : q + ow * stride : stride]
                    out += patch[:, None, :, :] * w[None, :, ci, p, q, None, None]
        out += b[None, :, None, None]
        return Tensor(out)

    cols = _im2col(xp, kh, kw, stride, oh, ow)
    flat = cols @ w.reshape(o, -1).T  # (B, OH*OW, O)
    out = flat.transpose(0, 2, 1).reshape(bs, o, oh, ow) + b[None, :, None, None]
    return Tensor(out)


def conv2d_backward(dout, x, weights, stride: int = 1, padding: int = 0):
    """Gradients (dx, dweights, dbias) of conv2d given upstream dout."""
    dout = as_array(dout)
    x = as_array(x)
    w = as_array(weights).astype(x.dtype, copy=False)
    bs, c, h, win_ = x.shape
    o, _, kh, kw = w.shape
    oh = _conv_out_extent(h, kh, stride, padding)
    ow = _conv_out_extent(win_, kw, stride, padding)
    if dout.shape != (bs, o, oh, ow):
        raise ShapeError(f"conv2d_backward: dout shape {dout.shape} != {(bs, o, oh, ow)}")

    xp = _pad_hw(x, padding)
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    dmat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(bs, oh * ow, o)

    db = dout.sum(axis=(0, 2, 3))
    dw = np.einsum("bno,bnk->ok", dmat, cols, optimize=True).reshape(o, c, kh, kw)

    dcols = dmat @ w.reshape(o, -1)  # (B, OH*OW, C*KH*KW)
    dwin = dcols.reshape(bs, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    dxp = np.zeros_like(xp)
    for p in range(kh):
        for q in range(kw):
            dxp[:, :, p : p + oh * stride : stride, q : q + ow * stride : stride] += dwin[
                :, :, :, :, p, q
            ]
    dx = dxp if padding == 0 else dxp[:, :, padding : padding + h, padding : padding + win_]
    return dx, dw, db


def _pool_windows(x: np.ndarray, pool_size: int, stride: int) -> np.ndarray:
    return sliding_window_view(x, (pool_size, pool_size), axis=(2, 3))[:, :, ::stride, ::stride]


def maxpool2d(x, pool_size: int, stride: int) -> Tensor:
    """Max over pool_size x pool_size windows."""
    x = as_array(x)
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects BCHW input, got shape {x.shape}")
    if pool_size < 1 or stride < 1:
        raise ValueError("maxpool2d pool_size and stride must be >= 1")
    _, _, h, w = x.shape
    if pool_size > h or pool_size > w:
        raise ShapeError(f"maxpool2d window {pool_size} larger than input {h}x{w}")
    return Tensor(_pool_windows(x, pool_size, stride).max(axis=(4, 5)))


def maxpool2d_backward(dout, x, pool_size: int, stride: int) -> np.ndarray:
    """Route dout to the argmax of each window (first occurrence on ties)."""
    dout = as_array(dout)
    x = as_array(x)
    win = _pool_windows(x, pool_size, stride)
    bs, c, oh, ow = win.shape[:4]
    flat = win.reshape(bs, c, oh, ow, pool_size * pool_size)
    arg = flat.argmax(axis=4)  # first max in row-major window scan
    iy = (np.arange(oh)[:, None] * stride) + arg // pool_size
    ix = (np.arange(ow)[None, :] * stride) + arg % pool_size
    bi = np.arange(bs)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    dx = np.zeros_like(x)
    # windows may overlap (stride < pool_size), so scatter must be unbuffered
    np.add.at(dx, (np.broadcast_to(bi, arg.shape), np.broadcast_to(ci, arg.shape), iy, ix), dout)
    return dx


def batchnorm2d(
    x,
    gamma,
    beta,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    epsilon: float = 1e-5,
    momentum: float = 0.1,
    mode: str = "train",
) -> Tensor:
    """Per-channel batch normalization over (batch, height, width).

    Train mode uses batch statistics (population variance) and, when the
    running buffers are supplied, updates them in place via
    new = (1 - momentum) * old + momentum * batch.  Infer mode normalizes
    with the running buffers, which must then be present.
    """
    x = as_array(x)
    g = as_array(gamma).astype(x.dtype, copy=False)
    b = as_array(beta).astype(x.dtype, copy=False)
    if epsilon <= 0:
        raise ValueError(f"batchnorm2d epsilon must be > 0, got {epsilon}")
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d expects BCHW input, got shape {x.shape}")
    c = x.shape[1]
    if g.shape != (c,) or b.shape != (c,):
        raise ShapeError(
            f"batchnorm2d gamma/beta shapes {g.shape}/{b.shape} do not match {c} channels"
        )
    if mode == "train":
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 2:
            raise ShapeError("batchnorm2d train mode needs at least 2 values per channel")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean.astype(running_mean.dtype)
        if running_var is not None:
            running_var *= 1.0 - momentum
            running_var += momentum * var.astype(running_var.dtype)
    elif mode == "infer":
        if running_mean is None or running_var is None:
            raise ValueError("batchnorm2d infer mode requires running statistics")
        mean = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)
    else:
        raise ValueError(f"batchnorm2d mode must be 'train' or 'infer', got {mode!r}")
    inv = 1.0 / np.sqrt(var + np.asarray(epsilon, dtype=x.dtype))
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    return Tensor(xhat * g[None, :, None, None] + b[None, :, None, None])


def batchnorm2d_backward(dout, x, gamma, epsilon: float = 1e-5):
    """Train-mode gradients (dx, dgamma, dbeta); batch statistics recomputed."""
    dout = as_array(dout)
    x = as_array(x)
    g = as_array(gamma).astype(x.dtype, copy=False)
    n = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + np.asarray(epsilon, dtype=x.dtype))
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]

    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * g[None, :, None, None]
    s1 = dxhat.sum(axis=(0, 2, 3))
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3))
    dx = (
        dxhat - (s1[None, :, None, None] + xhat * s2[None, :, None, None]) / n
    ) * inv[None, :, None, None]
    return dx, dgamma, dbeta


def dense(x, weights, bias) -> Tensor:
    """Affine map: (B, N) @ (N, M) + (M,)."""
    x = as_array(x)
    w = as_array(weights).astype(x.dtype, copy=False)
    b = as_array(bias).astype(x.dtype, copy=False)
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"dense expects 2-d input and weights, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"dense dimension mismatch: input {x.shape} vs weights {w.shape}"
        )
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense bias shape {b.shape} does not match width {w.shape[1]}")
    return Tensor(x @ w + b)


def dense_backward(dout, x, weights):
    dout = as_array(dout)
    x = as_array(x)
    w = as_array(weights).astype(x.dtype, copy=False)
    dx = dout @ w.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


def relu(x) -> Tensor:
    return Tensor(np.maximum(as_array(x), 0))


def relu_backward(dout, x) -> np.ndarray:
    x = as_array(x)
    # subgradient 0 at exactly x == 0
    return as_array(dout) * (x > 0)


def dropout_mask(shape, rate: float, seed: int, counter: int = 0) -> np.ndarray:
    """Keep-mask as a pure function of (seed, counter)."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, counter], dtype=np.uint64)))
    return rng.random(shape) >= rate


def dropout(x, rate: float, seed: int, mode: str = "train", counter: int = 0) -> Tensor:
    """Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate)."""
    x = as_array(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return Tensor(x.copy())
    if mode != "train":
        raise ValueError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    keep = dropout_mask(x.shape, rate, seed, counter)
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    return Tensor(np.where(keep, x * scale, np.asarray(0, dtype=x.dtype)))


def dropout_backward(dout, rate: float, seed: int, mode: str = "train", counter: int = 0):
    dout = as_array(dout)
    if mode == "infer" or rate == 0.0:
        return dout.copy()
    keep = dropout_mask(dout.shape, rate, seed, counter)
    scale = np.asarray(1.0 / (1.0 - rate), dtype=dout.dtype)
    return np.where(keep, dout * scale, np.asarray(0, dtype=dout.dtype))


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Returns (loss, grad_logits) where grad = (softmax - onehot) / batch,
    computed with max-subtraction for stability.
    """
    z = as_array(logits)
    y = np.asarray(labels)
    if z.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (B, K) logits, got {z.shape}")
    bs, k = z.shape
    if y.shape != (bs,):
        raise ShapeError(f"labels shape {y.shape} does not match batch size {bs}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
    shifted = z - z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    logsum = np.log(expz.sum(axis=1))
    loss = float(np.mean(logsum - shifted[np.arange(bs), y]))
    grad = probs.copy()
    grad[np.arange(bs), y] -= 1.0
    grad /= bs
    return loss, Tensor(grad)
