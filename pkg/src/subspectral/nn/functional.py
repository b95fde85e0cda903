"""Forward/backward kernels for the layers the models need.

Convention: feature maps are (N, C, H, W) numpy arrays ("Tensor4"), dense
activations are (N, D). Elementwise math and matrix products run in the
caller's storage dtype (float32 by default, float64 when the graph is
built that way); statistical reductions -- batch statistics, bias sums,
softmax normalization, losses -- always accumulate in float64.
Convolution is cross-correlation (no kernel flip).
"""

from __future__ import annotations

import warnings

import numpy as np

PROB_FLOOR = 1e-12


def _same_padding(k: int) -> tuple[int, int]:
    # extra padding (even kernels) goes on the bottom/right
    before = (k - 1) // 2
    return before, k - 1 - before


def _im2col(x: np.ndarray, kh: int, kw: int, pads_h=None, pads_w=None) -> np.ndarray:
    n, c, h, w = x.shape
    pads_h = pads_h or _same_padding(kh)
    pads_w = pads_w or _same_padding(kw)
    padded = np.pad(x, ((0, 0), (0, 0), pads_h, pads_w))
    patches = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
    # (N, C, H, W, Kh, Kw) -> (N*H*W, C*Kh*Kw)
    return np.ascontiguousarray(patches.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * kh * kw)


def conv2d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """'Same'-padded 2-D cross-correlation: (N,C,H,W) -> (N,O,H,W)."""
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise ValueError(f"input has {c} channels but kernels expect {cw}")
    cols = _im2col(x, kh, kw)
    out = cols @ w.reshape(o, -1).T + b.astype(x.dtype)
    return out.reshape(n, h, wd, o).transpose(0, 3, 1, 2).astype(x.dtype, copy=False)


def conv2d_same_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray, need_dx: bool = True):
    """Gradients (dx, dw, db) for conv2d_same.

    dx is the transposed convolution, computed as a second im2col GEMM
    against the spatially flipped, channel-transposed kernels (with the
    before/after padding amounts swapped, which matters for even kernel
    sizes). Pass need_dx=False at the first layer of a network, where the
    input gradient would be the most expensive tensor of the whole
    backward pass and nobody consumes it.
    """
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    dyr = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(n * h * wd, o)
    db = dyr.sum(axis=0, dtype=np.float64).astype(w.dtype)
    cols = _im2col(x, kh, kw)
    dw = (dyr.T @ cols).reshape(o, c, kh, kw).astype(w.dtype, copy=False)
    if not need_dx:
        return None, dw, db
    pt, pb = _same_padding(kh)
    pl, pr = _same_padding(kw)
    dy_cols = _im2col(dy, kh, kw, pads_h=(pb, pt), pads_w=(pr, pl))
    w_back = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)).reshape(c, o * kh * kw)
    dx = (dy_cols @ w_back.T).reshape(n, h, wd, c).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dx, dtype=x.dtype), dw, db


def maxpool2d(x: np.ndarray, pool_h: int, pool_w: int):
    """Non-overlapping max pooling with floor division; remainder rows and
    columns are discarded. Returns (y, argmax indices for backward)."""
    n, c, h, w = x.shape
    if pool_h < 1 or pool_w < 1:
        raise ValueError("pool dims must be >= 1")
    if pool_h > h or pool_w > w:
        raise ValueError(f"pool ({pool_h}, {pool_w}) larger than input ({h}, {w})")
    ho, wo = h // pool_h, w // pool_w
    windows = (
        x[:, :, : ho * pool_h, : wo * pool_w]
        .reshape(n, c, ho, pool_h, wo, pool_w)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, ho, wo, pool_h * pool_w)
    )
    idx = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return y, idx


def maxpool2d_backward(dy: np.ndarray, idx: np.ndarray, x_shape, pool_h: int, pool_w: int) -> np.ndarray:
    n, c, h, w = x_shape
    ho, wo = h // pool_h, w // pool_w
    dwin = np.zeros((n, c, ho, wo, pool_h * pool_w), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, :, : ho * pool_h, : wo * pool_w] = (
        dwin.reshape(n, c, ho, wo, pool_h, pool_w).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * pool_h, wo * pool_w)
    )
    return dx


def _channel_moments(x: np.ndarray):
    """Per-channel mean and (biased) variance, accumulated in float64."""
    m = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
    sumsq = np.einsum("nchw,nchw->c", x, x, dtype=np.float64)
    var = np.maximum(sumsq / m - mean**2, 0.0)
    return mean, var


def batchnorm2d_train(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    """Per-channel batch normalization using (biased) batch statistics.

    Returns (y, batch_mean, batch_var, cache) where cache feeds backward.
    """
    mean, var = _channel_moments(x)
    inv = 1.0 / np.sqrt(var + eps)
    inv_t = inv.astype(x.dtype)
    xhat = (x - mean.astype(x.dtype)[None, :, None, None]) * inv_t[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_t, gamma)
    return y.astype(x.dtype, copy=False), mean, var, cache


def batchnorm2d_eval(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray, var: np.ndarray, eps: float) -> np.ndarray:
    inv = (1.0 / np.sqrt(var.astype(np.float64) + eps)).astype(x.dtype)
    xhat = (x - mean.astype(x.dtype)[None, :, None, None]) * inv[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y.astype(x.dtype, copy=False)


def batchnorm2d_backward(dy: np.ndarray, cache):
    xhat, inv, gamma = cache
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dgamma = np.einsum("nchw,nchw->c", dy, xhat, dtype=np.float64)
    dbeta = dy.sum(axis=(0, 2, 3), dtype=np.float64)
    dxhat = dy * gamma[None, :, None, None]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3), dtype=np.float64)
    sum_dxhat_xhat = np.einsum("nchw,nchw->c", dxhat, xhat, dtype=np.float64)
    dx = (inv[None, :, None, None] / m) * (
        m * dxhat
        - sum_dxhat.astype(dy.dtype)[None, :, None, None]
        - xhat * sum_dxhat_xhat.astype(dy.dtype)[None, :, None, None]
    )
    return dx.astype(dy.dtype, copy=False), dgamma, dbeta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"dense input width {x.shape[1]} does not match weight {w.shape}")
    return x @ w + b


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0, dtype=np.float64).astype(w.dtype)
    return dx, dw, db


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z.astype(np.float64) - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=1, keepdims=True)).astype(z.dtype)


def softmax_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    yf = y.astype(np.float64)
    dyf = dy.astype(np.float64)
    inner = np.sum(dyf * yf, axis=1, keepdims=True)
    return (yf * (dyf - inner)).astype(y.dtype)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    return rng.random(shape) >= rate


def dropout(x: np.ndarray, rate: float, train: bool, rng: np.random.Generator):
    """Inverted dropout; identity at rate 0 or in eval mode."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    mask = dropout_mask(x.shape, rate, rng)
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    return x * mask * scale, mask


def dropout_backward(dy: np.ndarray, mask, rate: float) -> np.ndarray:
    if mask is None:
        return dy
    scale = np.asarray(1.0 / (1.0 - rate), dtype=dy.dtype)
    return dy * mask * scale


def flatten(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


def concat(blocks) -> np.ndarray:
    return np.concatenate(blocks, axis=1)


def split_widths(dy: np.ndarray, widths):
    out = []
    pos = 0
    for w in widths:
        out.append(dy[:, pos : pos + w])
        pos += w
    return out


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log likelihood of the labeled class.

    probs rows must be (approximately) stochastic; probabilities below
    1e-12 are clamped with a warning rather than producing inf.
    """
    n = probs.shape[0]
    p = probs[np.arange(n), labels].astype(np.float64)
    if np.any(p < PROB_FLOOR):
        warnings.warn("cross_entropy: clamping near-zero predicted probability", RuntimeWarning, stacklevel=2)
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def cross_entropy_backward(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(mean CE)/d(probs); zero where the probability was clamped."""
    n = probs.shape[0]
    p = probs[np.arange(n), labels].astype(np.float64)
    d = np.zeros(probs.shape, dtype=np.float64)
    safe = p >= PROB_FLOOR
    rows = np.arange(n)[safe]
    d[rows, labels[safe]] = -1.0 / (n * p[safe])
    return d.astype(probs.dtype)
