"""Forward/backward primitives for each layer kind.

All arrays are float64; image batches are NCHW. Convolution is realized
as im2col + matmul so both directions reuse checked matrix products; the
backward of the unfolding is the scatter-add col2im of the same index map.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def _conv_out_extent(extent: int, k: int, stride: int, pad: int) -> int:
    out = (extent + 2 * pad - k) // stride + 1
    if out < 1 or (extent + 2 * pad) < k:
        raise ShapeError(
            f"kernel {k} (stride {stride}, pad {pad}) does not fit extent {extent}"
        )
    return out


def _im2col_indices(c, h, w, kh, kw, stride, pad):
    oh = _conv_out_extent(h, kh, stride, pad)
    ow = _conv_out_extent(w, kw, stride, pad)
    i0 = np.tile(np.repeat(np.arange(kh), kw), c)
    j0 = np.tile(np.arange(kw), kh * c)
    i1 = stride * np.repeat(np.arange(oh), ow)
    j1 = stride * np.tile(np.arange(ow), oh)
    # (c*kh*kw, oh*ow) source row/col per output position, per kernel tap
    i = i0.reshape(-1, 1) + i1.reshape(1, -1)
    j = j0.reshape(-1, 1) + j1.reshape(1, -1)
    k = np.repeat(np.arange(c), kh * kw).reshape(-1, 1)
    return k, i, j, oh, ow


def im2col(x, kh, kw, stride, pad):
    """Unfold NCHW into (N, C*kh*kw, out_h*out_w) patch columns."""
    n, c, h, w = x.shape
    k, i, j, oh, ow = _im2col_indices(c, h, w, kh, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return x[:, k, i, j], oh, ow


def col2im(dcols, x_shape, kh, kw, stride, pad):
    """Scatter-add patch-column gradients back onto the input grid."""
    n, c, h, w = x_shape
    k, i, j, _, _ = _im2col_indices(c, h, w, kh, kw, stride, pad)
    padded = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    np.add.at(padded, (slice(None), k, i, j), dcols)
    if pad:
        return padded[:, :, pad:-pad, pad:-pad]
    return padded


def dense_forward(x, w, b):
    if x.ndim != 2:
        raise ShapeError(f"dense expects a 2-D batch, got {x.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense extents differ: input {x.shape} vs weights {w.shape}")
    return x @ w + b, x


def dense_backward(cache_x, w, dout):
    dw = cache_x.T @ dout
    db = dout.sum(axis=0)
    dx = dout @ w.T
    return dx, dw, db


def conv2d_forward(x, w, b, stride, pad):
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects an NCHW batch, got {x.shape}")
    f, c, kh, kw = w.shape
    if x.shape[1] != c:
        raise ShapeError(f"conv2d channels differ: input {x.shape} vs kernel {w.shape}")
    cols, oh, ow = im2col(x, kh, kw, stride, pad)
    wmat = w.reshape(f, -1)
    out = np.matmul(wmat, cols) + b[None, :, None]  # (N, F, oh*ow)
    return out.reshape(x.shape[0], f, oh, ow), (cols, x.shape)


def conv2d_backward(cache, w, dout, stride, pad):
    cols, x_shape = cache
    f, c, kh, kw = w.shape
    n = dout.shape[0]
    dout_mat = dout.reshape(n, f, -1)
    dw = np.matmul(dout_mat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.matmul(w.reshape(f, -1).T, dout_mat)
    dx = col2im(dcols, x_shape, kh, kw, stride, pad)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(cache_x, dout):
    # derivative at exactly 0 is 0, matching the forward max(0, .) convention
    return dout * (cache_x > 0.0)


def flatten_forward(x):
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(cache_shape, dout):
    return dout.reshape(cache_shape)


def softmax_probs(logits):
    """Row-stable softmax with per-example log-probabilities."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    total = expz.sum(axis=1, keepdims=True)
    logp = shifted - np.log(total)
    return expz / total, logp


def cross_entropy(logp, labels):
    """Per-example -log p(true class)."""
    return -logp[np.arange(logp.shape[0]), labels]
