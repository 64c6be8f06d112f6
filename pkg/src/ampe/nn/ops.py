"""Primitive array ops with hand-written reverse-mode gradients.

All tensors are batched NHWC float arrays. Convolutions use reflect
same-padding; backward passes recompute cheap intermediates (padding,
pooling) from cached forward values instead of storing im2col matrices.
"""

import numpy as np

from ..errors import ShapeError


def _pad_reflect(x, pad):
    if pad == 0:
        return x
    if pad >= x.shape[1] or pad >= x.shape[2]:
        raise ShapeError(f"spatial dims {x.shape[1:3]} too small for reflect pad {pad}")
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)), mode="reflect")


def _fold_reflect(dxp, pad, h, w):
    """Adjoint of reflect padding: fold border gradients back onto their sources."""
    if pad == 0:
        return dxp
    d = dxp[:, pad:pad + h, :, :].copy()
    for q in range(pad):
        d[:, pad - q, :, :] += dxp[:, q, :, :]
        d[:, h - 2 - q, :, :] += dxp[:, h + pad + q, :, :]
    out = d[:, :, pad:pad + w, :].copy()
    for q in range(pad):
        out[:, :, pad - q, :] += d[:, :, q, :]
        out[:, :, w - 2 - q, :] += d[:, :, w + pad + q, :]
    return out


def conv2d(x, w, b, stride=1):
    """Same-padded conv. x: (N,H,W,Cin), w: (k,k,Cin,Cout), b: (Cout,)."""
    k = w.shape[0]
    if x.shape[3] != w.shape[2]:
        raise ShapeError(f"conv input has {x.shape[3]} channels, kernel expects {w.shape[2]}")
    pad = (k - 1) // 2
    xp = _pad_reflect(x, pad)
    n, hp, wp, cin = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, ho, wo, k, k, cin), (s0, s1 * stride, s2 * stride, s1, s2, s3), writeable=False
    )
    cols = win.reshape(n * ho * wo, k * k * cin)
    y = cols @ w.reshape(k * k * cin, -1) + b
    return y.reshape(n, ho, wo, -1)


def conv2d_backward(dy, x, w, stride=1):
    """Gradients of conv2d: returns (dw, db, dx)."""
    k = w.shape[0]
    cin, cout = w.shape[2], w.shape[3]
    pad = (k - 1) // 2
    xp = _pad_reflect(x, pad)
    n = xp.shape[0]
    _, ho, wo, _ = dy.shape
    dy2 = dy.reshape(n * ho * wo, cout)
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, ho, wo, k, k, cin), (s0, s1 * stride, s2 * stride, s1, s2, s3), writeable=False
    )
    cols = win.reshape(n * ho * wo, k * k * cin)
    dw = (cols.T @ dy2).reshape(w.shape)
    db = dy2.sum(axis=0)
    # scatter the per-window input gradients back onto the padded canvas
    dcols = (dy2 @ w.reshape(k * k * cin, cout).T).reshape(n, ho, wo, k, k, cin)
    dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + ho * stride:stride, j:j + wo * stride:stride, :] += dcols[:, :, :, i, j, :]
    dx = _fold_reflect(dxp, pad, x.shape[1], x.shape[2])
    return dw, db, dx


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dy, y):
    return dy * (y > 0)


def tanh(x, to_unit=False):
    t = np.tanh(x)
    return (t + 1.0) * 0.5 if to_unit else t


def tanh_backward(dy, y, to_unit=False):
    if to_unit:
        t = 2.0 * y - 1.0
        return dy * (1.0 - t * t) * 0.5
    return dy * (1.0 - y * y)


def softmax_channels(x):
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_channels_backward(dy, y):
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


def avgpool(x, factor):
    n, h, w, c = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by pool factor {factor}")
    return x.reshape(n, h // factor, factor, w // factor, factor, c).mean(axis=(2, 4))


def avgpool_backward(dy, factor):
    n, ho, wo, c = dy.shape
    scaled = dy / (factor * factor)
    out = np.broadcast_to(scaled[:, :, None, :, None, :], (n, ho, factor, wo, factor, c))
    return out.reshape(n, ho * factor, wo * factor, c)


def upsample_nearest(x, factor):
    return x.repeat(factor, axis=1).repeat(factor, axis=2)


def upsample_nearest_backward(dy, factor):
    n, h, w, c = dy.shape
    return dy.reshape(n, h // factor, factor, w // factor, factor, c).sum(axis=(2, 4))


def concat_channels(xs):
    base = xs[0].shape[:3]
    for x in xs[1:]:
        if x.shape[:3] != base:
            raise ShapeError(f"concat inputs disagree: {x.shape[:3]} vs {base}")
    return np.concatenate(xs, axis=-1)


def split_channels(d, widths):
    outs = []
    off = 0
    for w in widths:
        outs.append(d[..., off:off + w])
        off += w
    return outs
