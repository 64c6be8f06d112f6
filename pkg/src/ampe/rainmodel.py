"""The physical rainy-image model and its inversion.

A rainy image decomposes as I = T * B + R, where B is the clean
background, T is a per-pixel, per-channel transmission map modelling the
haze-like mist ((0, 1], T = 1 means no haze), and R is the additive rain
streak layer. Given estimates of T and R, the model-based clean image is
B_m = (I - R) / max(T, eps), and the final output blends B_m with a
refined version: alpha * B_m + (1 - alpha) * refined.

Everything here is a pure pointwise map over (H, W, C) float arrays.
Loss-path callers keep tensors unclamped; only user-facing images are
clamped to [0, 1].
"""

import numpy as np

from .errors import ConfigError, ShapeError

# Default clamp floor for the transmission map. The T-branch ends in a
# ReLU, so raw estimates can reach 0 while the inversion divides by T.
EPS_T = 0.05


def _check_same_shape(name_a, a, name_b, b):
    if a.shape != b.shape:
        raise ShapeError(f"{name_a} shape {a.shape} != {name_b} shape {b.shape}")


def compose(b, t, r, clamp_output=False):
    """Forward model: T * B + R, pixelwise.

    With clamp_output=True the result is clamped to [0, 1] (image-valued
    output); the raw variant is what loss computation needs.
    """
    b = np.asarray(b)
    t = np.asarray(t)
    r = np.asarray(r)
    _check_same_shape("B", b, "T", t)
    _check_same_shape("B", b, "R", r)
    out = t * b + r
    if clamp_output:
        out = np.clip(out, 0.0, 1.0)
    return out


def invert(i, r, t, eps=EPS_T):
    """Model inversion: (I - R) / max(T, eps), pixelwise.

    The eps floor guards the division; output is finite for all inputs.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    i = np.asarray(i)
    r = np.asarray(r)
    t = np.asarray(t)
    _check_same_shape("I", i, "R", r)
    _check_same_shape("I", i, "T", t)
    return (i - r) / np.maximum(t, eps)


def alpha_blend(b_m, refined, alpha):
    """alpha * B_m + (1 - alpha) * refined. alpha must be in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    b_m = np.asarray(b_m)
    refined = np.asarray(refined)
    _check_same_shape("B_m", b_m, "refined", refined)
    return alpha * b_m + (1.0 - alpha) * refined


def clamp_transmission(t, eps=EPS_T):
    """Clamp a raw transmission map into [eps, 1]."""
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"eps must be in (0, 1), got {eps}")
    return np.clip(np.asarray(t), eps, 1.0)


def clamp_transmission_grad_mask(t_raw, eps=EPS_T):
    """Pass-through gradient mask of clamp_transmission: 1 inside [eps, 1], 0 outside."""
    t_raw = np.asarray(t_raw)
    return ((t_raw >= eps) & (t_raw <= 1.0)).astype(t_raw.dtype)
