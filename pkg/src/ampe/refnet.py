"""Refinement network R(·) and the α-blended final output.

Two convolutions extract features from the model-based estimate B_m; a
spatial-pyramid-pooling module pools them at several scales, reduces each
scale with a pointwise convolution, and upsamples back; the multi-scale
features are concatenated with the pre-pooling features and mapped to a
3-channel image by a convolution + tanh, remapped from (−1,1) to (0,1).

The delivered image is the convex blend B̂ = α·B_m + (1−α)·R(B_m); α is a
pure inference-time knob.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import LayerSpec, Network, forward, init_params
from .rainmodel import alpha_blend

ALPHA_TRAIN = 0.9


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RefNetConfig:
    """Architecture knobs; smaller spp_factors build a small-input variant."""

    spp_factors: tuple = (4, 8, 16, 32)
    base_channels: int = 16
    reduce_channels: int = 4
    alpha_train: float = ALPHA_TRAIN

    def __post_init__(self):
        f = self.spp_factors
        if not f or not all(_is_pow2(s) for s in f) or list(f) != sorted(set(f)):
            raise ConfigError(f"spp factors must be strictly increasing powers of 2, got {f}")
        if not 0.0 <= self.alpha_train <= 1.0:
            raise ConfigError(f"alpha_train must lie in [0, 1], got {self.alpha_train}")
        if self.base_channels < 1 or self.reduce_channels < 1:
            raise ConfigError("channel counts must be >= 1")


def build_refnet(config=None, seed=0, dtype=np.float32):
    """Construct and initialize the refinement network."""
    cfg = config or RefNetConfig()
    c = cfg.base_channels
    layers = [
        LayerSpec("conv1", "conv", ("bm",), out_channels=c, kernel=3),
        LayerSpec("act1", "relu", ("conv1",)),
        LayerSpec("conv2", "conv", ("act1",), out_channels=c, kernel=3),
        LayerSpec("act2", "relu", ("conv2",)),
        LayerSpec("pyramid", "spp", ("act2",), factors=tuple(cfg.spp_factors), reduce_channels=cfg.reduce_channels),
        LayerSpec("merge", "concat", ("pyramid", "act2")),
        LayerSpec("head", "conv", ("merge",), out_channels=3, kernel=3),
        LayerSpec("out_act", "tanh", ("head",), to_unit=True),
    ]
    net = Network("refnet", {"bm": 3}, layers, "out_act", dtype=dtype)
    return init_params(net, seed)


def refine_and_blend(net_ref, b_m, alpha):
    """B̂ = α·B_m + (1−α)·R(B_m)."""
    b_m = np.asarray(b_m)
    squeeze = b_m.ndim == 3
    x = b_m[None] if squeeze else b_m
    refined, _ = forward(net_ref, x)
    out = alpha_blend(x, refined, alpha)
    return out[0] if squeeze else out
