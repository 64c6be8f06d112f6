"""Rain-streak localization network H(·).

Shallow path: three parallel densely-connected blocks with kernel sizes
7/5/3 over the input image, concatenated with the image and compressed by
a convolution into the shallow features f_l. Deep path: four parallel
branches, each downsampling f_l by one scale factor, applying a stack of
residual blocks, and upsampling back to full resolution; their concat is
f_d. The fused (f_l, f_d) features feed a 2-channel head whose per-pixel
softmax gives the streak-presence probability (channel 0).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .images import SPATIAL_MULTIPLE
from .nn import LayerSpec, Network, forward, init_params

# The classifier head starts with deliberately small weights so the initial
# per-pixel probabilities sit near 0.5. Full-gain initial logits are large
# enough that, combined with the heavy class imbalance of streak maps, the
# rain channel can be driven into float32 softmax underflow — an absorbing
# state with exactly-zero gradients — within the first optimizer steps.
HEAD_INIT_SCALE = 0.1


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LocNetConfig:
    """Architecture knobs; defaults are the standard configuration.

    scale_factors may be overridden (e.g. (4, 2)) to build a small-input
    variant of the same code path for gradient testing.
    """

    dense_kernels: tuple = (7, 5, 3)
    scale_factors: tuple = (16, 8, 4, 2)
    res_blocks: int = 5
    base_channels: int = 16
    dense_depth: int = 3
    dense_growth: int = 8

    def __post_init__(self):
        if not self.dense_kernels or any(k % 2 == 0 or k < 1 for k in self.dense_kernels):
            raise ConfigError(f"dense kernel sizes must be odd and positive, got {self.dense_kernels}")
        if not self.scale_factors or not all(_is_pow2(s) for s in self.scale_factors):
            raise ConfigError(f"scale factors must be powers of 2, got {self.scale_factors}")
        if self.res_blocks < 1 or self.base_channels < 1:
            raise ConfigError("res_blocks and base_channels must be >= 1")


def build_locnet(config=None, seed=0, dtype=np.float32):
    """Construct and initialize the localization network."""
    cfg = config or LocNetConfig()
    c = cfg.base_channels
    layers = []
    shallow_inputs = []
    for k in cfg.dense_kernels:
        name = f"dense{k}"
        layers.append(
            LayerSpec(name, "dense_block", ("image",), kernel=k, depth=cfg.dense_depth, growth=cfg.dense_growth)
        )
        shallow_inputs.append(name)
    layers.append(LayerSpec("shallow_cat", "concat", tuple(shallow_inputs) + ("image",)))
    layers.append(LayerSpec("compress", "conv", ("shallow_cat",), out_channels=c, kernel=3))
    layers.append(LayerSpec("f_l", "relu", ("compress",)))
    branch_outs = []
    for s in cfg.scale_factors:
        prev = f"branch{s}_down"
        layers.append(LayerSpec(prev, "downsample", ("f_l",), factor=s))
        for r in range(1, cfg.res_blocks + 1):
            name = f"branch{s}_res{r}"
            layers.append(LayerSpec(name, "res_block", (prev,), kernel=3))
            prev = name
        layers.append(LayerSpec(f"branch{s}_up", "upsample_conv", (prev,), out_channels=c, factor=s))
        branch_outs.append(f"branch{s}_up")
    layers.append(LayerSpec("f_d", "concat", tuple(branch_outs)))
    layers.append(LayerSpec("fused_cat", "concat", ("f_l", "f_d")))
    layers.append(LayerSpec("fuse", "conv", ("fused_cat",), out_channels=c, kernel=3))
    layers.append(LayerSpec("fuse_act", "relu", ("fuse",)))
    layers.append(LayerSpec("head", "conv", ("fuse_act",), out_channels=2, kernel=3))
    layers.append(LayerSpec("prob", "softmax2", ("head",)))
    net = Network("locnet", {"image": 3}, layers, "prob", dtype=dtype)
    init_params(net, seed)
    net.params["head.w"] = (net.params["head.w"] * HEAD_INIT_SCALE).astype(net.dtype)
    net._version += 1
    return net


def locnet_forward(net, image):
    """Predict the streak location map L̂ ∈ [0,1]^{H×W×1} for an image."""
    image = np.asarray(image)
    squeeze = image.ndim == 3
    if squeeze:
        image = image[None]
    if image.ndim != 4 or image.shape[3] != 3:
        raise ShapeError(f"expected (H,W,3) or (N,H,W,3) image, got {image.shape}")
    if image.shape[1] % SPATIAL_MULTIPLE or image.shape[2] % SPATIAL_MULTIPLE:
        raise ShapeError(
            f"image dims {image.shape[1:3]} must be divisible by {SPATIAL_MULTIPLE}"
        )
    prob, _ = forward(net, image)
    loc = prob[..., 0:1]
    return loc[0] if squeeze else loc
