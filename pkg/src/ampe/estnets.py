"""The two-branch estimation unit: EstNet-R = G(·) and EstNet-T = F(·).

Both branches share one architecture — a 9×9 convolution, two
pool-and-convolve downsamplings, five residual blocks, two
upsample-convolutions, a skip concat with the first convolution's
features, and a 3-channel head — and differ only in the output
activation: ReLU for the transmission branch (non-negative T̂) and tanh
for the rain branch (signed, bounded residual).

Each branch consumes a 7-channel guided input [image | guide | image ∘
guide]; the rain branch is guided by the streak map L̂ and the
transmission branch by its complement 1 − L̂.
"""

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import LayerSpec, Network, forward, init_params
from .rainmodel import EPS_T, clamp_transmission

GUIDED_CHANNELS = 7


def assemble_guided_input(image, guide):
    """Pack [image, guide, image ∘ guide] along channels (3+1+3 = 7)."""
    image = np.asarray(image)
    guide = np.asarray(guide)
    if image.shape[-1] != 3:
        raise ShapeError(f"image must have 3 channels, got shape {image.shape}")
    if guide.shape[-1] != 1 or guide.shape[:-1] != image.shape[:-1]:
        raise ShapeError(f"guide shape {guide.shape} incompatible with image {image.shape}")
    if guide.size and (guide.min() < 0 or guide.max() > 1):
        raise ValueError("guide values must lie in [0, 1]")
    return np.concatenate([image, guide, image * guide], axis=-1)


def build_estnet(kind, seed=0, base_channels=16, dtype=np.float32):
    """Construct one branch; kind 'T' ends in ReLU, kind 'R' in tanh.

    The two kinds expose identical parameter paths and shapes.
    """
    if kind not in ("R", "T"):
        raise ConfigError(f"estnet kind must be 'R' or 'T', got {kind!r}")
    c = base_channels
    layers = [
        LayerSpec("conv_in", "conv", ("guided",), out_channels=c, kernel=9),
        LayerSpec("act_in", "relu", ("conv_in",)),
        LayerSpec("down1_pool", "downsample", ("act_in",), factor=2),
        LayerSpec("down1_conv", "conv", ("down1_pool",), out_channels=c, kernel=3),
        LayerSpec("down1_act", "relu", ("down1_conv",)),
        LayerSpec("down2_pool", "downsample", ("down1_act",), factor=2),
        LayerSpec("down2_conv", "conv", ("down2_pool",), out_channels=c, kernel=3),
        LayerSpec("down2_act", "relu", ("down2_conv",)),
    ]
    prev = "down2_act"
    for r in range(1, 6):
        layers.append(LayerSpec(f"res{r}", "res_block", (prev,), kernel=3))
        prev = f"res{r}"
    layers += [
        LayerSpec("up1", "upsample_conv", (prev,), out_channels=c, factor=2),
        LayerSpec("up1_act", "relu", ("up1",)),
        LayerSpec("up2", "upsample_conv", ("up1_act",), out_channels=c, factor=2),
        LayerSpec("up2_act", "relu", ("up2",)),
        LayerSpec("skip_cat", "concat", ("up2_act", "act_in")),
        LayerSpec("head", "conv", ("skip_cat",), out_channels=3, kernel=3),
        LayerSpec("out_act", "relu" if kind == "T" else "tanh", ("head",)),
    ]
    net = Network(f"estnet_{kind.lower()}", {"guided": GUIDED_CHANNELS}, layers, "out_act", dtype=dtype)
    return init_params(net, seed)


def _batched(x):
    x = np.asarray(x)
    return (x[None], True) if x.ndim == 3 else (x, False)


def estimate_R(net_r, image, loc):
    """Rain layer estimate R̂ = G(image, L̂, image ∘ L̂)."""
    image, squeeze = _batched(image)
    loc = np.asarray(loc)
    if loc.ndim == 3:
        loc = loc[None]
    out, _ = forward(net_r, assemble_guided_input(image, loc))
    return out[0] if squeeze else out


def estimate_T(net_t, image, loc, eps=EPS_T):
    """Transmission estimate T̂ = clamp(F(image, 1−L̂, image ∘ (1−L̂)))."""
    image, squeeze = _batched(image)
    loc = np.asarray(loc)
    if loc.ndim == 3:
        loc = loc[None]
    raw, _ = forward(net_t, assemble_guided_input(image, 1.0 - loc))
    t = clamp_transmission(raw, eps)
    return t[0] if squeeze else t
