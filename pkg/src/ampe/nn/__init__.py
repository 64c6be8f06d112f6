"""Minimal NHWC convolutional network engine with hand-written gradients."""

from .checkpoint import load_network, save_network
from .gradcheck import grad_check
from .graph import KINDS, LayerSpec, Network, backward, forward, init_params

__all__ = [
    "KINDS",
    "LayerSpec",
    "Network",
    "backward",
    "forward",
    "init_params",
    "grad_check",
    "save_network",
    "load_network",
]
