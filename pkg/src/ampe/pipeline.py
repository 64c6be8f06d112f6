"""End-to-end inference and checkpoint-bundle I/O.

A model bundle is a directory of per-subnet checkpoints (locnet/,
estnet_r/, estnet_t/, refnet/) plus a top-level manifest.json recording
the training configuration, the blend constant used in training, the
loss reduction, and which subnets are present (ablations omit some).

The inference chain: the localization net produces the streak map L̂ (or
a constant 0.5 guide when ablated); the rain branch estimates R̂ and the
transmission branch T̂ (identically 1 when ablated); the physical model
is inverted to B_m = (I − R̂) ⊘ T̂; the refinement net maps B_m to a
refined image. Blending B_m with the refinement is left to callers since
it is pointwise linear in α.
"""

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .estnets import assemble_guided_input
from .images import SPATIAL_MULTIPLE, crop_padding, pad_to_multiple
from .locnet import locnet_forward
from .nn import forward, load_network, save_network
from .rainmodel import EPS_T, alpha_blend, clamp_transmission, invert

logger = logging.getLogger("ampe")

BUNDLE_MANIFEST = "manifest.json"
SUBNET_NAMES = ("locnet", "estnet_r", "estnet_t", "refnet")


@dataclass
class ModelBundle:
    """Loaded subnets (absent ones are None) plus the bundle manifest."""

    locnet: object = None
    estnet_r: object = None
    estnet_t: object = None
    refnet: object = None
    meta: dict = field(default_factory=dict)

    def require_joint(self):
        if self.estnet_r is None or self.refnet is None:
            raise CheckpointError(
                "checkpoint lacks the jointly-trained subnets; train phase 'main' first"
            )


def save_bundle(path, nets, config_dict, phase, reduction="mean"):
    """Write a bundle directory: one subdir per subnet plus manifest.json."""
    os.makedirs(path, exist_ok=True)
    present = [n for n in SUBNET_NAMES if nets.get(n) is not None]
    manifest = {
        "kind": "model-bundle",
        "phase": phase,
        "config": config_dict,
        "alpha_train": config_dict.get("alpha_train"),
        "reduction": reduction,
        "subnets": present,
    }
    with open(os.path.join(path, BUNDLE_MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    extra = {"training_config": config_dict, "reduction": reduction}
    for name in present:
        save_network(nets[name], os.path.join(path, name), extra=extra)
    return manifest


def load_bundle(path, dtype=np.float32):
    """Load a bundle directory written by save_bundle."""
    mpath = os.path.join(path, BUNDLE_MANIFEST)
    try:
        with open(mpath, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise CheckpointError(f"no bundle manifest at {mpath}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable bundle manifest {mpath}: {exc}") from exc
    if manifest.get("kind") != "model-bundle":
        raise CheckpointError(f"{mpath}: not a model bundle manifest")
    bundle = ModelBundle(meta=manifest)
    for name in manifest.get("subnets", []):
        if name not in SUBNET_NAMES:
            raise CheckpointError(f"{mpath}: unknown subnet {name!r}")
        net, _ = load_network(os.path.join(path, name), dtype=dtype)
        setattr(bundle, name, net)
    return bundle


def constant_guide(shape_like, value=0.5):
    """Guide map used when the localization net is ablated."""
    n, h, w, _ = shape_like.shape
    return np.full((n, h, w, 1), value, dtype=shape_like.dtype)


def derain_arrays(bundle, image, eps=EPS_T):
    """Run the full chain on one (H,W,3) image in [0,1].

    Returns float arrays (H,W,·): loc, r_hat, t_hat, b_m, refined. Images
    whose dims are not multiples of 32 are reflect-padded, processed, and
    cropped back (with a warning).
    """
    bundle.require_joint()
    image = np.asarray(image, dtype=np.float64)
    padded, pad = pad_to_multiple(image, SPATIAL_MULTIPLE)
    if pad != (0, 0):
        logger.warning(
            "input dims %s not divisible by %d; reflect-padding by %s and cropping the result",
            image.shape[:2], SPATIAL_MULTIPLE, pad,
        )
    x = padded[None].astype(bundle.estnet_r.dtype)
    if bundle.locnet is not None:
        guide = locnet_forward(bundle.locnet, x)
    else:
        guide = constant_guide(x)
    r_hat, _ = forward(bundle.estnet_r, assemble_guided_input(x, guide))
    if bundle.estnet_t is not None:
        t_raw, _ = forward(bundle.estnet_t, assemble_guided_input(x, 1.0 - guide))
        t_hat = clamp_transmission(t_raw, eps)
    else:
        t_hat = np.ones_like(x)
    b_m = invert(x, r_hat, t_hat, eps)
    refined, _ = forward(bundle.refnet, b_m)
    maps = {"loc": guide, "r_hat": r_hat, "t_hat": t_hat, "b_m": b_m, "refined": refined}
    return {k: crop_padding(v[0], pad) for k, v in maps.items()}


def blend_maps(maps, alphas):
    """Pointwise blends α·B_m + (1−α)·refined for each α, unclipped."""
    return {float(a): alpha_blend(maps["b_m"], maps["refined"], float(a)) for a in alphas}
