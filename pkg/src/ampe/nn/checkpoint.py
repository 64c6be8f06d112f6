"""Directory-based checkpoint format.

A checkpoint directory holds manifest.json plus one raw binary file per
parameter, little-endian float32, row-major, at "<param path>.bin". The
manifest records the graph structure, parameter shapes, and any extra
metadata, with keys sorted so identical states serialize byte-identically.
"""

import json
import os

import numpy as np

from ..errors import CheckpointError
from .graph import LayerSpec, Network

FORMAT_VERSION = 1


def save_network(net, directory, extra=None):
    """Write net's structure and parameters under directory."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": net.name,
        "input_channels": net.input_channels,
        "layers": [spec.to_dict() for spec in net.layers],
        "output": net.output,
        "params": {path: list(shape) for path, shape in sorted(net.param_shapes.items())},
        "dtype": "float32",
        "extra": extra or {},
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for path in sorted(net.param_shapes):
        arr = np.ascontiguousarray(net.params[path], dtype="<f4")
        with open(os.path.join(directory, f"{path}.bin"), "wb") as fh:
            fh.write(arr.tobytes())


def load_network(directory, dtype=np.float32):
    """Rebuild a Network (and its extra metadata) from a checkpoint directory."""
    mpath = os.path.join(directory, "manifest.json")
    try:
        with open(mpath, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise CheckpointError(f"missing manifest: {mpath}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest {mpath}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{mpath}: unsupported format_version {manifest.get('format_version')!r}")
    layers = [LayerSpec.from_dict(d) for d in manifest["layers"]]
    net = Network(
        manifest["name"],
        manifest["input_channels"],
        layers,
        manifest["output"],
        dtype=dtype,
    )
    for path, shape in manifest["params"].items():
        shape = tuple(shape)
        if path not in net.param_shapes:
            raise CheckpointError(f"{directory}: unexpected parameter {path!r}")
        if net.param_shapes[path] != shape:
            raise CheckpointError(
                f"{directory}: {path} shape {shape} does not match graph {net.param_shapes[path]}"
            )
        bpath = os.path.join(directory, f"{path}.bin")
        try:
            raw = np.fromfile(bpath, dtype="<f4")
        except (OSError, FileNotFoundError) as exc:
            raise CheckpointError(f"missing parameter file {bpath}") from exc
        if raw.size != int(np.prod(shape)):
            raise CheckpointError(
                f"{bpath}: has {raw.size} values, expected {int(np.prod(shape))} for shape {shape}"
            )
        net.params[path] = raw.reshape(shape).astype(net.dtype)
    missing = set(net.param_shapes) - set(manifest["params"])
    if missing:
        raise CheckpointError(f"{directory}: manifest missing parameters {sorted(missing)}")
    net._version += 1
    return net, manifest.get("extra", {})
