"""Regenerate blend.json: one recorded run of the deraining pipeline.

The fixture freezes the two endpoint images a client would download
(bm.png, refined.png — already quantized to 8 bits, exactly as the server
stores them) together with the blends the Python side publishes for the
preset constants. The viewer's client-side blend must match these within
one gray level per channel.

Run from this directory with the `ampe` package installed:

    python3 generate.py
"""

import json
import os

import numpy as np

from ampe.images import to_float, to_uint8
from ampe.locnet import build_locnet
from ampe.pipeline import ModelBundle, derain_arrays
from ampe.rainmodel import alpha_blend
from ampe.synth import SynthParams, generate_dataset
from ampe.training import TrainConfig, build_main_nets

ALPHAS = (0.0, 0.3, 0.6, 0.9, 1.0)
SEED = 7
SHAPE = (32, 32)


def main():
    triple = generate_dataset(SynthParams(seed=SEED), 1, SHAPE)[0]
    nets = build_main_nets(TrainConfig(phase="main", seed=SEED))
    bundle = ModelBundle(
        locnet=build_locnet(seed=[SEED, 10]),
        estnet_r=nets["estnet_r"],
        estnet_t=nets["estnet_t"],
        refnet=nets["refnet"],
    )
    maps = derain_arrays(bundle, triple.rain)

    # the stored result images, then the published blends of those images
    bm_u8 = to_uint8(maps["b_m"])
    refined_u8 = to_uint8(maps["refined"])
    blends = {
        repr(a): to_uint8(alpha_blend(to_float(bm_u8), to_float(refined_u8), a)).reshape(-1).tolist()
        for a in ALPHAS
    }

    doc = {
        "note": "recorded pipeline run; regenerate with generate.py",
        "width": SHAPE[1],
        "height": SHAPE[0],
        "bm": bm_u8.reshape(-1).tolist(),
        "refined": refined_u8.reshape(-1).tolist(),
        "blends": blends,
    }
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "blend.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    print(f"wrote {out}: {SHAPE[0]}x{SHAPE[1]}, alphas {[repr(a) for a in ALPHAS]}")


if __name__ == "__main__":
    main()
