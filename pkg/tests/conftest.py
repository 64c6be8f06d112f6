"""Shared fixtures: a tiny synthetic dataset and briefly-trained checkpoints.

The tiny dataset uses 32x32 images (the smallest legal size) and the
shared checkpoints run only a handful of optimizer steps; they exist to
exercise wiring, not to produce good restorations.
"""

import numpy as np
import pytest

from ampe.images import save_image
from ampe.synth import SynthParams, generate_dataset, write_dataset
from ampe.training import TrainConfig, train_locnet, train_main

TINY_SHAPE = (32, 32)


def tiny_params(seed=0):
    return SynthParams(streak_count=12, streak_length=8, haze_smoothness=8.0, seed=seed)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(tiny_params(), 2, TINY_SHAPE)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory, tiny_dataset):
    out = tmp_path_factory.mktemp("data")
    write_dataset(tiny_dataset, str(out), tiny_params())
    return str(out)


@pytest.fixture(scope="session")
def loc_ckpt_dir(tmp_path_factory, tiny_dataset):
    out = tmp_path_factory.mktemp("ckpt-loc")
    cfg = TrainConfig(phase="locnet", patch_size=32, steps_per_epoch=2, seed=0)
    train_locnet(tiny_dataset, cfg, out_dir=str(out))
    return str(out)


@pytest.fixture(scope="session")
def main_ckpt_dir(tmp_path_factory, tiny_dataset, loc_ckpt_dir):
    out = tmp_path_factory.mktemp("ckpt-main")
    cfg = TrainConfig(phase="main", patch_size=32, steps_per_epoch=4, seed=0)
    train_main(tiny_dataset, loc_ckpt_dir, cfg, out_dir=str(out))
    return str(out)


@pytest.fixture()
def make_png(tmp_path):
    """Write a random RGB PNG and return its path."""

    def _make(shape=TINY_SHAPE, seed=0, name="img.png"):
        rng = np.random.default_rng(seed)
        path = tmp_path / name
        save_image(str(path), rng.random((shape[0], shape[1], 3)))
        return str(path)

    return _make


@pytest.fixture()
def run_cli(capsys):
    """Invoke the CLI in-process; returns (exit code, stdout, stderr)."""
    from ampe.cli import main

    def _run(argv):
        code = main(argv)
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return _run
