"""Losses, optimizer, and the two training phases.

Loss formulas are checked against scalar loops and frozen hand-computed
values; main_step's combined backward pass is checked end to end against
central finite differences in double precision on a small instance.
"""

import json
import os

import numpy as np
import pytest

from ampe.errors import CheckpointError, ConfigError, DatasetError, TrainingError
from ampe.estnets import build_estnet
from ampe.locnet import build_locnet
from ampe.refnet import ALPHA_TRAIN, RefNetConfig, build_refnet
from ampe.synth import SynthParams, Triple, generate_dataset
from ampe.training import (
    LOG_NAME,
    TrainConfig,
    TrainState,
    adam_step,
    build_main_nets,
    loss_l1,
    loss_l2,
    loss_loc,
    loss_refine,
    lr_at,
    main_step,
    select_model_loss,
    total_loss,
    train_locnet,
    train_main,
)

RNG = np.random.default_rng(77)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig(phase="locnet")
        assert cfg.patch_size == 64
        assert cfg.lr == 1e-3
        assert cfg.epochs == 1
        assert cfg.alpha_train == 0.9
        assert cfg.use_locnet and cfg.use_estnet_t and cfg.use_loss_l2
        assert cfg.seed == 0

    def test_batch_defaults_per_phase(self):
        assert TrainConfig(phase="locnet").resolved_batch == 4
        assert TrainConfig(phase="main").resolved_batch == 2
        assert TrainConfig(phase="main", batch_size=7).resolved_batch == 7

    def test_unknown_phase_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(phase="warmup")

    def test_patch_must_be_spatial_multiple(self):
        with pytest.raises(ConfigError):
            TrainConfig(phase="locnet", patch_size=48)
        with pytest.raises(ConfigError):
            TrainConfig(phase="locnet", patch_size=0)
        TrainConfig(phase="locnet", patch_size=96)  # fine

    def test_lr_and_epochs_validated(self):
        with pytest.raises(ConfigError):
            TrainConfig(phase="locnet", lr=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(phase="locnet", epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(phase="locnet", batch_size=-1)

    def test_alpha_train_range(self):
        with pytest.raises(ConfigError):
            TrainConfig(phase="main", alpha_train=1.5)
        with pytest.raises(ConfigError):
            TrainConfig(phase="main", alpha_train=-0.1)

    def test_dict_round_trip(self):
        cfg = TrainConfig(phase="main", lr=5e-4, seed=3, use_loss_l2=False)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ConfigError, match="unknown"):
            TrainConfig.from_dict({"phase": "main", "momentum": 0.9})

    def test_from_dict_requires_phase(self):
        with pytest.raises(ConfigError, match="phase"):
            TrainConfig.from_dict({"lr": 1e-3})


# ---------------------------------------------------------------------------
# losses against scalar loops and frozen values
# ---------------------------------------------------------------------------


def _loop_sq_sum(err):
    total = 0.0
    for v in np.asarray(err, dtype=np.float64).ravel():
        total += v * v
    return total


class TestLossOracles:
    def setup_method(self):
        shape = (2, 4, 4, 3)
        self.b = RNG.uniform(0, 1, shape)
        self.image = RNG.uniform(0, 1, shape)
        self.r = RNG.uniform(-0.3, 0.3, shape)
        self.t = RNG.uniform(0.2, 1.0, shape)

    def test_loss_loc_matches_loop(self):
        l_hat = RNG.uniform(0, 1, (2, 4, 4, 1))
        l = (RNG.uniform(0, 1, (2, 4, 4, 1)) > 0.7).astype(np.float64)
        want = _loop_sq_sum(l_hat - l)
        assert loss_loc(l_hat, l) == pytest.approx(want, rel=1e-12)
        assert loss_loc(l_hat, l, reduction="mean") == pytest.approx(want / l.size, rel=1e-12)

    def test_loss_loc_frozen_value(self):
        # constant 0.5 prediction against an all-zero map on 2x2 pixels
        l_hat = np.full((2, 2, 1), 0.5)
        l = np.zeros((2, 2, 1))
        assert loss_loc(l_hat, l) == pytest.approx(1.0, abs=1e-15)

    def test_loss_loc_shape_mismatch(self):
        with pytest.raises(ConfigError, match="shapes"):
            loss_loc(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))

    def test_loss_l1_matches_loop(self):
        want = _loop_sq_sum(self.b - (self.image - self.r) / self.t)
        assert loss_l1(self.b, self.image, self.r, self.t) == pytest.approx(want, rel=1e-12)
        assert loss_l1(self.b, self.image, self.r, self.t, reduction="mean") == pytest.approx(
            want / self.b.size, rel=1e-12
        )

    def test_loss_l1_rejects_nonpositive_transmission(self):
        t = self.t.copy()
        t[0, 0, 0, 0] = 0.0
        with pytest.raises(ConfigError, match="positive"):
            loss_l1(self.b, self.image, self.r, t)

    def test_loss_l2_matches_loop(self):
        want = _loop_sq_sum(self.image - self.t * self.b - self.r)
        assert loss_l2(self.b, self.image, self.r, self.t) == pytest.approx(want, rel=1e-12)

    def test_losses_agree_when_transmission_is_unity(self):
        t = np.ones_like(self.image)
        v1 = loss_l1(self.b, self.image, self.r, t)
        v2 = loss_l2(self.b, self.image, self.r, t)
        assert v1 == pytest.approx(v2, rel=1e-12)
        assert v1 == pytest.approx(_loop_sq_sum(self.b - self.image + self.r), rel=1e-12)

    def test_losses_vanish_on_exact_decomposition(self):
        image = self.t * self.b + self.r
        assert loss_l1(self.b, image, self.r, self.t) == pytest.approx(0.0, abs=1e-18)
        assert loss_l2(self.b, image, self.r, self.t) == pytest.approx(0.0, abs=1e-18)

    def test_loss_refine_matches_loop(self):
        b_m = RNG.uniform(0, 1, self.b.shape)
        refined = RNG.uniform(0, 1, self.b.shape)
        alpha = 0.9
        want = _loop_sq_sum(alpha * b_m + (1 - alpha) * refined - self.b)
        assert loss_refine(b_m, refined, self.b, alpha) == pytest.approx(want, rel=1e-12)

    def test_loss_refine_vanishes_at_endpoints(self):
        refined = RNG.uniform(0, 1, self.b.shape)
        assert loss_refine(self.b, refined, self.b, 1.0) == pytest.approx(0.0, abs=1e-18)
        assert loss_refine(refined, self.b, self.b, 0.0) == pytest.approx(0.0, abs=1e-18)

    def test_bad_reduction_rejected(self):
        with pytest.raises(ConfigError, match="reduction"):
            loss_loc(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)), reduction="median")


class TestAlternation:
    def test_first_steps(self):
        assert select_model_loss(1) == "L1"
        assert select_model_loss(2) == "L2"
        assert select_model_loss(7) == "L1"

    def test_step_index_is_one_based(self):
        with pytest.raises(ConfigError, match="starts at 1"):
            select_model_loss(0)
        with pytest.raises(ConfigError):
            select_model_loss(-3)

    def test_thousand_step_parity(self):
        # odd steps take the inversion-form loss, even steps the forward form
        import time

        t0 = time.monotonic()
        for i in range(1, 1001):
            want = "L1" if i % 2 == 1 else "L2"
            assert select_model_loss(i) == want
        assert time.monotonic() - t0 < 1.0

    def test_ablation_pins_first_form(self):
        assert all(select_model_loss(i, use_loss_l2=False) == "L1" for i in range(1, 50))

    def test_total_is_sum_of_parts(self):
        shape = (1, 4, 4, 3)
        b = RNG.uniform(0, 1, shape)
        image = RNG.uniform(0, 1, shape)
        r = RNG.uniform(-0.3, 0.3, shape)
        t = RNG.uniform(0.2, 1.0, shape)
        b_m = (image - r) / t
        refined = RNG.uniform(0, 1, shape)
        for i, reduction in ((1, "sum"), (2, "sum"), (3, "mean")):
            model = loss_l1(b, image, r, t, reduction) if i % 2 else loss_l2(b, image, r, t, reduction)
            want = model + loss_refine(b_m, refined, b, 0.9, reduction)
            got = total_loss(i, b, image, r, t, b_m, refined, 0.9, reduction=reduction)
            assert got == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class TestOptimizer:
    def test_lr_schedule_decays_tenfold_per_epoch(self):
        assert lr_at(1e-3, 0) == 1e-3
        assert lr_at(1e-3, 1) == pytest.approx(1e-4, rel=1e-12)
        assert lr_at(1e-3, 2) == pytest.approx(1e-5, rel=1e-12)
        assert lr_at(0.5, 3) == pytest.approx(0.5 * 1e-3, rel=1e-12)

    def test_state_lr_tracks_epoch(self):
        state = TrainState(2e-3)
        assert state.lr == 2e-3
        state.epoch = 2
        assert state.lr == pytest.approx(2e-5, rel=1e-12)

    def test_zero_gradient_leaves_params_unchanged(self):
        params = {"a": np.ones((3, 3))}
        before = params["a"].copy()
        adam_step(TrainState(1e-2), params, {"a": np.zeros((3, 3))})
        assert np.array_equal(params["a"], before)

    def test_first_step_magnitude_is_learning_rate(self):
        # with a constant gradient the bias-corrected first step is lr·sign(g)
        params = {"a": np.zeros(5)}
        g = np.full(5, 3.7)
        adam_step(TrainState(1e-3), params, {"a": g})
        np.testing.assert_allclose(params["a"], -1e-3, rtol=1e-5)

    def test_step_uses_decayed_lr(self):
        params = {"a": np.zeros(4)}
        state = TrainState(1e-2)
        state.epoch = 1
        adam_step(state, params, {"a": np.ones(4)})
        np.testing.assert_allclose(params["a"], -1e-3, rtol=1e-5)

    def test_nonfinite_gradient_aborts_naming_parameter(self):
        params = {"net/w": np.zeros(3)}
        bad = np.array([1.0, np.nan, 2.0])
        with pytest.raises(TrainingError, match="net/w"):
            adam_step(TrainState(1e-3), params, {"net/w": bad})

    def test_updates_are_deterministic(self):
        def run():
            params = {"a": np.linspace(-1, 1, 6), "b": np.ones(2)}
            state = TrainState(1e-3)
            for t in range(5):
                grads = {"a": np.sin(params["a"] + t), "b": params["b"] * 0.5}
                adam_step(state, params, grads)
            return params

        p1, p2 = run(), run()
        assert np.array_equal(p1["a"], p2["a"])
        assert np.array_equal(p1["b"], p2["b"])


# ---------------------------------------------------------------------------
# main_step: end-to-end gradients against finite differences
# ---------------------------------------------------------------------------


def _small_main_nets(use_estnet_t=True, dtype=np.float64):
    nets = {
        "estnet_r": build_estnet("R", seed=1, base_channels=4, dtype=dtype),
        "refnet": build_refnet(
            RefNetConfig(spp_factors=(2, 4), base_channels=4, reduce_channels=2),
            seed=2,
            dtype=dtype,
        ),
        "estnet_t": build_estnet("T", seed=3, base_channels=4, dtype=dtype) if use_estnet_t else None,
    }
    return nets


def _small_batch(rng):
    image = rng.uniform(0.1, 0.9, (1, 8, 8, 3))
    b = rng.uniform(0.1, 0.9, (1, 8, 8, 3))
    guide = rng.uniform(0.05, 0.95, (1, 8, 8, 1))
    return image, b, guide


def _directional_fd_check(nets, image, b, guide, step_index, use_estnet_t=True):
    """Compare analytic gradients to a central difference along one random
    direction per parameter tensor.

    The transmission clamp makes the loss extremely curved (gradients scale
    with 1/T̂² ≈ 400), so no single step width suits every tensor: large
    curvature needs a small δ, cancellation-heavy tensors a larger one.
    A real gradient bug is a δ-independent bias, so requiring agreement at
    the better of two widths keeps the check sound.
    """

    def value():
        losses, _, _ = main_step(
            nets, image, b, guide, step_index,
            use_estnet_t=use_estnet_t, reduction="sum",
        )
        return losses["total"]

    _, grads, _ = main_step(
        nets, image, b, guide, step_index, use_estnet_t=use_estnet_t, reduction="sum"
    )
    rng = np.random.default_rng(123)
    worst = 0.0
    for key in sorted(grads):
        net_name, path = key.split("/", 1)
        arr = nets[net_name].params[path]
        v = rng.standard_normal(arr.shape)
        v /= np.sqrt((v * v).sum())
        ad = float((grads[key] * v).sum())
        best = np.inf
        for delta in (1e-4, 1e-5, 1e-6):
            arr += delta * v
            hi = value()
            arr -= 2 * delta * v
            lo = value()
            arr += delta * v
            fd = (hi - lo) / (2 * delta)
            best = min(best, abs(ad - fd) / max(abs(ad), abs(fd), 1e-6))
        worst = max(worst, best)
    return worst


class TestMainStepGradients:
    @pytest.mark.parametrize("step_index", [1, 2])
    def test_matches_finite_differences(self, step_index):
        rng = np.random.default_rng(5)
        nets = _small_main_nets()
        image, b, guide = _small_batch(rng)
        worst = _directional_fd_check(nets, image, b, guide, step_index)
        assert worst < 1e-4

    def test_gradient_keys_cover_all_trainables(self):
        nets = _small_main_nets()
        rng = np.random.default_rng(6)
        image, b, guide = _small_batch(rng)
        _, grads, _ = main_step(nets, image, b, guide, 1, reduction="sum")
        prefixes = {k.split("/", 1)[0] for k in grads}
        assert prefixes == {"estnet_r", "estnet_t", "refnet"}
        for name in ("estnet_r", "estnet_t", "refnet"):
            want = {f"{name}/{p}" for p in nets[name].params}
            assert want == {k for k in grads if k.startswith(name + "/")}

    def test_disabling_transmission_yields_exact_subtraction(self):
        nets = _small_main_nets(use_estnet_t=False)
        rng = np.random.default_rng(7)
        image, b, guide = _small_batch(rng)
        _, grads, maps = main_step(
            nets, image, b, guide, 1, use_estnet_t=False, reduction="sum"
        )
        assert np.array_equal(maps["b_m"], image - maps["r_hat"])
        assert not any(k.startswith("estnet_t/") for k in grads)

    def test_disabled_transmission_gradients_match_fd(self):
        rng = np.random.default_rng(8)
        nets = _small_main_nets(use_estnet_t=False)
        image, b, guide = _small_batch(rng)
        worst = _directional_fd_check(nets, image, b, guide, 2, use_estnet_t=False)
        assert worst < 1e-4

    def test_losses_dict_shape(self):
        nets = _small_main_nets()
        rng = np.random.default_rng(9)
        image, b, guide = _small_batch(rng)
        losses, _, maps = main_step(nets, image, b, guide, 2, reduction="mean")
        assert losses["name"] == "L2"
        assert losses["total"] == pytest.approx(losses["model"] + losses["refine"], rel=1e-12)
        assert set(maps) == {"r_hat", "t_hat", "b_m", "refined", "blend"}
        assert maps["t_hat"].min() >= 0.05 - 1e-12
        assert np.allclose(
            maps["blend"], 0.9 * maps["b_m"] + 0.1 * maps["refined"], atol=1e-12
        )


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------


class TestTrainLocnet:
    def test_requires_locnet_phase(self, tiny_dataset):
        with pytest.raises(ConfigError, match="locnet"):
            train_locnet(tiny_dataset, TrainConfig(phase="main"))

    def test_rejected_when_guide_disabled(self, tiny_dataset):
        cfg = TrainConfig(phase="locnet", use_locnet=False)
        with pytest.raises(ConfigError, match="use_locnet"):
            train_locnet(tiny_dataset, cfg)

    def test_empty_dataset(self):
        with pytest.raises(DatasetError, match="empty"):
            train_locnet([], TrainConfig(phase="locnet"))

    def test_patch_larger_than_sample(self, tiny_dataset):
        cfg = TrainConfig(phase="locnet", patch_size=64, steps_per_epoch=1)
        with pytest.raises(DatasetError, match="smaller than patch"):
            train_locnet(tiny_dataset, cfg)

    def test_records_and_reproducibility(self, tiny_dataset):
        cfg = TrainConfig(phase="locnet", patch_size=32, steps_per_epoch=2, seed=4)
        net1, recs1 = train_locnet(tiny_dataset, cfg)
        net2, recs2 = train_locnet(tiny_dataset, cfg)
        assert [r["value"] for r in recs1] == [r["value"] for r in recs2]
        for path in net1.params:
            assert np.array_equal(net1.params[path], net2.params[path])
        assert [r["step"] for r in recs1] == [1, 2]
        for rec in recs1:
            assert rec["loss"] == "loc"
            assert rec["epoch"] == 0
            assert rec["lr"] == cfg.lr
            assert np.isfinite(rec["value"])

    def test_writes_bundle_and_log(self, loc_ckpt_dir):
        log = os.path.join(loc_ckpt_dir, LOG_NAME)
        assert os.path.isfile(log)
        with open(log, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh]
        assert {rec["step"] for rec in lines} == {1, 2}
        assert os.path.isfile(os.path.join(loc_ckpt_dir, "locnet", "manifest.json"))


class TestTrainMain:
    def test_requires_main_phase(self, tiny_dataset):
        with pytest.raises(ConfigError, match="main"):
            train_main(tiny_dataset, None, TrainConfig(phase="locnet"))

    def test_missing_checkpoint_is_actionable(self, tiny_dataset):
        cfg = TrainConfig(phase="main", patch_size=32, steps_per_epoch=1)
        with pytest.raises(CheckpointError, match="locnet"):
            train_main(tiny_dataset, None, cfg)

    def test_bad_checkpoint_path(self, tiny_dataset, tmp_path):
        cfg = TrainConfig(phase="main", patch_size=32, steps_per_epoch=1)
        with pytest.raises(CheckpointError, match="locnet"):
            train_main(tiny_dataset, tmp_path / "nope", cfg)

    def test_locnet_stays_frozen(self, tiny_dataset):
        loc_cfg = TrainConfig(phase="locnet", patch_size=32, steps_per_epoch=1)
        locnet, _ = train_locnet(tiny_dataset, loc_cfg)
        before = {k: v.copy() for k, v in locnet.params.items()}
        cfg = TrainConfig(phase="main", patch_size=32, steps_per_epoch=2, batch_size=1)
        nets, _ = train_main(tiny_dataset, locnet, cfg)
        assert nets["locnet"] is locnet
        for k, v in before.items():
            assert np.array_equal(locnet.params[k], v)

    def test_records_alternate_and_sum(self, tiny_dataset):
        loc_cfg = TrainConfig(phase="locnet", patch_size=32, steps_per_epoch=1)
        locnet, _ = train_locnet(tiny_dataset, loc_cfg)
        cfg = TrainConfig(phase="main", patch_size=32, steps_per_epoch=4, batch_size=1)
        _, recs = train_main(tiny_dataset, locnet, cfg)
        assert [r["loss"] for r in recs] == ["L1", "L2", "L1", "L2"]
        for rec in recs:
            assert rec["total"] == pytest.approx(rec["value"] + rec["refine"], rel=1e-9)

    def test_ablation_flags_flow_through(self, tiny_dataset):
        cfg = TrainConfig(
            phase="main", patch_size=32, steps_per_epoch=2, batch_size=1,
            use_locnet=False, use_estnet_t=False, use_loss_l2=False,
        )
        nets, recs = train_main(tiny_dataset, None, cfg)
        assert nets["locnet"] is None
        assert nets["estnet_t"] is None
        assert [r["loss"] for r in recs] == ["L1", "L1"]

    def test_reproducible_across_runs(self, tiny_dataset):
        cfg = TrainConfig(
            phase="main", patch_size=32, steps_per_epoch=2, batch_size=1, use_locnet=False
        )
        nets1, recs1 = train_main(tiny_dataset, None, cfg)
        nets2, recs2 = train_main(tiny_dataset, None, cfg)
        assert [r["total"] for r in recs1] == [r["total"] for r in recs2]
        for name in ("estnet_r", "estnet_t", "refnet"):
            for path in nets1[name].params:
                assert np.array_equal(nets1[name].params[path], nets2[name].params[path])

    def test_builds_fresh_nets_per_seed(self):
        a = build_main_nets(TrainConfig(phase="main", seed=0))
        b = build_main_nets(TrainConfig(phase="main", seed=1))
        assert not np.array_equal(
            a["estnet_r"].params["conv_in.w"], b["estnet_r"].params["conv_in.w"]
        )
