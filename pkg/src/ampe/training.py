"""Two-phase training: localization first, then the joint model.

Phase "locnet" fits the localization net to binary streak maps with an
MSE loss. Phase "main" freezes it and jointly trains the two estimation
branches and the refinement net. The model-consistency loss alternates
by global step parity — inversion form ‖B − (I−R̂)⊘T̂‖² on odd steps,
forward form ‖I − T̂∘B − R̂‖² on even steps — and is summed with the
blend-refinement loss in a single combined backward pass.

All losses exist in two reductions: "sum" (squared Frobenius norms summed
over the batch — the reference form used by tests) and "mean" (per-element
mean — the form actually optimized, recorded in checkpoint manifests).
"""

import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import CheckpointError, ConfigError, DatasetError, TrainingError
from .estnets import assemble_guided_input, build_estnet
from .images import SPATIAL_MULTIPLE
from .locnet import LocNetConfig, build_locnet, locnet_forward
from .nn import backward, forward
from .nn.graph import Network
from .pipeline import constant_guide, load_bundle, save_bundle
from .rainmodel import EPS_T, alpha_blend, clamp_transmission, clamp_transmission_grad_mask, invert
from .refnet import ALPHA_TRAIN, build_refnet

BETA1 = 0.9
BETA2 = 0.999
EPS_ADAM = 1e-8
DEFAULT_BATCH = {"locnet": 4, "main": 2}
LOG_NAME = "train_log.jsonl"

# rng roles (streams derived from the config seed)
_ROLE_BATCH_LOC = 3
_ROLE_BATCH_MAIN = 4
_INIT_SEED_LOC = 10
_INIT_SEED_R = 11
_INIT_SEED_T = 12
_INIT_SEED_REF = 13


@dataclass(frozen=True)
class TrainConfig:
    """Configuration for one training phase; mirrors the JSON config file."""

    phase: str
    batch_size: int = 0  # 0 → phase default (4 for locnet, 2 for main)
    patch_size: int = 64
    lr: float = 1e-3
    epochs: int = 1
    steps_per_epoch: int = 0  # 0 → one pass over the dataset per epoch
    alpha_train: float = ALPHA_TRAIN
    use_locnet: bool = True
    use_estnet_t: bool = True
    use_loss_l2: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.phase not in ("locnet", "main"):
            raise ConfigError(f"phase must be 'locnet' or 'main', got {self.phase!r}")
        if self.batch_size < 0:
            raise ConfigError(f"batch_size must be >= 1 (or 0 for default), got {self.batch_size}")
        if self.patch_size < SPATIAL_MULTIPLE or self.patch_size % SPATIAL_MULTIPLE:
            raise ConfigError(f"patch_size must be a positive multiple of {SPATIAL_MULTIPLE}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1 or self.steps_per_epoch < 0:
            raise ConfigError("epochs must be >= 1 and steps_per_epoch >= 0")
        if not 0.0 <= self.alpha_train <= 1.0:
            raise ConfigError(f"alpha_train must lie in [0, 1], got {self.alpha_train}")

    @property
    def resolved_batch(self):
        return self.batch_size or DEFAULT_BATCH[self.phase]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config field(s): {sorted(unknown)}")
        if "phase" not in d:
            raise ConfigError("training config missing required field 'phase'")
        return cls(**d)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _reduce(sq, reduction):
    if reduction == "sum":
        return float(np.sum(sq))
    if reduction == "mean":
        return float(np.mean(sq))
    raise ConfigError(f"reduction must be 'sum' or 'mean', got {reduction!r}")


def loss_loc(l_hat, l, reduction="sum"):
    """Squared error between predicted and binary streak maps."""
    l_hat = np.asarray(l_hat)
    l = np.asarray(l)
    if l_hat.shape != l.shape:
        raise ConfigError(f"location map shapes differ: {l_hat.shape} vs {l.shape}")
    return _reduce((l_hat - l) ** 2, reduction)


def loss_l1(b, image, r_hat, t_hat, reduction="sum"):
    """Inversion-form residual ‖B − (I − R̂) ⊘ T̂‖²; expects T̂ already clamped > 0."""
    t_hat = np.asarray(t_hat)
    if t_hat.size and t_hat.min() <= 0:
        raise ConfigError("loss_l1 requires a positive (clamped) transmission map")
    return _reduce((np.asarray(b) - (np.asarray(image) - np.asarray(r_hat)) / t_hat) ** 2, reduction)


def loss_l2(b, image, r_hat, t_hat, reduction="sum"):
    """Forward-form residual ‖I − T̂ ∘ B − R̂‖²."""
    return _reduce(
        (np.asarray(image) - np.asarray(t_hat) * np.asarray(b) - np.asarray(r_hat)) ** 2, reduction
    )


def select_model_loss(i, use_loss_l2=True):
    """Alternation by global step parity: odd → "L1", even → "L2"."""
    if i < 1:
        raise ConfigError(f"step index starts at 1, got {i}")
    if not use_loss_l2:
        return "L1"
    return "L1" if i % 2 == 1 else "L2"


def loss_refine(b_m, refined, b, alpha, reduction="sum"):
    """Blend-fit residual ‖α·B_m + (1−α)·refined − B‖²."""
    return _reduce((alpha_blend(b_m, refined, alpha) - np.asarray(b)) ** 2, reduction)


def total_loss(i, b, image, r_hat, t_hat, b_m, refined, alpha, use_loss_l2=True, reduction="sum"):
    """Equally weighted sum of the step's model-consistency loss and the refinement loss."""
    name = select_model_loss(i, use_loss_l2)
    model = loss_l1(b, image, r_hat, t_hat, reduction) if name == "L1" else loss_l2(
        b, image, r_hat, t_hat, reduction
    )
    return model + loss_refine(b_m, refined, b, alpha, reduction)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def lr_at(lr0, epoch):
    """Step-decayed learning rate: lr0 · 0.1^epoch."""
    return lr0 * (0.1 ** epoch)


class TrainState:
    """Adam state shared across all trainable parameters (keyed paths)."""

    def __init__(self, lr0):
        self.lr0 = lr0
        self.step = 0
        self.epoch = 0
        self.m = {}
        self.v = {}

    @property
    def lr(self):
        return lr_at(self.lr0, self.epoch)


def adam_step(state, params, grads):
    """One Adam update, in place; aborts on non-finite gradients."""
    state.step += 1
    t = state.step
    lr = state.lr
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t
    for key in sorted(params):
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {key} at step {t}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(params[key])
            state.v[key] = np.zeros_like(params[key])
        v = state.v[key]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        params[key] -= lr * (m / bc1) / (np.sqrt(v / bc2) + EPS_ADAM)
    return state


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


def _sample_batch(dataset, rng, batch, patch, names, dtype):
    idx = rng.integers(0, len(dataset), size=batch)
    cols = {name: [] for name in names}
    for k in idx:
        sample = dataset[int(k)]
        arrs = {name: np.asarray(getattr(sample, name)) for name in names}
        h, w = arrs[names[0]].shape[:2]
        if h < patch or w < patch:
            raise DatasetError(
                f"sample {getattr(sample, 'sample_id', k)} is {h}x{w}, smaller than patch {patch}"
            )
        if h > patch or w > patch:
            oy = int(rng.integers(0, h - patch + 1))
            ox = int(rng.integers(0, w - patch + 1))
            arrs = {name: a[oy : oy + patch, ox : ox + patch] for name, a in arrs.items()}
        for name in names:
            cols[name].append(arrs[name])
    return {name: np.stack(v).astype(dtype) for name, v in cols.items()}


def _keyed_params(nets):
    out = {}
    for name, net in nets.items():
        if net is not None:
            for path, arr in net.params.items():
                out[f"{name}/{path}"] = arr
    return out


def _steps_per_epoch(config, n):
    return config.steps_per_epoch or max(1, n // config.resolved_batch)


def _write_log(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# phase 1: localization
# ---------------------------------------------------------------------------


def train_locnet(dataset, config, out_dir=None):
    """Fit the localization net; returns (net, log records)."""
    if config.phase != "locnet":
        raise ConfigError(f"train_locnet requires phase 'locnet', got {config.phase!r}")
    if not config.use_locnet:
        raise ConfigError("phase 'locnet' is invalid when use_locnet is disabled")
    if not len(dataset):
        raise DatasetError("empty dataset")
    net = build_locnet(LocNetConfig(), seed=[config.seed, _INIT_SEED_LOC], dtype=np.float32)
    rng = np.random.default_rng([config.seed, _ROLE_BATCH_LOC])
    state = TrainState(config.lr)
    params = _keyed_params({"locnet": net})
    records = []
    i = 0
    for epoch in range(config.epochs):
        state.epoch = epoch
        for _ in range(_steps_per_epoch(config, len(dataset))):
            i += 1
            batch = _sample_batch(dataset, rng, config.resolved_batch, config.patch_size, ("rain", "loc"), np.float32)
            prob, cache = forward(net, batch["rain"])
            l_hat = prob[..., 0:1]
            value = loss_loc(l_hat, batch["loc"], reduction="mean")
            if not np.isfinite(value):
                raise TrainingError(f"non-finite localization loss at step {i}")
            dout = np.zeros_like(prob)
            dout[..., 0:1] = 2.0 * (l_hat - batch["loc"]) / l_hat.size
            grads, _ = backward(net, cache, dout)
            adam_step(state, params, {f"locnet/{k}": v for k, v in grads.items()})
            net._version += 1
            records.append({"step": i, "epoch": epoch, "loss": "loc", "value": value, "lr": state.lr})
    if out_dir is not None:
        save_bundle(out_dir, {"locnet": net}, config.to_dict(), phase="locnet")
        _write_log(records, os.path.join(out_dir, LOG_NAME))
    return net, records


# ---------------------------------------------------------------------------
# phase 2: joint two-branch + refinement
# ---------------------------------------------------------------------------


def build_main_nets(config, dtype=np.float32):
    """Freshly initialized trainable nets for the joint phase (seed-derived)."""
    nets = {
        "estnet_r": build_estnet("R", seed=[config.seed, _INIT_SEED_R], dtype=dtype),
        "refnet": build_refnet(seed=[config.seed, _INIT_SEED_REF], dtype=dtype),
        "estnet_t": None,
    }
    if config.use_estnet_t:
        nets["estnet_t"] = build_estnet("T", seed=[config.seed, _INIT_SEED_T], dtype=dtype)
    return nets


def main_step(nets, image, b, guide, step_index, alpha=ALPHA_TRAIN, eps=EPS_T,
              use_estnet_t=True, use_loss_l2=True, reduction="mean"):
    """One joint forward/backward: losses, keyed gradients, intermediate maps.

    The combined loss is the step's model-consistency term plus the
    refinement term; gradients for both flow through the model inversion
    B_m = (I − R̂) ⊘ T̂ (quotient rule) and the transmission clamp
    (pass-through inside [ε, 1], zero outside) in one backward pass.
    """
    net_r, net_ref = nets["estnet_r"], nets["refnet"]
    r_hat, cache_r = forward(net_r, assemble_guided_input(image, guide))
    if use_estnet_t:
        net_t = nets["estnet_t"]
        t_raw, cache_t = forward(net_t, assemble_guided_input(image, 1.0 - guide))
        t_hat = clamp_transmission(t_raw, eps)
    else:
        t_hat = np.ones_like(image)
    b_m = invert(image, r_hat, t_hat, eps)
    refined, cache_ref = forward(net_ref, b_m)
    blend = alpha_blend(b_m, refined, alpha)

    name = select_model_loss(step_index, use_loss_l2)
    if name == "L1":
        model_val = loss_l1(b, image, r_hat, t_hat, reduction)
    else:
        model_val = loss_l2(b, image, r_hat, t_hat, reduction)
    ref_val = loss_refine(b_m, refined, b, alpha, reduction)
    losses = {"name": name, "model": model_val, "refine": ref_val, "total": model_val + ref_val}

    scale = 1.0 if reduction == "sum" else 1.0 / b.size
    dblend = 2.0 * scale * (blend - b)
    ref_grads, ref_in = backward(net_ref, cache_ref, (1.0 - alpha) * dblend)
    d_bm = alpha * dblend + ref_in["bm"]
    if name == "L1":
        d_bm = d_bm - 2.0 * scale * (b - b_m)
    d_r = -d_bm / t_hat
    if name == "L2":
        e2 = image - t_hat * b - r_hat
        d_r = d_r - 2.0 * scale * e2
    grads = {}
    r_grads, _ = backward(net_r, cache_r, d_r)
    for k, v in r_grads.items():
        grads[f"estnet_r/{k}"] = v
    if use_estnet_t:
        d_t = d_bm * (-(image - r_hat) / (t_hat * t_hat))
        if name == "L2":
            d_t = d_t - 2.0 * scale * e2 * b
        t_grads, _ = backward(net_t, cache_t, d_t * clamp_transmission_grad_mask(t_raw, eps))
        for k, v in t_grads.items():
            grads[f"estnet_t/{k}"] = v
    for k, v in ref_grads.items():
        grads[f"refnet/{k}"] = v

    maps = {"r_hat": r_hat, "t_hat": t_hat, "b_m": b_m, "refined": refined, "blend": blend}
    return losses, grads, maps


def _resolve_locnet(locnet_checkpoint):
    if isinstance(locnet_checkpoint, Network):
        return locnet_checkpoint
    if locnet_checkpoint is None:
        raise CheckpointError(
            "the joint phase needs a localization checkpoint; run phase 'locnet' first "
            "(or disable the localization guide)"
        )
    path = os.fspath(locnet_checkpoint)
    for candidate in (path, os.path.dirname(path)):
        sub = os.path.join(candidate, "locnet")
        if os.path.isfile(os.path.join(sub, "manifest.json")):
            bundle = load_bundle(candidate)
            return bundle.locnet
    raise CheckpointError(
        f"no localization checkpoint under {path!r}; run phase 'locnet' first"
    )


def train_main(dataset, locnet_checkpoint, config, out_dir=None):
    """Joint phase: freezes the localization net, trains the other three."""
    if config.phase != "main":
        raise ConfigError(f"train_main requires phase 'main', got {config.phase!r}")
    if not len(dataset):
        raise DatasetError("empty dataset")
    locnet = _resolve_locnet(locnet_checkpoint) if config.use_locnet else None
    nets = build_main_nets(config)
    rng = np.random.default_rng([config.seed, _ROLE_BATCH_MAIN])
    state = TrainState(config.lr)
    params = _keyed_params({k: v for k, v in nets.items() if k != "locnet"})
    records = []
    i = 0
    for epoch in range(config.epochs):
        state.epoch = epoch
        for _ in range(_steps_per_epoch(config, len(dataset))):
            i += 1
            batch = _sample_batch(dataset, rng, config.resolved_batch, config.patch_size, ("rain", "gt"), np.float32)
            image, b = batch["rain"], batch["gt"]
            guide = locnet_forward(locnet, image) if locnet is not None else constant_guide(image)
            losses, grads, _ = main_step(
                nets, image, b, guide, i,
                alpha=config.alpha_train,
                use_estnet_t=config.use_estnet_t,
                use_loss_l2=config.use_loss_l2,
                reduction="mean",
            )
            if not np.isfinite(losses["total"]):
                raise TrainingError(f"non-finite loss at step {i}: {losses}")
            adam_step(state, params, grads)
            for net in nets.values():
                if net is not None:
                    net._version += 1
            records.append({
                "step": i, "epoch": epoch, "loss": losses["name"], "value": losses["model"],
                "refine": losses["refine"], "total": losses["total"], "lr": state.lr,
            })
    nets_out = dict(nets)
    nets_out["locnet"] = locnet
    if out_dir is not None:
        save_bundle(out_dir, nets_out, config.to_dict(), phase="main")
        _write_log(records, os.path.join(out_dir, LOG_NAME))
    return nets_out, records
