"""Desk-scale synthetic training/testing triples (rainy image, clean image, streak location map).

Rain streaks are rasterized as oriented line segments (no anti-aliasing,
so the location-threshold oracle is exact when blur_sigma = 0) and then
Gaussian-blurred. The haze transmission map is a smoothed random field
squashed into [1 - haze_strength, 1]. Ground-truth location maps are
derived from the raster *before* blurring, since blur makes streak
boundaries ambiguous.

Generation is a pure function of (background, params): identical seeds
give bit-identical arrays.
"""

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import images
from .errors import ConfigError, DatasetError
from .rainmodel import compose

# rng stream tags so the streak, haze and background draws stay independent
_ROLE_STREAKS = 0
_ROLE_HAZE = 1
_ROLE_BACKGROUND = 2


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic rain generator.

    streak_angle is the maximum deviation from vertical, in degrees; each
    streak draws its angle uniformly from [-streak_angle, streak_angle].
    location_threshold is the raster intensity above which a pixel counts
    as rain in the ground-truth location map.
    """

    streak_count: int = 30
    streak_length: int = 12
    streak_angle: float = 20.0
    streak_width: int = 1
    streak_intensity: float = 0.6
    blur_sigma: float = 0.5
    haze_strength: float = 0.5
    haze_smoothness: float = 16.0
    location_threshold: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.streak_count < 0:
            raise ConfigError("streak_count must be >= 0")
        if self.streak_length < 1 or self.streak_width < 1:
            raise ConfigError("streak_length and streak_width must be >= 1")
        if not 0.0 < self.streak_intensity <= 1.0:
            raise ConfigError("streak_intensity must be in (0, 1]")
        if self.blur_sigma < 0:
            raise ConfigError("blur_sigma must be >= 0")
        if not 0.0 <= self.haze_strength < 1.0:
            raise ConfigError("haze_strength must be in [0, 1)")
        if self.haze_smoothness <= 0:
            raise ConfigError("haze_smoothness must be > 0")
        if not 0.0 < self.location_threshold < 1.0:
            raise ConfigError("location_threshold must be in (0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown SynthParams fields: {sorted(unknown)}")
        return cls(**d)


def _rng(seed, role):
    return np.random.default_rng([seed, role])


def _check_shape(shape):
    h, w = shape
    if h % images.SPATIAL_MULTIPLE or w % images.SPATIAL_MULTIPLE:
        raise ConfigError(f"shape {shape} must be divisible by {images.SPATIAL_MULTIPLE}")
    return h, w


def synth_streak_raster(params, shape):
    """Unblurred streak raster (H, W): streak_intensity on streak pixels, 0 elsewhere.

    Streaks are drawn with integer stepping along their direction; each
    step paints streak_width pixels to the right. Geometry falling outside
    the image is clipped.
    """
    h, w = shape
    raster = np.zeros((h, w), dtype=np.float64)
    n = params.streak_count
    if n == 0:
        return raster
    rng = _rng(params.seed, _ROLE_STREAKS)
    ys0 = rng.integers(0, h, size=n)
    xs0 = rng.integers(0, w, size=n)
    angles = np.deg2rad(rng.uniform(-params.streak_angle, params.streak_angle, size=n))
    steps = np.arange(params.streak_length)
    widths = np.arange(params.streak_width)
    for y0, x0, ang in zip(ys0, xs0, angles):
        ys = y0 + np.round(steps * np.cos(ang)).astype(np.int64)
        xs = x0 + np.round(steps * np.sin(ang)).astype(np.int64)
        ys = np.repeat(ys, params.streak_width)
        xs = (xs[:, None] + widths[None, :]).ravel()
        ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        raster[ys[ok], xs[ok]] = params.streak_intensity
    return raster


def synth_streak_layer(params, shape):
    """Rain layer R (H, W, 3): the streak raster, Gaussian-blurred, replicated per channel."""
    raster = synth_streak_raster(params, shape)
    if params.blur_sigma > 0:
        # constant-mode blur only redistributes mass, so max stays <= streak_intensity
        raster = gaussian_filter(raster, sigma=params.blur_sigma, mode="constant")
    return np.repeat(raster[..., None], 3, axis=2)


def synth_transmission(params, shape):
    """Transmission map T (H, W, 3) with values in [1 - haze_strength, 1].

    Per-channel white noise is Gaussian-smoothed at scale haze_smoothness,
    normalized by the smoothing kernel's L2 norm (so the per-pixel scale is
    independent of the smoothness), mapped affinely around 0.5 and clipped
    to [0, 1]. Large smoothness values leave the field spatially
    near-constant; haze_strength = 0 gives T identically 1.
    """
    h, w = _check_shape(shape)
    if params.haze_strength == 0.0:
        return np.ones((h, w, 3), dtype=np.float64)
    rng = _rng(params.seed, _ROLE_HAZE)
    noise = rng.standard_normal((h, w, 3))
    smoothed = gaussian_filter(noise, sigma=(params.haze_smoothness, params.haze_smoothness, 0), mode="constant")
    # L2 norm of the discrete kernel = std of the smoothed unit noise at the canvas center
    delta = np.zeros((h, w), dtype=np.float64)
    delta[h // 2, w // 2] = 1.0
    kernel = gaussian_filter(delta, sigma=params.haze_smoothness, mode="constant")
    sigma_eff = float(np.sqrt((kernel**2).sum()))
    u = np.clip(0.5 + smoothed / (4.0 * sigma_eff), 0.0, 1.0)
    return 1.0 - params.haze_strength * u


def synth_background(params, shape):
    """Clean background B (H, W, 3): two scales of smoothed noise, rescaled to [0.05, 0.95]."""
    h, w = _check_shape(shape)
    rng = _rng(params.seed, _ROLE_BACKGROUND)
    coarse = gaussian_filter(rng.standard_normal((h, w, 3)), sigma=(8.0, 8.0, 0), mode="wrap")
    fine = gaussian_filter(rng.standard_normal((h, w, 3)), sigma=(2.0, 2.0, 0), mode="wrap")
    field = coarse / max(coarse.std(), 1e-12) + 0.5 * fine / max(fine.std(), 1e-12)
    lo, hi = field.min(), field.max()
    return 0.05 + 0.9 * (field - lo) / max(hi - lo, 1e-12)


def make_pair(b, params):
    """Degrade a clean image into (rainy image I, binary location map L).

    I = clamp(T * B + R); L marks pixels whose unblurred raster value
    exceeds location_threshold (channel-max, but the raster is replicated
    so all channels agree).
    """
    b = np.asarray(b, dtype=np.float64)
    shape = b.shape[:2]
    raster = synth_streak_raster(params, shape)
    r = np.repeat(raster[..., None], 3, axis=2)
    if params.blur_sigma > 0:
        r = gaussian_filter(r, sigma=(params.blur_sigma, params.blur_sigma, 0), mode="constant")
    t = synth_transmission(params, shape)
    i = compose(b, t, r, clamp_output=True)
    loc = (raster > params.location_threshold).astype(np.float64)[..., None]
    return i, loc


@dataclass
class Triple:
    """One dataset sample: ground truth, rainy input and streak location map."""

    sample_id: str
    gt: np.ndarray    # (H, W, 3) clean image
    rain: np.ndarray  # (H, W, 3) rainy image
    loc: np.ndarray   # (H, W, 1) binary map


def sample_seed(base_seed, index):
    """Stable per-sample seed derived from the dataset seed."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def generate_dataset(params, count, shape):
    """Generate `count` triples; every sample uses its own derived seed."""
    triples = []
    for idx in range(count):
        p = dataclasses.replace(params, seed=sample_seed(params.seed, idx))
        bg = synth_background(p, shape)
        rain, loc = make_pair(bg, p)
        triples.append(Triple(sample_id=f"{idx:04d}", gt=bg, rain=rain, loc=loc))
    return triples


def write_dataset(triples, root, params=None):
    """Write triples to <root>/{gt,rain,loc}/<id>.png plus manifest.json."""
    for sub in ("gt", "rain", "loc"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    ids = []
    for tr in triples:
        images.save_image(os.path.join(root, "gt", f"{tr.sample_id}.png"), tr.gt)
        images.save_image(os.path.join(root, "rain", f"{tr.sample_id}.png"), tr.rain)
        images.save_image(os.path.join(root, "loc", f"{tr.sample_id}.png"), tr.loc)
        ids.append(tr.sample_id)
    manifest = {"ids": ids}
    if params is not None:
        manifest["params"] = params.to_dict()
    with open(os.path.join(root, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)


def read_dataset(root):
    """Read triples back; returns [] for an empty/missing dataset directory."""
    manifest_path = os.path.join(root, "manifest.json")
    if not os.path.exists(manifest_path):
        return []
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    triples = []
    for sid in manifest["ids"]:
        triple = {}
        for sub, loader in (("gt", images.load_image), ("rain", images.load_image), ("loc", images.load_gray)):
            path = os.path.join(root, sub, f"{sid}.png")
            if not os.path.exists(path):
                raise DatasetError(f"sample {sid}: missing {sub} image at {path}")
            try:
                triple[sub] = loader(path)
            except Exception as exc:
                raise DatasetError(f"sample {sid}: cannot read {sub} image at {path}: {exc}") from exc
        triples.append(Triple(sample_id=sid, gt=triple["gt"], rain=triple["rain"], loc=triple["loc"]))
    return triples
