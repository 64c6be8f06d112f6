"""Image quality metrics (PSNR, single-scale SSIM) and evaluation reports."""

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .pipeline import derain_arrays
from .rainmodel import alpha_blend

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 1.0


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"image shapes differ: {x.shape} vs {y.shape}")
    for name, a in (("first", x), ("second", y)):
        if a.size and (a.min() < -1e-9 or a.max() > 1 + 1e-9):
            raise ValueError(f"{name} image has values outside [0, 1]")
    return x, y


def psnr(x, y):
    """10·log10(1/MSE) for unit-range images, capped at 100 dB."""
    x, y = _check_pair(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = size // 2
    offsets = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _to_gray(x):
    if x.ndim == 3:
        return x.mean(axis=2)
    if x.ndim == 2:
        return x
    raise ShapeError(f"expected (H,W) or (H,W,C) image, got shape {x.shape}")


def ssim(x, y):
    """Single-scale SSIM on the channel-mean grayscale, Gaussian 11×11 σ=1.5 windows."""
    x, y = _check_pair(x, y)
    gx = _to_gray(x)
    gy = _to_gray(y)
    h, w = gx.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    kernel = _gaussian_window()
    win = (SSIM_WINDOW, SSIM_WINDOW)
    wx = np.lib.stride_tricks.sliding_window_view(gx, win)
    wy = np.lib.stride_tricks.sliding_window_view(gy, win)
    mu_x = np.tensordot(wx, kernel, axes=2)
    mu_y = np.tensordot(wy, kernel, axes=2)
    ex2 = np.tensordot(wx * wx, kernel, axes=2)
    ey2 = np.tensordot(wy * wy, kernel, axes=2)
    exy = np.tensordot(wx * wy, kernel, axes=2)
    var_x = ex2 - mu_x ** 2
    var_y = ey2 - mu_y ** 2
    cov = exy - mu_x * mu_y
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM rows for one blend constant, plus their means."""

    alpha: float
    rows: list = field(default_factory=list)  # dicts: id, psnr, ssim

    @property
    def mean_psnr(self):
        return float(np.mean([r["psnr"] for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_ssim(self):
        return float(np.mean([r["ssim"] for r in self.rows])) if self.rows else float("nan")

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "images": self.rows,
        }


def evaluate_triples(bundle, triples, alphas):
    """Derain each sample once, blend per α, and score against ground truth."""
    reports = [MetricReport(alpha=float(a)) for a in alphas]
    for triple in triples:
        maps = derain_arrays(bundle, triple.rain)
        for report in reports:
            blend = np.clip(alpha_blend(maps["b_m"], maps["refined"], report.alpha), 0.0, 1.0)
            report.rows.append({
                "id": triple.sample_id,
                "psnr": psnr(blend, np.asarray(triple.gt, dtype=np.float64)),
                "ssim": ssim(blend, np.asarray(triple.gt, dtype=np.float64)),
            })
    return reports


def write_reports(reports, out_dir):
    """Emit report.json and flat report.csv (id, psnr, ssim, alpha)."""
    os.makedirs(out_dir, exist_ok=True)
    doc = {"reports": [r.to_dict() for r in reports]}
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "psnr", "ssim", "alpha"])
        for report in reports:
            for row in report.rows:
                writer.writerow([row["id"], repr(row["psnr"]), repr(row["ssim"]), repr(report.alpha)])
    return json_path, csv_path
