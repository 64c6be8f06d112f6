"""Matplotlib renderings that accompany the delimited/JSON outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_eval_figure(reports, path):
    """Mean PSNR and SSIM as functions of the blend constant α."""
    alphas = [r.alpha for r in reports]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(alphas, [r.mean_psnr for r in reports], "o-")
    ax1.set_xlabel("α")
    ax1.set_ylabel("mean PSNR (dB)")
    ax1.grid(True, alpha=0.3)
    ax2.plot(alphas, [r.mean_ssim for r in reports], "s-", color="tab:orange")
    ax2.set_xlabel("α")
    ax2.set_ylabel("mean SSIM")
    ax2.grid(True, alpha=0.3)
    fig.suptitle("Quality vs blend constant")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_loss_curve(records, path):
    """Per-step training losses, one series per loss name."""
    fig, ax = plt.subplots(figsize=(7, 4))
    names = sorted({rec["loss"] for rec in records})
    for name in names:
        steps = [rec["step"] for rec in records if rec["loss"] == name]
        values = [rec["value"] for rec in records if rec["loss"] == name]
        ax.plot(steps, values, ".", markersize=3, label=name)
    if any(rec.get("total") is not None for rec in records):
        totals = [(rec["step"], rec["total"]) for rec in records if rec.get("total") is not None]
        ax.plot([s for s, _ in totals], [v for _, v in totals], "-", linewidth=0.8,
                color="black", alpha=0.5, label="total")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_maps_panel(image, maps, path):
    """Diagnostic grid: input, streak map, transmission, rain layer, recovery, refinement."""
    panels = [
        ("input", image, None),
        ("streak map", maps["loc"], "magma"),
        ("transmission", maps["t_hat"], "viridis"),
        ("rain layer", maps["r_hat"], None),
        ("model estimate", maps["b_m"], None),
        ("refined", maps["refined"], None),
    ]
    fig, axes = plt.subplots(2, 3, figsize=(11, 7))
    for ax, (title, arr, cmap) in zip(axes.ravel(), panels):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        ax.imshow(np.clip(arr, 0.0, 1.0), cmap=cmap, vmin=0.0, vmax=1.0)
        ax.set_title(title, fontsize=10)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
