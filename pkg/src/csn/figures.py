"""Figure rendering for the CLI report paths (headless matplotlib)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_training_curves(records, path):
    """Loss (and validation PSNR when logged) against iteration."""
    its = [r.iteration for r in records]
    losses = [r.loss for r in records]
    vals = [(r.iteration, r.val_psnr) for r in records if r.val_psnr is not None]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(its, losses, color="tab:blue", label="training loss")
    ax.set_xlabel("iteration")
    ax.set_ylabel("L1 loss", color="tab:blue")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    if vals:
        ax2 = ax.twinx()
        ax2.plot([v[0] for v in vals], [v[1] for v in vals],
                 color="tab:orange", marker="o", markersize=3, label="validation PSNR")
        ax2.set_ylabel("validation PSNR (dB)", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_metric_chart(report, path):
    """Per-image PSNR bars with the SSIM overlaid on a second axis."""
    import math

    ids = [s.image_id for s in report.per_image]
    raw = [s.psnr_db for s in report.per_image]
    finite = [p for p in raw if math.isfinite(p)]
    cap = (max(finite) + 5.0) if finite else 100.0  # identical pairs plot at a cap
    psnrs = [p if math.isfinite(p) else cap for p in raw]
    ssims = [s.ssim for s in report.per_image]
    xs = range(len(ids))

    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(ids) + 2), 4))
    ax.bar(xs, psnrs, color="tab:blue", alpha=0.7, label="PSNR (dB)")
    if math.isfinite(report.mean_psnr_db):
        ax.axhline(report.mean_psnr_db, color="tab:blue", ls="--", lw=1,
                   label=f"mean PSNR {report.mean_psnr_db:.2f} dB")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(ids, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("PSNR (dB)", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(list(xs), ssims, color="tab:orange", marker="o", markersize=3)
    ax2.set_ylabel("SSIM", color="tab:orange")
    ax2.set_ylim(min(ssims) - 0.01, 1.0)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
