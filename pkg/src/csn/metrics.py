"""Image quality metrics: PSNR and SSIM.

Evaluation convention: both images are divided by the reference slice's max
intensity first, so peak = 1.0. The convention is recorded in every report.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

NORMALIZATION = "per-image HR max, peak=1.0"

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def psnr(ref, test, peak: float = 1.0) -> float:
    """
    Peak signal-to-noise ratio in dB: 10*log10(peak^2 / MSE).

    Identical images return +inf. Images are expected on [0, 1] with
    peak = 1.0.
    """
    ref = np.asarray(ref)
    test = np.asarray(test)
    if ref.shape != test.shape:
        raise ValueError(f"psnr shape mismatch: {ref.shape} vs {test.shape}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    err = np.mean((ref.astype(np.float64) - test.astype(np.float64)) ** 2)
    if err == 0.0:
        return float("inf")
    return 10.0 * math.log10(peak * peak / err)


def _gaussian_1d(n, sigma):
    x = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, win):
    # separable correlation, valid region only
    v = np.lib.stride_tricks.sliding_window_view(img, len(win), axis=0)
    v = np.tensordot(v, win, axes=([2], [0]))
    v = np.lib.stride_tricks.sliding_window_view(v, len(win), axis=1)
    return np.tensordot(v, win, axes=([2], [0]))


def ssim(ref, test) -> float:
    """
    Mean local structural similarity with an 11x11 Gaussian window
    (sigma = 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.0.

    Both images must be at least 11x11; the local map is computed over
    fully covered windows and averaged.
    """
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"ssim shape mismatch: {ref.shape} vs {test.shape}")
    if ref.ndim != 2 or min(ref.shape) < _SSIM_WINDOW:
        raise ValueError(f"ssim needs 2-D images of at least "
                         f"{_SSIM_WINDOW}x{_SSIM_WINDOW}, got {ref.shape}")
    win = _gaussian_1d(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2

    mu1 = _filter_valid(ref, win)
    mu2 = _filter_valid(test, win)
    s11 = _filter_valid(ref * ref, win) - mu1 * mu1
    s22 = _filter_valid(test * test, win) - mu2 * mu2
    s12 = _filter_valid(ref * test, win) - mu1 * mu2

    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


@dataclass
class ImageScore:
    image_id: str
    psnr_db: float
    ssim: float


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)
    mean_psnr_db: float = float("nan")
    mean_ssim: float = float("nan")
    normalization: str = NORMALIZATION


def make_report(scores, normalization: str = NORMALIZATION) -> MetricReport:
    scores = list(scores)
    if not scores:
        raise ValueError("cannot build a report from zero images")
    return MetricReport(
        per_image=scores,
        mean_psnr_db=float(np.mean([s.psnr_db for s in scores])),
        mean_ssim=float(np.mean([s.ssim for s in scores])),
        normalization=normalization,
    )


def write_csv(report: MetricReport, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# normalization: {report.normalization}\n")
        w = csv.writer(fh)
        w.writerow(["image_id", "psnr_db", "ssim"])
        for s in report.per_image:
            w.writerow([s.image_id, repr(float(s.psnr_db)), repr(float(s.ssim))])
        w.writerow(["mean", repr(float(report.mean_psnr_db)), repr(float(report.mean_ssim))])
