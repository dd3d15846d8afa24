"""Low-resolution image synthesis from high-resolution slices.

Two degradations: bicubic downsampling (BD) and truncation of the centered
2-D Fourier spectrum (TD), the latter mimicking an MR acquisition with fewer
encoding lines. Zero-fill recovery embeds a truncated spectrum back into a
full-size grid, which is where Gibbs ringing shows up.

Intensity convention: TD output is scaled by 1/r^2 (and zero-fill recovery
by r^2) so a constant image keeps its value through the whole pipeline.
"""

from __future__ import annotations

import numpy as np

from . import ops


def _check_image(img, name="image"):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"{name} must be 2-D (H, W), got shape {img.shape}")
    return img


def _check_divisible(img, r):
    h, w = img.shape
    if r < 1 or h % r or w % r:
        raise ValueError(f"image size {(h, w)} not divisible by scale {r}")


def dft2(img) -> np.ndarray:
    """Unnormalized forward DFT, shifted so DC sits at (H//2, W//2)."""
    img = _check_image(img)
    return np.fft.fftshift(np.fft.fft2(img))


def idft2(spectrum) -> np.ndarray:
    """Inverse of dft2 (1/(H*W) normalization); returns a complex image."""
    spectrum = np.asarray(spectrum)
    if spectrum.ndim != 2:
        raise ValueError(f"spectrum must be 2-D, got shape {spectrum.shape}")
    return np.fft.ifft2(np.fft.ifftshift(spectrum))


def _center_slices(big_h, big_w, small_h, small_w):
    lo_h = big_h // 2 - small_h // 2
    lo_w = big_w // 2 - small_w // 2
    return slice(lo_h, lo_h + small_h), slice(lo_w, lo_w + small_w)


def degrade_bd(hr, r: int) -> np.ndarray:
    """Bicubic downsampling to (H/r, W/r)."""
    hr = _check_image(hr)
    _check_divisible(hr, r)
    h, w = hr.shape
    return ops.bicubic_resize(hr[None, None], h // r, w // r)[0, 0]


def degrade_td_complex(hr, r: int) -> np.ndarray:
    """k-space truncation before the magnitude step; linear in the input."""
    hr = _check_image(hr)
    _check_divisible(hr, r)
    h, w = hr.shape
    sh, sw = _center_slices(h, w, h // r, w // r)
    kept = dft2(hr)[sh, sw]
    return idft2(kept) / (r * r)


def degrade_td(hr, r: int) -> np.ndarray:
    """k-space truncation degradation: keep the central (H/r, W/r) block of
    the centered spectrum, inverse-transform, take the magnitude."""
    return np.abs(degrade_td_complex(hr, r))


def zero_fill_recover(lr, r: int) -> np.ndarray:
    """Embed the LR spectrum centrally into an r-times larger zero spectrum
    and inverse-transform; shows the Gibbs ringing a TD image hides."""
    lr = _check_image(lr)
    h, w = lr.shape
    big = np.zeros((h * r, w * r), dtype=complex)
    sh, sw = _center_slices(h * r, w * r, h, w)
    big[sh, sw] = dft2(lr)
    return np.abs(idft2(big) * (r * r))
