"""Reconstruction quality and rate metrics."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .core import as_frame
from .errors import DimensionError

PSNR_CAP = 99.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_K1, _K2 = 0.01, 0.03
_WIN, _SIGMA = 11, 1.5


def _pair(a, b):
    a, b = as_frame(a), as_frame(b)
    if a.shape != b.shape:
        raise DimensionError(f"frames differ in shape: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak-1 PSNR in dB, capped at 99 dB for identical frames."""
    e = mse(a, b)
    if e == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / e))


def _gaussian_window() -> np.ndarray:
    x = np.arange(_WIN) - (_WIN - 1) / 2.0
    g = np.exp(-x ** 2 / (2 * _SIGMA ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Separable 'valid' correlation over the two spatial axes.
    half = _WIN // 2
    out = correlate1d(img, g, axis=0, mode="constant")[half:img.shape[0] - half]
    out = correlate1d(out, g, axis=1, mode="constant")[:, half:img.shape[1] - half]
    return out


def _ssim_cs(a: np.ndarray, b: np.ndarray):
    g = _gaussian_window()
    c1, c2 = _K1 ** 2, _K2 ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a ** 2
    sbb = _filter_valid(b * b, g) - mu_b ** 2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    cs = (2 * sab + c2) / (saa + sbb + c2)
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    # Averaged over space, kept per channel.
    return (lum * cs).mean(axis=(0, 1)), cs.mean(axis=(0, 1))


def _avg_pool(a: np.ndarray) -> np.ndarray:
    # Odd sizes are first extended by one mirrored row/column.
    a = np.pad(a, ((0, a.shape[0] % 2), (0, a.shape[1] % 2), (0, 0)), mode="symmetric")
    h, w = a.shape[:2]
    return a.reshape(h // 2, 2, w // 2, 2, -1).mean(axis=(1, 3))


def ms_ssim(a, b) -> float:
    """Five-scale MS-SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels."""
    a, b = _pair(a, b)
    scales = len(MS_SSIM_WEIGHTS)
    if min(a.shape[:2]) < _WIN * 2 ** (scales - 1):
        raise DimensionError(f"MS-SSIM needs min(H, W) >= {_WIN * 2 ** (scales - 1)}")
    w = np.asarray(MS_SSIM_WEIGHTS)
    mcs = []
    for i in range(scales):
        ssim, cs = _ssim_cs(a, b)
        if i < scales - 1:
            mcs.append(cs)
            a, b = _avg_pool(a), _avg_pool(b)
    vals = np.maximum(np.stack(mcs + [ssim]), 0.0)
    per_channel = np.prod(vals ** w[:, None], axis=0)
    return float(np.clip(per_channel.mean(), 0.0, 1.0))


def cbr(bits, height: int, width: int, channels: int) -> float:
    """Channel bandwidth ratio: mean over frames of ``k_t / (H * W * C)``."""
    bits = list(bits)
    if not bits:
        raise ValueError("cbr needs at least one frame")
    return sum(k / (height * width * channels) for k in bits) / len(bits)
