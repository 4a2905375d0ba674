"""Pixel-grid primitives: resampling, pyramids and backward warping.

Frames are ``float64`` arrays of shape ``(H, W, C)`` with values in [0, 1].
Alpha masks are ``(H, W)`` arrays and flow fields ``(H, W, 2)`` arrays holding
``(dx, dy)`` displacements in pixels.  Every function here is pure.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError


def as_frame(f, name: str = "frame") -> np.ndarray:
    """Return *f* as a float64 ``(H, W, C)`` array, promoting 2-D input to C=1."""
    a = np.asarray(f, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DimensionError(f"{name} must be HxWxC, got shape {a.shape}")
    return a


def check_frame(f: np.ndarray, name: str = "frame") -> None:
    """Validate the Frame invariants: finite values in [0, 1], 1 or 3 channels."""
    if f.ndim != 3 or f.shape[2] not in (1, 3):
        raise DimensionError(f"{name} must be HxWx1 or HxWx3, got {f.shape}")
    if not np.all(np.isfinite(f)) or f.min(initial=0.0) < 0.0 or f.max(initial=0.0) > 1.0:
        raise ValueError(f"{name} values must be finite and in [0, 1]")


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionError(f"{what} differ in size: {a.shape[:2]} vs {b.shape[:2]}")


def zero_flow(height: int, width: int) -> np.ndarray:
    return np.zeros((height, width, 2), dtype=np.float64)


def downsample2x(f: np.ndarray) -> np.ndarray:
    """Halve each spatial dimension by averaging 2x2 blocks."""
    a = np.asarray(f, dtype=np.float64)
    h, w = a.shape[:2]
    if h % 2 or w % 2:
        raise DimensionError(f"downsample2x needs even dimensions, got {h}x{w}")
    blocks = a.reshape(h // 2, 2, w // 2, 2, *a.shape[2:])
    return blocks.mean(axis=(1, 3))


def _upsample_axis(a: np.ndarray, axis: int) -> np.ndarray:
    # Output sample i sits at source coordinate (i + 0.5) / 2 - 0.5, i.e. the
    # two children of source pixel k lie at k - 1/4 and k + 1/4.  Neighbours
    # beyond the border are clamped.
    n = a.shape[axis]
    lo = np.take(a, np.r_[0, np.arange(n - 1)], axis=axis)
    hi = np.take(a, np.r_[np.arange(1, n), n - 1], axis=axis)
    even = 0.75 * a + 0.25 * lo
    odd = 0.75 * a + 0.25 * hi
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(a.shape)
    shape[axis] = 2 * n
    return out.reshape(shape)


def upsample2x(f: np.ndarray) -> np.ndarray:
    """Double each spatial dimension by bilinear interpolation with edge clamping."""
    a = np.asarray(f, dtype=np.float64)
    return _upsample_axis(_upsample_axis(a, 0), 1)


def warp_bilinear(f: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward warp: ``out(p) = f(p + flow(p))`` sampled bilinearly.

    Sample coordinates falling outside the frame are clamped to the border.
    """
    a = as_frame(f)
    flow = np.asarray(flow, dtype=np.float64)
    h, w = a.shape[:2]
    if flow.shape != (h, w, 2):
        raise DimensionError(f"flow shape {flow.shape} does not match frame {h}x{w}")
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = np.clip(xx + flow[..., 0], 0.0, w - 1)
    sy = np.clip(yy + flow[..., 1], 0.0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    top = a[y0, x0] * (1.0 - fx) + a[y0, x1] * fx
    bottom = a[y1, x0] * (1.0 - fx) + a[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def _check_levels(shape, levels: int) -> None:
    if levels < 1:
        raise DimensionError("levels must be >= 1")
    k = 2 ** (levels - 1)
    if shape[0] % k or shape[1] % k:
        raise DimensionError(f"{shape[0]}x{shape[1]} not divisible by {k} for {levels} levels")


def gaussian_pyramid(f: np.ndarray, levels: int) -> list[np.ndarray]:
    """``[f, down(f), down(down(f)), ...]`` with *levels* entries."""
    a = np.asarray(f, dtype=np.float64)
    _check_levels(a.shape, levels)
    pyr = [a]
    for _ in range(levels - 1):
        pyr.append(downsample2x(pyr[-1]))
    return pyr


def laplacian_pyramid(f: np.ndarray, levels: int) -> list[np.ndarray]:
    """Band-pass decomposition; the last entry is the coarsest Gaussian level."""
    g = gaussian_pyramid(f, levels)
    bands = [g[i] - upsample2x(g[i + 1]) for i in range(levels - 1)]
    bands.append(g[-1])
    return bands


def reconstruct_laplacian(bands: list[np.ndarray]) -> np.ndarray:
    """Invert :func:`laplacian_pyramid` by iterated upsample-and-add."""
    out = bands[-1]
    for band in reversed(bands[:-1]):
        out = band + upsample2x(out)
    return out


def box_blur3(f: np.ndarray) -> np.ndarray:
    """3x3 mean filter with edge-replicated borders."""
    a = np.asarray(f, dtype=np.float64)
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (a.ndim - 2)
    p = np.pad(a, pad, mode="edge")
    h, w = a.shape[:2]
    acc = np.zeros_like(a)
    for dy in range(3):
        for dx in range(3):
            acc += p[dy:dy + h, dx:dx + w]
    return acc / 9.0
