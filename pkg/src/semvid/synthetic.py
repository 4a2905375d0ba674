"""Deterministic synthetic video used by the tests, the tuner and the CLI demos."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


def smooth_texture(height: int, width: int, channels: int = 3, sigma: float = 3.0,
                   seed: int = 0, lo: float = 0.15, hi: float = 0.85) -> np.ndarray:
    """Gaussian-filtered noise rescaled per channel to ``[lo, hi]``."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width, channels))
    tex = ndimage.gaussian_filter(noise, sigma=(sigma, sigma, 0), mode="wrap")
    mn = tex.min(axis=(0, 1), keepdims=True)
    mx = tex.max(axis=(0, 1), keepdims=True)
    return lo + (hi - lo) * (tex - mn) / (mx - mn)


def translate(f: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer translation with wrap-around: ``out(p) = f(p + (dx, dy))``."""
    return np.roll(f, shift=(-dy, -dx), axis=(0, 1))


@dataclass
class SyntheticClip:
    frames: list
    masks: list
    background: np.ndarray


def moving_object_clip(frames: int = 10, height: int = 176, width: int = 176, *,
                       radius: int = 36, velocity=(3, 1), seed: int = 0,
                       channels: int = 3, background_sigma: float = 4.0) -> SyntheticClip:
    """A textured disk gliding over a static textured background.

    The disk covers ``pi * radius**2`` pixels (about 13% of a 176x176 frame at
    the default radius) and bounces inside the frame.
    """
    bg = smooth_texture(height, width, channels, sigma=background_sigma, seed=seed, lo=0.2, hi=0.7)
    fg_tex = smooth_texture(height, width, channels, sigma=3.0, seed=seed + 1, lo=0.3, hi=1.0)
    yy, xx = np.mgrid[0:height, 0:width]
    cx, cy = width / 3.0, height / 2.0
    vx, vy = velocity
    out, masks = [], []
    for _ in range(frames):
        m = ((xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2).astype(np.float64)
        # The object's texture travels with it.
        tex = translate(fg_tex, -int(round(cx - width / 3.0)), -int(round(cy - height / 2.0)))
        f = m[:, :, None] * tex + (1.0 - m[:, :, None]) * bg
        out.append(f)
        masks.append(m)
        if not radius <= cx + vx <= width - radius:
            vx = -vx
        if not radius <= cy + vy <= height - radius:
            vy = -vy
        cx += vx
        cy += vy
    return SyntheticClip(out, masks, bg)


def static_clip(frames: int = 5, height: int = 176, width: int = 176, seed: int = 0) -> SyntheticClip:
    clip = moving_object_clip(1, height, width, seed=seed)
    return SyntheticClip([clip.frames[0].copy() for _ in range(frames)],
                         [clip.masks[0].copy() for _ in range(frames)], clip.background)


def synthetic_suite(frames: int = 10, height: int = 176, width: int = 176) -> list[SyntheticClip]:
    """Two small clips with different motion, used for RD and SNR sweeps."""
    return [
        moving_object_clip(frames, height, width, velocity=(3, 1), seed=0),
        moving_object_clip(frames, height, width, radius=44, velocity=(-2, 2), seed=7),
    ]


def training_suite(frames: int = 6, height: int = 176, width: int = 176) -> list[SyntheticClip]:
    """Clips for parameter tuning, drawn from seeds disjoint from :func:`synthetic_suite`."""
    return [
        moving_object_clip(frames, height, width, velocity=(2, -1), seed=101, background_sigma=3.0),
        moving_object_clip(frames, height, width, radius=30, velocity=(-3, 2), seed=202),
        moving_object_clip(frames, height, width, radius=40, velocity=(1, 3), seed=303,
                           background_sigma=2.0),
    ]
