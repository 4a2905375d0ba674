"""Major-object extraction: segmentation, compositing, background and losses."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import as_frame, check_same_shape, laplacian_pyramid
from .errors import ConfigError, DimensionError

METHODS = ("oracle", "background_diff", "chroma_key")
LAP_LEVELS = 5


@dataclass(frozen=True)
class SegmenterConfig:
    method: str = "background_diff"
    reference_background: Optional[np.ndarray] = None
    threshold: float = 0.1
    morph_radius: int = 1
    key_color: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown segmenter method {self.method!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("segmenter threshold must lie in (0, 1)")
        if self.morph_radius < 0:
            raise ConfigError("morph_radius must be >= 0")
        if self.method == "background_diff" and self.reference_background is None:
            raise ConfigError("background_diff requires a reference_background")


def _open_close(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return mask
    r = radius
    st = np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
    # Edge padding keeps regions touching the border from being eroded away.
    p = np.pad(mask, 2 * r, mode="edge")
    p = ndimage.binary_opening(p, structure=st)
    p = ndimage.binary_closing(p, structure=st)
    return p[2 * r:-2 * r, 2 * r:-2 * r]


def estimate_alpha(v, cfg: SegmenterConfig, oracle_mask=None) -> np.ndarray:
    """Per-pixel foreground coefficient for frame *v*.

    ``oracle`` returns *oracle_mask* unchanged; the two classical segmenters
    return hard {0, 1} decisions.
    """
    v = as_frame(v)
    if cfg.method == "oracle":
        if oracle_mask is None:
            raise ConfigError("oracle segmentation needs a ground-truth mask")
        m = np.asarray(oracle_mask, dtype=np.float64)
        if m.ndim == 3:
            m = m[:, :, 0]
        check_same_shape(v, m, "frame and oracle mask")
        return m
    if cfg.method == "background_diff":
        ref = as_frame(cfg.reference_background, "reference_background")
        if ref.shape != v.shape:
            raise DimensionError(f"reference background {ref.shape} vs frame {v.shape}")
        diff = np.abs(v - ref).mean(axis=2)
        hard = _open_close(diff > cfg.threshold, cfg.morph_radius)
        return hard.astype(np.float64)
    key = np.asarray(cfg.key_color, dtype=np.float64)[: v.shape[2]]
    dist = np.abs(v - key).mean(axis=2)
    return (dist > cfg.threshold).astype(np.float64)


def compose_foreground(v, alpha) -> np.ndarray:
    """Paste the foreground onto a white canvas: ``alpha*v + (1-alpha)*1``."""
    v = as_frame(v)
    a = np.asarray(alpha, dtype=np.float64)
    check_same_shape(v, a)
    a = a[:, :, None]
    return np.clip(a * v + (1.0 - a), 0.0, 1.0)


def extract_background(v, x) -> np.ndarray:
    """Literal ``v - x`` clamped to [0, 1]; negative wherever v is darker than white."""
    v, x = as_frame(v), as_frame(x)
    if v.shape != x.shape:
        raise DimensionError(f"shape mismatch {v.shape} vs {x.shape}")
    return np.clip(v - x, 0.0, 1.0)


def extract_background_masked(v, alpha) -> np.ndarray:
    """``(1 - alpha) * v``: the frame with the foreground blacked out."""
    v = as_frame(v)
    a = np.asarray(alpha, dtype=np.float64)
    check_same_shape(v, a)
    return (1.0 - a)[:, :, None] * v


def reconstruct_frame(x_hat, alpha_hat, bgr_hat) -> np.ndarray:
    x_hat, bgr_hat = as_frame(x_hat), as_frame(bgr_hat)
    a = np.asarray(alpha_hat, dtype=np.float64)
    check_same_shape(x_hat, a)
    if x_hat.shape != bgr_hat.shape:
        raise DimensionError(f"shape mismatch {x_hat.shape} vs {bgr_hat.shape}")
    a = a[:, :, None]
    return np.clip(a * x_hat + (1.0 - a) * bgr_hat, 0.0, 1.0)


def _mask2d(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[:, :, 0]
    if m.ndim != 2:
        raise DimensionError(f"mask must be HxW, got {m.shape}")
    return m


def laplacian_loss(a, b) -> float:
    """Weighted L1 distance between 5-level Laplacian pyramids (coarsest weighted 16/5)."""
    a, b = _mask2d(a), _mask2d(b)
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    pa = laplacian_pyramid(a, LAP_LEVELS)
    pb = laplacian_pyramid(b, LAP_LEVELS)
    return float(sum(2 ** i / LAP_LEVELS * np.abs(x - y).sum() for i, (x, y) in enumerate(zip(pa, pb))))


def moe_loss(a, a_star, a_prev, a_star_prev) -> float:
    """Matting loss: L1 + Laplacian + 5 x L2 of the backward temporal difference."""
    a, a_star = _mask2d(a), _mask2d(a_star)
    a_prev, a_star_prev = _mask2d(a_prev), _mask2d(a_star_prev)
    if not (a.shape == a_star.shape == a_prev.shape == a_star_prev.shape):
        raise DimensionError("all four masks must share one shape")
    temporal = (a - a_prev) - (a_star - a_star_prev)
    return float(np.abs(a - a_star).sum() + laplacian_loss(a, a_star) + 5.0 * np.sqrt((temporal ** 2).sum()))
