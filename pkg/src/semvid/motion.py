"""Coarse-to-fine block-matching motion estimation.

The flow at pyramid level k is ``M_k = P(M_{k-1}) + B_k`` where ``B_k`` is an
integer, block-constant residual found by exhaustive SAD search against the
previous frame warped by the predictor ``P``.  ``P`` is the bilinear 2x flow
upsampling followed by rounding each block's mean to an integer, so every
``M_k`` stays a block-constant integer field and warps are exact pixel copies.
``M_0`` is zero at 1/2**levels resolution and ``M_levels`` is at full resolution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_frame, gaussian_pyramid, upsample2x
from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class MotionConfig:
    levels: int = 4
    block_size: int = 8
    search_radius: int = 4
    # Encoder-only rate penalty per unit of |d|_1, in mean-absolute-difference
    # units; 0 gives the plain SAD search.
    penalty: float = 0.0

    def __post_init__(self):
        if self.levels < 1 or self.block_size < 1 or self.search_radius < 0 or self.penalty < 0:
            raise ConfigError(f"invalid motion config {self}")

    @property
    def reach(self) -> int:
        """Largest displacement (per axis) the pyramid can represent."""
        return sum(2 ** (self.levels - k) * self.search_radius for k in range(1, self.levels + 1))


def upsample_flow(m: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsampling; displacements double with the resolution."""
    return 2.0 * upsample2x(np.asarray(m, dtype=np.float64))


def _candidates(radius: int) -> list[tuple[int, int]]:
    cands = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    # Stable sort keeps row-major order among equal L1 norms.
    return sorted(cands, key=lambda d: abs(d[0]) + abs(d[1]))


def block_grid(height: int, width: int, block_size: int) -> tuple[int, int]:
    return -(-height // block_size), -(-width // block_size)


def match_blocks(cur, ref, cfg: MotionConfig, offsets=None) -> np.ndarray:
    """Integer per-block displacement, shape ``(blocks_y, blocks_x, 2)`` as (dx, dy).

    Each candidate ``d`` of block ``b`` is scored by
    ``SAD(cur_b, ref(. + offsets_b + d))`` with edge clamping, plus
    ``penalty * |d|_1`` per pixel when the config sets a rate penalty;
    *offsets* is an optional integer ``(blocks_y, blocks_x, 2)`` predictor
    (zero by default).
    """
    cur, ref = as_frame(cur), as_frame(ref)
    if cur.shape != ref.shape:
        raise DimensionError(f"block_match inputs differ: {cur.shape} vs {ref.shape}")
    h, w, _ = cur.shape
    bs, r = cfg.block_size, cfg.search_radius
    nby, nbx = block_grid(h, w, bs)
    hp, wp = nby * bs, nbx * bs
    curp = np.pad(cur, ((0, hp - h), (0, wp - w), (0, 0)), mode="edge")
    cur_blocks = curp.reshape(nby, bs, nbx, bs, -1).transpose(0, 2, 1, 3, 4)
    # Gather one (bs + 2r)^2 search window per block, clamped to the frame.
    by = np.arange(nby)[:, None, None, None] * bs
    bx = np.arange(nbx)[None, :, None, None] * bs
    wy = np.arange(bs + 2 * r)[None, None, :, None] - r
    wx = np.arange(bs + 2 * r)[None, None, None, :] - r
    if offsets is not None:
        off = np.asarray(offsets, dtype=np.int64)
        by = by + off[:, :, 1, None, None]
        bx = bx + off[:, :, 0, None, None]
    windows = ref[np.clip(by + wy, 0, h - 1), np.clip(bx + wx, 0, w - 1)]
    best = np.full((nby, nbx), np.inf)
    out = np.zeros((nby, nbx, 2), dtype=np.int64)
    for dx, dy in _candidates(r):
        shifted = windows[:, :, r + dy:r + dy + bs, r + dx:r + dx + bs]
        sad = np.abs(cur_blocks - shifted).sum(axis=(2, 3, 4))
        if cfg.penalty:
            sad = sad + cfg.penalty * (abs(dx) + abs(dy)) * cur_blocks[0, 0].size
        better = sad < best
        best[better] = sad[better]
        out[better] = (dx, dy)
    return out


def expand_blocks(grid: np.ndarray, height: int, width: int, block_size: int) -> np.ndarray:
    """Replicate a per-block field to every pixel of its block."""
    full = np.repeat(np.repeat(grid, block_size, axis=0), block_size, axis=1)
    return full[:height, :width].astype(np.float64)


def block_match(cur, ref_warped, cfg: MotionConfig) -> np.ndarray:
    """Per-pixel integer flow from exhaustive SAD block matching.

    For each block the displacement ``d`` (``|d|_inf <= search_radius``)
    minimising ``SAD(cur, ref_warped(. + d))`` wins; ties go to the smallest
    ``|d|_1`` and then to row-major candidate order.
    """
    cur = as_frame(cur)
    grid = match_blocks(cur, ref_warped, cfg)
    return expand_blocks(grid, cur.shape[0], cur.shape[1], cfg.block_size)


def predict_grid(m: np.ndarray, block_size: int) -> np.ndarray:
    """Upsample the coarser flow and snap it to one integer vector per block."""
    up = upsample_flow(m)
    h, w = up.shape[:2]
    nby, nbx = block_grid(h, w, block_size)
    padded = np.full((nby * block_size, nbx * block_size, 2), np.nan)
    padded[:h, :w] = up
    means = np.nanmean(padded.reshape(nby, block_size, nbx, block_size, 2), axis=(1, 3))
    return np.rint(means).astype(np.int64)


def _level_shapes(height: int, width: int, levels: int) -> list[tuple[int, int]]:
    # Shapes for k = 1..levels (coarse to fine).
    return [(height >> (levels - k), width >> (levels - k)) for k in range(1, levels + 1)]


def _check_dims(height: int, width: int, levels: int) -> None:
    if height % 2 ** levels or width % 2 ** levels:
        raise DimensionError(f"{height}x{width} not divisible by 2**{levels}")


def estimate_flow_residuals(x_t, x_prev, cfg: MotionConfig = MotionConfig()):
    """Run the pyramid recursion; return ``(flow, [B_1 grid, ..., B_levels grid])``."""
    x_t, x_prev = as_frame(x_t), as_frame(x_prev)
    if x_t.shape != x_prev.shape:
        raise DimensionError(f"frames differ: {x_t.shape} vs {x_prev.shape}")
    h, w, _ = x_t.shape
    _check_dims(h, w, cfg.levels)
    cur_pyr = gaussian_pyramid(x_t, cfg.levels + 1)
    prev_pyr = gaussian_pyramid(x_prev, cfg.levels + 1)
    m = np.zeros((h >> cfg.levels, w >> cfg.levels, 2))
    grids = []
    for k in range(1, cfg.levels + 1):
        idx = cfg.levels - k
        pred = predict_grid(m, cfg.block_size)
        # Scoring candidates on the unwarped level at pred + d equals matching
        # against the predictor-warped level, without pulling pixels across
        # block boundaries where the predictor changes.
        grid = match_blocks(cur_pyr[idx], prev_pyr[idx], cfg, offsets=pred)
        grids.append(grid)
        lh, lw = cur_pyr[idx].shape[:2]
        m = expand_blocks(pred + grid, lh, lw, cfg.block_size)
    return m, grids


def estimate_flow(x_t, x_prev, cfg: MotionConfig = MotionConfig()) -> np.ndarray:
    """Full-resolution motion field from *x_t* back to *x_prev*."""
    return estimate_flow_residuals(x_t, x_prev, cfg)[0]


def flow_from_residuals(grids, height: int, width: int, cfg: MotionConfig) -> np.ndarray:
    """Rebuild the flow from transmitted residual grids (decoder side)."""
    _check_dims(height, width, cfg.levels)
    m = np.zeros((height >> cfg.levels, width >> cfg.levels, 2))
    for k, grid in enumerate(grids, start=1):
        pred = predict_grid(m, cfg.block_size)
        lh, lw = height >> (cfg.levels - k), width >> (cfg.levels - k)
        m = expand_blocks(pred + grid, lh, lw, cfg.block_size)
    return m


def residual_grid_shapes(height: int, width: int, cfg: MotionConfig) -> list[tuple[int, int]]:
    return [block_grid(h, w, cfg.block_size) for h, w in _level_shapes(height, width, cfg.levels)]


def pack_residuals(grids) -> np.ndarray:
    """Flatten residual grids into one integer symbol vector."""
    if not grids:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.asarray(g, dtype=np.int64).ravel() for g in grids])


def unpack_residuals(symbols, height: int, width: int, cfg: MotionConfig) -> list[np.ndarray]:
    grids, pos = [], 0
    for by, bx in residual_grid_shapes(height, width, cfg):
        n = by * bx * 2
        grids.append(np.asarray(symbols[pos:pos + n], dtype=np.int64).reshape(by, bx, 2))
        pos += n
    return grids


def residual_symbol_count(height: int, width: int, cfg: MotionConfig) -> int:
    return sum(by * bx * 2 for by, bx in residual_grid_shapes(height, width, cfg))
