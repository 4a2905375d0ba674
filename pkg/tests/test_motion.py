import numpy as np
import pytest

from semvid.core import warp_bilinear
from semvid.errors import ConfigError, DimensionError
from semvid.motion import (MotionConfig, block_match, estimate_flow, estimate_flow_residuals,
                           flow_from_residuals, pack_residuals, residual_symbol_count,
                           unpack_residuals, upsample_flow)
from semvid.synthetic import smooth_texture, translate


def sad_oracle(cur, ref, bs, r):
    """Brute-force per-block SAD search with the documented tie-break."""
    h, w, _ = cur.shape
    out = np.zeros((h // bs, w // bs, 2), int)
    for by in range(h // bs):
        for bx in range(w // bs):
            best = None
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    ys = np.clip(np.arange(by * bs, by * bs + bs) + dy, 0, h - 1)
                    xs = np.clip(np.arange(bx * bs, bx * bs + bs) + dx, 0, w - 1)
                    sad = np.abs(cur[by * bs:by * bs + bs, bx * bs:bx * bs + bs] - ref[np.ix_(ys, xs)]).sum()
                    key = (sad, abs(dx) + abs(dy))
                    if best is None or key < best[0]:
                        best = (key, (dx, dy))
            out[by, bx] = best[1]
    return out


def test_upsample_flow_examples():
    assert np.all(upsample_flow(np.zeros((4, 4, 2))) == 0)
    m = np.zeros((4, 4, 2)); m[..., 0] = 1
    up = upsample_flow(m)
    assert up.shape == (8, 8, 2) and np.allclose(up[..., 0], 2) and np.allclose(up[..., 1], 0)
    m = np.broadcast_to([-0.5, 0.25], (4, 4, 2))
    assert np.allclose(upsample_flow(m), [-1.0, 0.5])


def test_block_match_identity_and_flat():
    f = smooth_texture(32, 32, 3, sigma=1.5, seed=2)
    cfg = MotionConfig(1, 8, 4)
    assert np.all(block_match(f, f, cfg) == 0)
    assert np.all(block_match(np.full((32, 32, 3), 0.5), np.full((32, 32, 3), 0.5), cfg) == 0)


def test_block_match_shift_and_oracle():
    ref = smooth_texture(48, 48, 3, sigma=1.5, seed=3)
    cur = translate(ref, 2, 0)  # cur(x) = ref(x + 2)
    cfg = MotionConfig(1, 8, 4)
    flow = block_match(cur, ref, cfg)
    assert np.all(flow[8:40, 8:32, 0] == 2) and np.all(flow[8:40, 8:32, 1] == 0)
    grid = flow[::8, ::8].astype(int)
    assert np.array_equal(grid, sad_oracle(cur, ref, 8, 4))


def test_estimate_flow_identity():
    f = smooth_texture(64, 64, 3, sigma=2.0, seed=4)
    assert np.all(estimate_flow(f, f) == 0)


@pytest.mark.parametrize("dx,dy", [(4, -2), (16, 0)])
def test_estimate_flow_translation(dx, dy):
    prev = smooth_texture(128, 128, 3, sigma=3.0, seed=5)
    cur = translate(prev, dx, dy)
    flow = estimate_flow(cur, prev, MotionConfig(4, 8, 4))
    inner = flow[32:96, 32:96]
    assert np.all(np.abs(inner[..., 0] - dx) <= 0.5) and np.all(np.abs(inner[..., 1] - dy) <= 0.5)
    recon = warp_bilinear(prev, flow)
    assert np.abs(recon[32:96, 32:96] - cur[32:96, 32:96]).max() < 1e-12


def test_residuals_rebuild_flow():
    prev = smooth_texture(64, 64, 3, sigma=2.0, seed=6)
    cur = translate(prev, 3, -5)
    cfg = MotionConfig(3, 8, 3)
    flow, grids = estimate_flow_residuals(cur, prev, cfg)
    syms = pack_residuals(grids)
    assert syms.size == residual_symbol_count(64, 64, cfg)
    back = unpack_residuals(syms, 64, 64, cfg)
    assert np.array_equal(flow_from_residuals(back, 64, 64, cfg), flow)


def test_reach_and_errors():
    assert MotionConfig(4, 8, 4).reach == 60
    with pytest.raises(ConfigError):
        MotionConfig(0)
    with pytest.raises(DimensionError):
        estimate_flow(np.zeros((24, 24, 3)), np.zeros((24, 24, 3)), MotionConfig(4))
