import numpy as np
import pytest

from semvid.errors import ConfigError, DimensionError
from semvid.moe import (SegmenterConfig, compose_foreground, estimate_alpha, extract_background,
                        extract_background_masked, laplacian_loss, moe_loss, reconstruct_frame)
from semvid.synthetic import smooth_texture

from oracles import ref_lap_loss, ref_moe_loss


def test_background_diff_examples():
    ref = smooth_texture(32, 32, 3, seed=1)
    cfg = SegmenterConfig("background_diff", ref, threshold=0.1, morph_radius=0)
    assert not estimate_alpha(ref, cfg).any()
    v = ref.copy()
    v[5:15, 8:18] = 1.0 - v[5:15, 8:18]
    expected = np.zeros((32, 32))
    expected[5:15, 8:18] = np.abs(v - ref).mean(axis=2)[5:15, 8:18] > 0.1
    assert np.array_equal(estimate_alpha(v, cfg), expected)


def test_oracle_pass_through(rng):
    m = rng.random((8, 8))
    assert np.array_equal(estimate_alpha(np.zeros((8, 8, 3)), SegmenterConfig("oracle"), m), m)
    with pytest.raises(ConfigError):
        estimate_alpha(np.zeros((8, 8, 3)), SegmenterConfig("oracle"))
    with pytest.raises(ConfigError):
        SegmenterConfig("background_diff")


def test_chroma_key():
    v = np.zeros((4, 4, 3)); v[..., 1] = 1.0
    v[0, 0] = (1.0, 0.0, 0.0)
    a = estimate_alpha(v, SegmenterConfig("chroma_key"))
    assert a[0, 0] == 1 and a.sum() == 1


def test_compose_foreground_examples():
    v = np.full((4, 4, 3), 0.2)
    assert np.array_equal(compose_foreground(v, np.ones((4, 4))), v)
    assert np.all(compose_foreground(v, np.zeros((4, 4))) == 1.0)
    assert np.allclose(compose_foreground(v, np.full((4, 4), 0.5)), 0.6)


def test_background_variants():
    ones = np.ones((4, 4, 3))
    assert np.all(extract_background(ones, compose_foreground(ones, np.zeros((4, 4)))) == 0)
    v = np.full((4, 4, 3), 0.8)
    assert np.all(extract_background(v, compose_foreground(v, np.ones((4, 4)))) == 0)
    x = compose_foreground(v, np.zeros((4, 4)))
    assert np.all(extract_background(v, x) == 0)
    assert np.allclose(extract_background_masked(v, np.zeros((4, 4))), 0.8)


def test_reconstruct_examples():
    x, b = np.ones((4, 4, 3)), np.zeros((4, 4, 3))
    assert np.array_equal(reconstruct_frame(x, np.ones((4, 4)), b), x)
    assert np.array_equal(reconstruct_frame(x, np.zeros((4, 4)), b), b)
    assert np.allclose(reconstruct_frame(x, np.full((4, 4), 0.25), b), 0.25)
    with pytest.raises(DimensionError):
        reconstruct_frame(x, np.ones((4, 5)), b)


def test_laplacian_loss_examples(rng):
    a = rng.random((32, 32))
    assert laplacian_loss(a, a) == 0
    # Constants: only the 2x2 coarsest level differs, weight 16/5.
    assert laplacian_loss(np.zeros((32, 32)), np.ones((32, 32))) == pytest.approx(16 / 5 * 4)
    a, b = rng.random((16, 16)), rng.random((16, 16))
    assert laplacian_loss(a, b) == pytest.approx(ref_lap_loss(a, b), abs=1e-9)


def test_moe_loss_examples(rng):
    a, ap = rng.random((16, 16)), rng.random((16, 16))
    assert moe_loss(a, a, ap, ap) == 0
    sp = ap.copy(); sp[3, 4] += 0.3
    assert moe_loss(a, a, ap, sp) == pytest.approx(5 * 0.3)
    q = [rng.random((32, 32)) for _ in range(4)]
    assert moe_loss(*q) == pytest.approx(ref_moe_loss(*q), abs=1e-9)
