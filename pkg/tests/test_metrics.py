import numpy as np
import pytest

from semvid.errors import DimensionError
from semvid.metrics import PSNR_CAP, cbr, ms_ssim, mse, psnr
from semvid.synthetic import smooth_texture

# Values produced by tf.image.ssim_multiscale (max_val=1, default settings)
# on the fixture pairs below, frozen here so TensorFlow is not a test dependency.
TF_MS_SSIM = (0.9627019762992859, 0.4969600737094879, 0.8484991788864136)


def fixture_pairs():
    rng = np.random.default_rng(5)
    a = smooth_texture(176, 176, 3, sigma=2.0, seed=11)
    b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
    c = smooth_texture(176, 200, 3, sigma=1.0, seed=13)
    d = np.clip(c + rng.normal(0, 0.3, c.shape), 0, 1)
    e = smooth_texture(181, 203, 1, sigma=1.5, seed=14)
    f = np.clip(e * 0.8 + 0.1 + rng.normal(0, 0.1, e.shape), 0, 1)
    return [(a, b), (c, d), (e, f)]


def test_mse_examples():
    z = np.zeros((4, 4, 3))
    assert mse(z, z) == 0
    assert mse(z, np.ones_like(z)) == 1
    assert mse(z, np.full_like(z, 0.1)) == pytest.approx(0.01)
    with pytest.raises(DimensionError):
        mse(z, np.zeros((4, 5, 3)))


def test_psnr_examples():
    z = np.zeros((4, 4, 3))
    assert psnr(z, z) == PSNR_CAP == 99.0
    assert psnr(z, np.full_like(z, 0.1)) == pytest.approx(20.0)
    assert psnr(z, np.ones_like(z)) == 0.0


def test_ms_ssim_identity_and_noise():
    a = smooth_texture(176, 176, 3, seed=1)
    assert ms_ssim(a, a) == pytest.approx(1.0)
    noisy = np.clip(a + np.random.default_rng(0).normal(0, 0.2, a.shape), 0, 1)
    assert ms_ssim(a, noisy) < 1.0
    with pytest.raises(DimensionError):
        ms_ssim(np.zeros((100, 200, 3)), np.zeros((100, 200, 3)))


@pytest.mark.parametrize("i", range(3))
def test_ms_ssim_reference_values(i):
    a, b = fixture_pairs()[i]
    assert ms_ssim(a, b) == pytest.approx(TF_MS_SSIM[i], abs=1e-4)


def test_ms_ssim_live_tensorflow():
    tf = pytest.importorskip("tensorflow")
    for (a, b), ref in zip(fixture_pairs(), TF_MS_SSIM):
        live = float(tf.image.ssim_multiscale(tf.constant(a[None], tf.float32),
                                              tf.constant(b[None], tf.float32), 1.0)[0])
        assert live == pytest.approx(ref, abs=1e-5)


def test_cbr_examples():
    assert cbr([1000], 64, 64, 3) == pytest.approx(1000 / 12288)
    assert cbr([0, 0, 0], 64, 64, 3) == 0
    bits = [123.0, 4567.0, 89.0]
    assert abs(cbr(bits, 32, 48, 3) - sum(b / (32 * 48 * 3) for b in bits) / 3) < 1e-12
    with pytest.raises(ValueError):
        cbr([], 1, 1, 1)
