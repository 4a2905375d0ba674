import numpy as np
import pytest

from semvid.cve import CoderParams, default_params
from semvid.errors import ConfigError
from semvid.moe import SegmenterConfig
from semvid.motion import MotionConfig
from semvid.optim import (AdamState, adam_step, finite_diff_grad, rd_objective, theta_of,
                          training_stats, tune, tune_segmenter)
from semvid.synthetic import moving_object_clip


@pytest.fixture(scope="module")
def stats():
    clips = [moving_object_clip(3, 64, 64, radius=14, seed=s, background_sigma=2.0) for s in (21, 22)]
    return training_stats([c.frames for c in clips], [c.masks for c in clips], MotionConfig(3, 8, 4))


def test_adam_zero_gradient():
    th, st = adam_step(np.array([0.3, -2.0]), np.zeros(2), AdamState.fresh(2))
    assert np.array_equal(th, [0.3, -2.0]) and st.step == 1


def test_adam_first_step():
    th, st = adam_step(np.zeros(1), np.ones(1), AdamState.fresh(1))
    assert th[0] == pytest.approx(-1e-4 / (1 + 1e-8), abs=1e-16)


@pytest.mark.parametrize("g", [-3.0, 0.5, 7.0])
def test_adam_bias_correction_at_t1(g):
    _, st = adam_step(np.zeros(1), np.array([g]), AdamState.fresh(1))
    assert st.e[0] / (1 - st.beta1) == pytest.approx(g, rel=1e-12)
    assert st.s[0] / (1 - st.beta2) == pytest.approx(g * g, rel=1e-12)


def test_adam_length_mismatch():
    with pytest.raises(ValueError):
        adam_step(np.zeros(2), np.zeros(3), AdamState.fresh(2))


def test_finite_diff_examples():
    assert finite_diff_grad(lambda t: t[0] ** 2, [3.0])[0] == pytest.approx(6, abs=1e-6)
    assert np.all(finite_diff_grad(lambda t: 4.0, [1.0, 2.0]) == 0)
    th = np.array([0.5, -1.0, 2.0])
    assert np.allclose(finite_diff_grad(lambda t: float((t ** 2).sum()), th), 2 * th, atol=1e-6)
    with pytest.raises(ValueError):
        finite_diff_grad(lambda t: 0.0, [1.0], h=0)


def test_tune_zero_iterations(stats):
    p0 = default_params(1024)
    assert tune(stats, 1024, iterations=0).params == p0


def test_tune_improves_and_is_deterministic(stats):
    a = tune(stats, 1024, iterations=40)
    b = tune(stats, 1024, iterations=40)
    assert a.params == b.params
    assert a.objective <= a.initial_objective
    assert rd_objective(stats, 1024)(theta_of(a.params)) == pytest.approx(a.objective)


def test_tune_lambda_direction(stats):
    lo = tune(stats, 256, iterations=60).params
    hi = tune(stats, 2048, iterations=60).params
    assert hi.q_step <= lo.q_step


def test_tune_constant_residual_toy():
    # One flat frame against a white context: a single DC coefficient per block.
    f = [np.full((32, 32, 3), 0.4)]
    st = training_stats([f])
    start = CoderParams(0.5, 0.0, 2.0, 1024)
    res = tune(st, 1024, iterations=50, initial=start)
    assert res.objective < res.initial_objective


def test_tune_rejects_bad_input(stats):
    with pytest.raises(ConfigError):
        tune(stats, 300)
    with pytest.raises(ConfigError):
        tune([], 1024)


def test_segmenter_grid_search():
    clip = moving_object_clip(3, 64, 64, radius=14, seed=4)
    noisy = [np.clip(f + np.random.default_rng(t).normal(0, 0.03, f.shape), 0, 1)
             for t, f in enumerate(clip.frames)]
    base = SegmenterConfig("background_diff", clip.background, morph_radius=0)
    best, losses = tune_segmenter([noisy], [clip.masks], base, thresholds=(0.01, 0.05, 0.1, 0.3))
    assert losses[best.threshold] == min(losses.values())
    # Too low a threshold picks up the noise, too high misses the object.
    assert best.threshold in (0.05, 0.1)
    with pytest.raises(ConfigError):
        tune_segmenter([noisy], [clip.masks], SegmenterConfig("oracle"))
