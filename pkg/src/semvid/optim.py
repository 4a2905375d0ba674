"""Adam updates and the rate-distortion tuner for the coder parameters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .cve import (DECAY, CoderParams, block_gradient, default_params, extract_context,
                  latent_coefficients, soft_code_length)
from .entropy import SCALE_MIN
from .errors import ConfigError
from .moe import SegmenterConfig, compose_foreground, estimate_alpha, moe_loss
from .motion import MotionConfig, estimate_flow


@dataclass
class AdamState:
    step: int = 0
    e: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-4

    @classmethod
    def fresh(cls, n: int, **kw) -> "AdamState":
        return cls(e=np.zeros(n), s=np.zeros(n), **kw)


def adam_step(params, grads, st: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new parameters and a new state."""
    theta = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if theta.shape != g.shape:
        raise ValueError(f"parameter length {theta.shape} differs from gradient {g.shape}")
    e = st.e if st.e.size else np.zeros_like(theta)
    s = st.s if st.s.size else np.zeros_like(theta)
    if e.shape != theta.shape or s.shape != theta.shape:
        raise ValueError("Adam moments do not match the parameter vector")
    t = st.step + 1
    e = st.beta1 * e + (1.0 - st.beta1) * g
    s = st.beta2 * s + (1.0 - st.beta2) * g * g
    e_hat = e / (1.0 - st.beta1 ** t)
    s_hat = s / (1.0 - st.beta2 ** t)
    theta = theta - st.learning_rate * e_hat / (np.sqrt(s_hat) + st.epsilon)
    return theta, replace(st, step=t, e=e, s=s)


def finite_diff_grad(objective: Callable[[np.ndarray], float], params, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    theta = np.asarray(params, dtype=np.float64)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        d = np.zeros_like(theta)
        d[i] = h
        g[i] = (objective(theta + d) - objective(theta - d)) / (2.0 * h)
    return g


# ---------------------------------------------------------------------------
# segmenter stage

DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.02, 0.41, 0.02), 2))


def segmenter_loss(frames, masks, cfg: SegmenterConfig) -> float:
    """Mean matting loss of *cfg*'s masks against ground truth over a sequence."""
    total, prev, prev_star = 0.0, None, None
    for v, m in zip(frames, masks):
        a = estimate_alpha(v, cfg, m)
        m = np.asarray(m, dtype=np.float64)
        if prev is None:
            prev, prev_star = a, m
        total += moe_loss(a, m, prev, prev_star)
        prev, prev_star = a, m
    return total / max(len(frames), 1)


def tune_segmenter(sequences, masks, base: SegmenterConfig,
                   thresholds=DEFAULT_THRESHOLDS, references=None) -> tuple[SegmenterConfig, dict]:
    """Grid search over the segmenter threshold; lowest mean matting loss wins.

    *references*, when given, supplies one reference background per sequence
    in place of the one in *base*.  Ties keep the smallest threshold.  Returns
    the chosen config and the loss at every grid point.
    """
    if base.method == "oracle":
        raise ConfigError("the oracle segmenter has no threshold to tune")
    if not thresholds:
        raise ConfigError("threshold grid must be non-empty")
    losses = {}
    for th in thresholds:
        cfg = replace(base, threshold=float(th))
        per_seq = []
        for i, (f, m) in enumerate(zip(sequences, masks)):
            c = cfg if references is None else replace(cfg, reference_background=references[i])
            per_seq.append(segmenter_loss(f, m, c))
        losses[float(th)] = float(np.mean(per_seq))
    best = min(losses, key=lambda k: (losses[k], k))
    return replace(base, threshold=best), losses


# ---------------------------------------------------------------------------
# coder stage

@dataclass
class _FrameStats:
    kept: np.ndarray        # (gh, gw, 96) real coefficients
    grad: np.ndarray        # (gh, gw) context gradient
    trunc_energy: float     # energy of the dropped coefficients
    pixels: int


def training_stats(sequences, masks=None, motion: MotionConfig = MotionConfig()) -> list[_FrameStats]:
    """Open-loop coefficients of every frame against its (uncoded) predecessor.

    *masks*, when given, parallels *sequences* and is applied with the
    foreground compositing step before the transform.
    """
    out = []
    for i, seq in enumerate(sequences):
        prev = None
        for t, v in enumerate(seq):
            x = v if masks is None else compose_foreground(v, masks[i][t])
            if prev is None:
                z = np.ones_like(x)
            else:
                z = extract_context(prev, estimate_flow(x, prev, motion))
            kept, dropped = latent_coefficients(x, z)
            out.append(_FrameStats(kept, block_gradient(z), float((dropped ** 2).sum()),
                                   x.shape[0] * x.shape[1]))
            prev = x
    return out


def theta_of(p: CoderParams) -> np.ndarray:
    return np.array([math.log(p.q_step), p.scale_a, p.scale_c])


def params_of(theta, lambda_id: int) -> CoderParams:
    return CoderParams(q_step=float(math.exp(theta[0])), scale_a=float(theta[1]),
                       scale_c=float(theta[2]), lambda_id=lambda_id)


def _project(theta: np.ndarray) -> np.ndarray:
    # Keep the scale model positive so every scale lands on a valid bin.
    theta = theta.copy()
    theta[1] = max(theta[1], 0.0)
    theta[2] = max(theta[2], SCALE_MIN)
    return theta


def rd_objective(stats: Sequence[_FrameStats], lambda_id: int) -> Callable[[np.ndarray], float]:
    """Smoothed per-frame ``rate + lambda * distortion``.

    Rate is the soft code length in bits per pixel and distortion is an MSE
    proxy: dropped-coefficient energy plus ``min(q^2/12, c^2)`` per kept
    coefficient (a coefficient below half a step is zeroed outright).
    """
    decay = np.tile(DECAY, 3)

    def f(theta) -> float:
        q = math.exp(theta[0])
        a, c = theta[1], theta[2]
        total = 0.0
        for st in stats:
            scales = (a * st.grad + c)[:, :, None] * decay
            rate = soft_code_length(st.kept, scales, q) / st.pixels
            qerr = np.minimum(q * q / 12.0, st.kept ** 2).sum()
            mse = (st.trunc_energy + qerr) / (st.pixels * 3)
            total += rate + lambda_id * mse
        return total / len(stats)
    return f


@dataclass
class TuneResult:
    params: CoderParams
    objective: float
    initial_objective: float
    history: list


def tune(stats: Sequence[_FrameStats], lambda_id: int, *, iterations: int = 400,
         learning_rate: float = 0.2, fd_step: float = 1e-3,
         initial: CoderParams | None = None) -> TuneResult:
    """Adam on finite-difference gradients; returns the best parameters seen."""
    if lambda_id not in (256, 512, 1024, 2048):
        raise ConfigError("lambda must be one of 256, 512, 1024, 2048")
    if not stats:
        raise ConfigError("tuning needs at least one training frame")
    p0 = initial or default_params(lambda_id)
    p0 = replace(p0, lambda_id=lambda_id)
    f = rd_objective(stats, lambda_id)
    theta = theta_of(p0)
    f0 = f(theta)
    best, best_f = theta.copy(), f0
    history = [f0]
    st = AdamState.fresh(theta.size, learning_rate=learning_rate)
    for _ in range(iterations):
        g = finite_diff_grad(f, theta, fd_step)
        theta, st = adam_step(theta, g, st)
        theta = _project(theta)
        val = f(theta)
        history.append(val)
        if not math.isfinite(val) or val > 10.0 * f0:
            break
        if val < best_f:
            best, best_f = theta.copy(), val
    params = p0 if best_f >= f0 else params_of(best, lambda_id)
    return TuneResult(params, min(best_f, f0), f0, history)
