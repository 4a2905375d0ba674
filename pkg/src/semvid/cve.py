"""Contextual encoding: motion-compensated context, block-DCT latent, scale model.

The latent of an HxWx3 frame is an ``(H/16, W/16, 96)`` integer grid: each
16x16 block of the residual ``x - z`` is transformed with an orthonormal 2-D
DCT-II per colour channel and the first 32 zig-zag coefficients of each
channel are kept (latent channel ``32 * colour + zigzag_index``).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import as_frame, box_blur3, warp_bilinear
from .entropy import SCALE_MAX, SCALE_MIN, escape_bits, escape_split, scale_to_bin, table_bits
from .errors import ConfigError, DecodeError, DimensionError

BLOCK = 16
KEEP = 32
LATENT_CHANNELS = 96
LAMBDAS = (256, 512, 1024, 2048)
# Pixel-domain quantiser steps (in 8-bit levels) before tuning; a uniform pixel
# offset of 1/255 is a DC coefficient of 16/255 for an orthonormal 16x16 DCT.
_DEFAULT_LEVELS = {256: 2.0, 512: 1.4, 1024: 1.0, 2048: 0.7}
DECAY = 2.0 ** (-np.arange(KEEP) / 8.0)


@dataclass(frozen=True)
class CoderParams:
    q_step: float
    scale_a: float = 40.0
    scale_c: float = 0.6
    lambda_id: int = 1024

    def __post_init__(self):
        if not self.q_step > 0:
            raise ConfigError("q_step must be positive")
        if self.lambda_id not in LAMBDAS:
            raise ConfigError(f"lambda_id must be one of {LAMBDAS}")

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "CoderParams":
        vals = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DecodeError(f"bad parameter line {line!r}")
            k, v = (t.strip() for t in line.split("=", 1))
            vals[k] = v
        try:
            return cls(q_step=float(vals["q_step"]), scale_a=float(vals["scale_a"]),
                       scale_c=float(vals["scale_c"]), lambda_id=int(vals["lambda_id"]))
        except KeyError as e:
            raise DecodeError(f"missing parameter {e}") from None

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "CoderParams":
        return cls.from_text(Path(path).read_text())


def default_params(lambda_id: int) -> CoderParams:
    if lambda_id not in _DEFAULT_LEVELS:
        raise ConfigError(f"lambda_id must be one of {LAMBDAS}")
    return CoderParams(q_step=_DEFAULT_LEVELS[lambda_id] * BLOCK / 255.0, lambda_id=lambda_id)


def packaged_params(lambda_id: int) -> CoderParams:
    """Tuned parameters shipped with the package, falling back to the defaults."""
    path = Path(__file__).with_name("params") / f"lambda_{lambda_id}.txt"
    if path.exists():
        return CoderParams.load(path)
    return default_params(lambda_id)


@lru_cache(maxsize=None)
def dct_matrix(n: int = BLOCK) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    return d


@lru_cache(maxsize=None)
def zigzag(n: int = BLOCK) -> np.ndarray:
    """Flat indices of an n x n block in JPEG zig-zag order."""
    def key(ij):
        i, j = ij
        s = i + j
        return (s, j if s % 2 == 0 else i)
    order = sorted(((i, j) for i in range(n) for j in range(n)), key=key)
    return np.array([i * n + j for i, j in order])


def _check_latent_dims(f: np.ndarray) -> None:
    h, w = f.shape[:2]
    if h % BLOCK or w % BLOCK:
        raise DimensionError(f"frame {h}x{w} not divisible by {BLOCK}")


def extract_context(x_prev_hat, m_t) -> np.ndarray:
    """Warp the previous reconstruction along the motion and smooth it once (3x3 box)."""
    return np.clip(box_blur3(warp_bilinear(x_prev_hat, m_t)), 0.0, 1.0)


def _blocks(f: np.ndarray) -> np.ndarray:
    h, w, c = f.shape
    return f.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK, c).transpose(0, 2, 4, 1, 3)


def _unblocks(b: np.ndarray) -> np.ndarray:
    gh, gw, c = b.shape[:3]
    return b.transpose(0, 3, 1, 4, 2).reshape(gh * BLOCK, gw * BLOCK, c)


def block_dct(f: np.ndarray) -> np.ndarray:
    """All 256 DCT coefficients per block and channel, shape (gh, gw, C, 256) in zig-zag order."""
    d = dct_matrix()
    coef = d @ _blocks(f) @ d.T
    gh, gw, c = coef.shape[:3]
    return coef.reshape(gh, gw, c, BLOCK * BLOCK)[..., zigzag()]


def latent_coefficients(x_t, z_t) -> tuple[np.ndarray, np.ndarray]:
    """Real-valued kept coefficients ``(gh, gw, 96)`` and the discarded ones."""
    x_t, z_t = as_frame(x_t), as_frame(z_t, "context")
    if x_t.shape != z_t.shape:
        raise DimensionError(f"frame {x_t.shape} and context {z_t.shape} differ")
    if x_t.shape[2] != 3:
        raise DimensionError("latent transform needs 3 colour channels")
    _check_latent_dims(x_t)
    coef = block_dct(x_t - z_t)
    gh, gw = coef.shape[:2]
    return coef[..., :KEEP].reshape(gh, gw, LATENT_CHANNELS), coef[..., KEEP:]


def latent_forward(x_t, z_t, p: CoderParams) -> np.ndarray:
    """Quantised latent symbols ``round(coefficient / q_step)``."""
    kept, _ = latent_coefficients(x_t, z_t)
    return np.rint(kept / p.q_step).astype(np.int64)


def latent_inverse(y_hat, z_t, p: CoderParams) -> np.ndarray:
    """Dequantise, zero-fill the dropped coefficients, inverse DCT, add context, clamp."""
    z_t = as_frame(z_t, "context")
    y = np.asarray(y_hat)
    _check_latent_dims(z_t)
    gh, gw = z_t.shape[0] // BLOCK, z_t.shape[1] // BLOCK
    if y.shape != (gh, gw, LATENT_CHANNELS) or z_t.shape[2] != 3:
        raise DimensionError(f"latent {y.shape} does not fit context {z_t.shape}")
    full = np.zeros((gh, gw, 3, BLOCK * BLOCK))
    full[..., zigzag()[:KEEP]] = y.reshape(gh, gw, 3, KEEP) * p.q_step
    d = dct_matrix()
    res = d.T @ full.reshape(gh, gw, 3, BLOCK, BLOCK) @ d
    return np.clip(z_t + _unblocks(res), 0.0, 1.0)


def block_gradient(z_t) -> np.ndarray:
    """Mean absolute spatial gradient of the context per 16x16 block, shape (gh, gw)."""
    z = as_frame(z_t, "context")
    _check_latent_dims(z)
    gx = np.zeros_like(z)
    gy = np.zeros_like(z)
    gx[:, :-1] = np.abs(np.diff(z, axis=1))
    gy[:-1] = np.abs(np.diff(z, axis=0))
    g = 0.5 * (gx + gy)
    h, w, _ = z.shape
    return g.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK, -1).mean(axis=(1, 3, 4))


def raw_scales(z_t, p: CoderParams) -> np.ndarray:
    """Unquantised Laplacian scales ``(a * g + c) * decay[k]``, shape (gh, gw, 96)."""
    g = block_gradient(z_t)
    base = p.scale_a * g + p.scale_c
    return base[:, :, None] * np.tile(DECAY, 3)[None, None, :]


def entropy_estimate(z_t, p: CoderParams) -> np.ndarray:
    """Scale-bin index per latent element, derived from the context only."""
    return scale_to_bin(raw_scales(z_t, p))


def estimate_code_length(y, w, escape: bool = False) -> float:
    """Shannon length in bits of latent *y* under scale bins *w*.

    With ``escape=True`` out-of-alphabet symbols are clamped and their
    Exp-Golomb side-channel bits are added.
    """
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    if y.size != w.size:
        raise DimensionError(f"latent has {y.size} elements, scale field {w.size}")
    if not escape:
        return table_bits(y, w)
    clamped, overflow = escape_split(y.ravel())
    return table_bits(clamped, w) + escape_bits(overflow)


def soft_code_length(coef, scales, q_step: float) -> float:
    """Smooth surrogate of the code length for gradient-based tuning.

    Uses unrounded symbols ``coef / q_step`` and unquantised scales, so the
    result varies continuously with the coder parameters.
    """
    u = np.abs(np.asarray(coef) / q_step)
    b = np.clip(scales, SCALE_MIN, SCALE_MAX)
    # Laplacian mass of [u - 0.5, u + 0.5] (the |u| < 0.5 case straddles zero).
    lo = np.maximum(u - 0.5, 0.0)
    ui = np.minimum(u, 0.5)
    mass = np.where(u < 0.5,
                    1.0 - 0.5 * np.exp(-(0.5 + ui) / b) - 0.5 * np.exp(-(0.5 - ui) / b),
                    0.5 * (np.exp(-lo / b) - np.exp(-(u + 0.5) / b)))
    return float(-np.log2(np.maximum(mass, 2.0 ** -16)).sum())


def with_q_step(p: CoderParams, q_step: float) -> CoderParams:
    return replace(p, q_step=float(q_step))


def log_q(p: CoderParams) -> float:
    return math.log(p.q_step)
