"""Fading AWGN channel: hard-decision BPSK on bytes, or additive noise on latents."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import ConfigError

MODES = ("ideal", "bit", "feature")


@dataclass(frozen=True)
class ChannelConfig:
    mode: str = "feature"
    snr_db: float = 15.0
    h: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"channel mode must be one of {MODES}")
        if self.h < 0:
            raise ConfigError("fading coefficient h must be >= 0")


def qfunc(x: float) -> float:
    """Gaussian tail probability ``Q(x) = erfc(x / sqrt 2) / 2``."""
    return float(0.5 * erfc(x / math.sqrt(2.0)))


def ber_bpsk(snr_db: float, h: float) -> float:
    return qfunc(h * math.sqrt(2.0 * 10.0 ** (snr_db / 10.0)))


def _rng(cfg: ChannelConfig, frame_index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, frame_index])


def transmit_bits(payload: bytes, cfg: ChannelConfig, frame_index: int = 0) -> bytes:
    """Flip each bit independently with the BPSK error probability of *cfg*."""
    if cfg.mode == "ideal":
        return bytes(payload)
    if cfg.mode != "bit":
        raise ConfigError(f"transmit_bits needs bit mode, got {cfg.mode!r}")
    p = ber_bpsk(cfg.snr_db, cfg.h)
    bits = np.unpackbits(np.frombuffer(bytes(payload), dtype=np.uint8))
    flips = _rng(cfg, frame_index).random(bits.size) < p
    return np.packbits(bits ^ flips).tobytes()


def transmit_features(y, cfg: ChannelConfig, frame_index: int = 0) -> np.ndarray:
    """``(h*y + n) / h`` with noise power set by the empirical power of *y*."""
    y = np.asarray(y, dtype=np.float64)
    if cfg.mode == "ideal":
        return y.copy()
    if cfg.mode != "feature":
        raise ConfigError(f"transmit_features needs feature mode, got {cfg.mode!r}")
    if cfg.h == 0:
        raise ConfigError("feature mode cannot equalise a zero fading coefficient")
    power = float(np.mean(y ** 2)) if y.size else 0.0
    sigma = math.sqrt(cfg.h ** 2 * power / 10.0 ** (cfg.snr_db / 10.0))
    noise = _rng(cfg, frame_index).standard_normal(y.shape) * sigma
    return (cfg.h * y + noise) / cfg.h


def packet_drops(count: int, loss: float, seed: int, stream: int = 0) -> np.ndarray:
    """Boolean drop decision per packet, independent with probability *loss*."""
    if not 0.0 <= loss <= 1.0:
        raise ConfigError("packet loss probability must lie in [0, 1]")
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, stream, 0x4C4F5353])
    return rng.random(count) < loss
