"""Flat ``name = value`` run configuration shared by the CLI subcommands."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .channel import MODES, ChannelConfig
from .codec import MOTION_PENALTY, CodecConfig
from .cve import LAMBDAS, CoderParams, default_params, packaged_params
from .errors import ConfigError
from .io import read_pnm
from .moe import METHODS, SegmenterConfig
from .motion import MotionConfig

SEED_ENV = "SEMVID_SEED"


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``name = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'name = value'")
        k, v = (t.strip() for t in line.split("=", 1))
        if not k:
            raise ConfigError(f"line {n}: empty key")
        out[k] = v
    return out


def load_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text())


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple:
    return tuple(float(t) for t in v.replace(",", " ").split())


def _ints(v: str) -> tuple:
    return tuple(int(t) for t in v.replace(",", " ").split())


def _words(v: str) -> tuple:
    return tuple(t for t in v.replace(",", " ").split())


def env_seed(default: int = 0) -> int:
    v = os.environ.get(SEED_ENV)
    if v is None or not v.strip():
        return default
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {v!r}") from None


@dataclass
class RunConfig:
    """Every configurable knob, keyed by its dotted config-file name."""
    segmenter_method: str = "oracle"
    segmenter_threshold: float = 0.1
    segmenter_morph_radius: int = 1
    segmenter_key_color: tuple = (0.0, 1.0, 0.0)
    segmenter_reference: Optional[str] = None
    motion_levels: int = 4
    motion_block_size: int = 8
    motion_search_radius: int = 4
    motion_penalty: float = MOTION_PENALTY
    lambda_id: int = 1024
    params_dir: Optional[str] = None
    q_step: Optional[float] = None
    moe: bool = True
    intra_period: int = 0
    background: Optional[str] = None
    channel_mode: str = "ideal"
    channel_snr_db: float = 15.0
    channel_h: float = 0.9
    channel_seed: Optional[int] = None
    sim_snrs: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    sim_lambdas: tuple = LAMBDAS
    sim_modes: tuple = ("feature",)
    sim_schemes: tuple = ("moe-cve", "intra")
    sim_unit: str = "bits"
    tune_iterations: int = 400
    tune_learning_rate: float = 0.2
    link_mtu: int = 1200
    link_loss: float = 0.0
    link_timeout: float = 5.0

    _PARSERS = {
        "segmenter.method": ("segmenter_method", str),
        "segmenter.threshold": ("segmenter_threshold", float),
        "segmenter.morph_radius": ("segmenter_morph_radius", int),
        "segmenter.key_color": ("segmenter_key_color", _floats),
        "segmenter.reference": ("segmenter_reference", str),
        "motion.levels": ("motion_levels", int),
        "motion.block_size": ("motion_block_size", int),
        "motion.search_radius": ("motion_search_radius", int),
        "motion.penalty": ("motion_penalty", float),
        "lambda": ("lambda_id", int),
        "params.dir": ("params_dir", str),
        "q_step": ("q_step", float),
        "moe": ("moe", _bool),
        "intra_period": ("intra_period", int),
        "background": ("background", str),
        "channel.mode": ("channel_mode", str),
        "channel.snr_db": ("channel_snr_db", float),
        "channel.h": ("channel_h", float),
        "channel.seed": ("channel_seed", int),
        "sim.snrs": ("sim_snrs", _floats),
        "sim.lambdas": ("sim_lambdas", _ints),
        "sim.modes": ("sim_modes", _words),
        "sim.schemes": ("sim_schemes", _words),
        "sim.unit": ("sim_unit", str),
        "tune.iterations": ("tune_iterations", int),
        "tune.learning_rate": ("tune_learning_rate", float),
        "link.mtu": ("link_mtu", int),
        "link.loss": ("link_loss", float),
        "link.timeout": ("link_timeout", float),
    }

    @classmethod
    def keys(cls) -> list[str]:
        return sorted(cls._PARSERS)

    def update(self, values: dict[str, str]) -> "RunConfig":
        for k, v in values.items():
            if k not in self._PARSERS:
                raise ConfigError(f"unknown config key {k!r}")
            attr, conv = self._PARSERS[k]
            try:
                setattr(self, attr, conv(v))
            except ValueError as e:
                raise ConfigError(f"bad value for {k}: {v!r} ({e})") from None
        return self

    @classmethod
    def from_file(cls, path: Optional[str]) -> "RunConfig":
        cfg = cls()
        if path:
            cfg.update(load_kv(path))
        return cfg

    def validate(self) -> "RunConfig":
        if self.segmenter_method not in METHODS:
            raise ConfigError(f"segmenter.method must be one of {METHODS}")
        if self.channel_mode not in MODES:
            raise ConfigError(f"channel.mode must be one of {MODES}")
        if self.lambda_id not in LAMBDAS:
            raise ConfigError(f"lambda must be one of {LAMBDAS}")
        for lam in self.sim_lambdas:
            if lam not in LAMBDAS:
                raise ConfigError(f"sim.lambdas entries must be in {LAMBDAS}")
        if not self.sim_snrs or not self.sim_lambdas or not self.sim_modes or not self.sim_schemes:
            raise ConfigError("simulation grids must be non-empty")
        for p in (self.segmenter_reference, self.background, self.params_dir):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"path does not exist: {p}")
        return self

    # -- builders ---------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.channel_seed if self.channel_seed is not None else env_seed()

    def params(self, lambda_id: Optional[int] = None) -> CoderParams:
        lam = self.lambda_id if lambda_id is None else lambda_id
        if self.params_dir:
            path = Path(self.params_dir) / f"lambda_{lam}.txt"
            p = CoderParams.load(path) if path.exists() else default_params(lam)
        else:
            p = packaged_params(lam)
        if self.q_step is not None:
            p = CoderParams(self.q_step, p.scale_a, p.scale_c, lam)
        return p

    def segmenter(self) -> SegmenterConfig:
        ref = read_pnm(self.segmenter_reference) if self.segmenter_reference else None
        return SegmenterConfig(self.segmenter_method, ref, self.segmenter_threshold,
                               self.segmenter_morph_radius, tuple(self.segmenter_key_color))

    def motion(self) -> MotionConfig:
        return MotionConfig(self.motion_levels, self.motion_block_size, self.motion_search_radius,
                            self.motion_penalty)

    def channel(self, snr_db: Optional[float] = None) -> ChannelConfig:
        return ChannelConfig(self.channel_mode, self.channel_snr_db if snr_db is None else snr_db,
                             self.channel_h, self.seed)

    def codec(self, lambda_id: Optional[int] = None) -> CodecConfig:
        bg = read_pnm(self.background) if self.background else None
        return CodecConfig(params=self.params(lambda_id), segmenter=self.segmenter(),
                           motion=self.motion(), channel=self.channel(), moe=self.moe,
                           intra_period=self.intra_period, background=bg)


def dump(cfg: RunConfig) -> str:
    """Config-file text reproducing *cfg*."""
    lines = []
    for key in RunConfig.keys():
        attr = RunConfig._PARSERS[key][0]
        v = getattr(cfg, attr)
        if v is None:
            continue
        if isinstance(v, tuple):
            v = ", ".join(str(t) for t in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"

