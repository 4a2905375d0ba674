"""Foreground-aware contextual video coding with an rANS entropy coder and a noisy-channel simulator."""
from .channel import ChannelConfig, ber_bpsk, qfunc, transmit_bits, transmit_features
from .codec import (Bitstream, CodecConfig, decode_alpha, decode_stream, encode_alpha,
                    encode_stream)
from .core import (downsample2x, gaussian_pyramid, laplacian_pyramid, upsample2x,
                   warp_bilinear)
from .cve import CoderParams, default_params, packaged_params
from .errors import ConfigError, DecodeError, DimensionError, SemvidError
from .metrics import cbr, ms_ssim, mse, psnr
from .moe import SegmenterConfig, compose_foreground, estimate_alpha, reconstruct_frame
from .motion import MotionConfig, estimate_flow
from .simulate import Report, simulate

__version__ = "0.1.0"
