"""Bitstream format and the closed-loop encode/decode pipeline.

Per frame: segment, paste the foreground on white, estimate motion against the
previous *decoded* foreground, code the residual latent with rANS under scales
derived from the shared context, and send the alpha mask as a run-length side
channel.  The background is coded once, intra, ahead of the frames.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .bits import BitReader, BitWriter, egk_length
from .channel import ChannelConfig, MODES
from .core import as_frame, warp_bilinear
from .cve import (BLOCK, LATENT_CHANNELS, CoderParams, entropy_estimate, extract_context,
                  latent_forward, latent_inverse, packaged_params)
from .entropy import (RansDecoder, escape_bits, escape_split, rans_encode, table_bits,
                      read_escapes, scale_to_bin, write_escapes)
from .errors import ConfigError, DecodeError, DimensionError
from .moe import SegmenterConfig, compose_foreground, estimate_alpha, reconstruct_frame
from .motion import (MotionConfig, estimate_flow_residuals, flow_from_residuals, pack_residuals,
                     residual_symbol_count, unpack_residuals)

MAGIC = b"SVB1"
VERSION = 1
INTRA, INTER = 0, 1
# Motion residuals are mostly zero; they share one fixed narrow table (the
# bin with the lowest ideal cost on the synthetic training clips).
MOTION_BIN = int(scale_to_bin(0.25))

_HEADER = struct.Struct("<4sBIIBIHdddBHBBBBddQ")
_FLAG_MOE = 1


# ---------------------------------------------------------------------------
# alpha side channel

def _check_binary(a: np.ndarray) -> None:
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("alpha run-length coding needs a binary mask")


ALPHA_ORDER_BITS = 4
ALPHA_MODE_BITS = 2


def _mask(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim == 3:
        a = a[:, :, 0]
    _check_binary(a)
    return a


def _runs(alpha) -> tuple[int, np.ndarray]:
    a = _mask(alpha)
    flat = a.ravel().astype(np.int8)
    if flat.size == 0:
        return 0, np.zeros(0, dtype=np.int64)
    edges = np.flatnonzero(np.diff(flat)) + 1
    return int(flat[0]), np.diff(np.concatenate([[0], edges, [flat.size]]))


def alpha_order(runs) -> int:
    """Exp-Golomb order with the shortest code for these run lengths."""
    costs = [sum(egk_length(int(r) - 1, k) for r in runs) for k in range(1 << ALPHA_ORDER_BITS)]
    return int(np.argmin(costs)) if costs else 0


def _runs_writer(first: int, runs: np.ndarray, w: BitWriter) -> None:
    k = alpha_order(runs)
    w.write_bit(first)
    w.write_bits(k, ALPHA_ORDER_BITS)
    for run in runs:
        w.write_egk(int(run) - 1, k)


def _alpha_writer(alpha, predictions=()) -> BitWriter:
    a = _mask(alpha)
    if len(predictions) >= 1 << ALPHA_MODE_BITS:
        raise ValueError("too many mask predictions")
    candidates = [a]
    for p in predictions:
        p = _mask(p)
        if p.shape != a.shape:
            raise DimensionError(f"mask prediction {p.shape} vs {a.shape}")
        candidates.append(np.logical_xor(a, p).astype(np.float64))
    best = None
    for mode, m in enumerate(candidates):
        first, runs = _runs(m)
        w = BitWriter()
        if runs.size == 0:
            return w
        w.write_bits(mode, ALPHA_MODE_BITS)
        _runs_writer(first, runs, w)
        if best is None or len(w) < len(best):
            best = w
    return best


def encode_alpha(alpha, predictions=()) -> bytes:
    """Row-major run-length code of a binary mask.

    Layout: mode (2 bits; 0 codes the mask itself, ``i`` codes its XOR with
    ``predictions[i - 1]``), first pixel value (1 bit), Exp-Golomb order k
    (4 bits), then ``run - 1`` for every run in order-k Exp-Golomb,
    zero-padded to a byte.  The shortest mode wins; ties go to the lowest.
    """
    return _alpha_writer(alpha, predictions).getvalue()


def alpha_bit_length(alpha, predictions=()) -> int:
    """Exact number of meaningful bits in :func:`encode_alpha` output (before padding)."""
    return len(_alpha_writer(alpha, predictions))


def decode_alpha(data: bytes, height: int, width: int, predictions=()) -> np.ndarray:
    total = height * width
    out = np.empty(total, dtype=np.float64)
    if total == 0:
        return out.reshape(height, width)
    r = BitReader(data)
    mode = r.read_bits(ALPHA_MODE_BITS)
    if mode > len(predictions):
        raise DecodeError(f"mask mode {mode} needs a prediction the decoder lacks")
    value = r.read_bit()
    k = r.read_bits(ALPHA_ORDER_BITS)
    pos = 0
    while pos < total:
        run = r.read_egk(k) + 1
        if pos + run > total:
            raise DecodeError("alpha run overruns the mask")
        out[pos:pos + run] = value
        pos += run
        value ^= 1
    out = out.reshape(height, width)
    if mode:
        p = _mask(predictions[mode - 1])
        if p.shape != out.shape:
            raise DecodeError("mask prediction does not match the frame size")
        out = np.logical_xor(out, p).astype(np.float64)
    return out


# ---------------------------------------------------------------------------
# bitstream containers

@dataclass(frozen=True)
class StreamHeader:
    height: int
    width: int
    channels: int
    frames: int
    params: CoderParams
    moe: bool = True
    intra_period: int = 0
    motion: MotionConfig = MotionConfig()
    channel: ChannelConfig = ChannelConfig()

    def pack(self) -> bytes:
        p, m, c = self.params, self.motion, self.channel
        flags = _FLAG_MOE if self.moe else 0
        return _HEADER.pack(MAGIC, VERSION, self.height, self.width, self.channels, self.frames,
                            p.lambda_id, p.q_step, p.scale_a, p.scale_c, flags, self.intra_period,
                            m.levels, m.block_size, m.search_radius, MODES.index(c.mode),
                            c.snr_db, c.h, c.seed & 0xFFFFFFFFFFFFFFFF)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "StreamHeader":
        if len(data) < offset + _HEADER.size:
            raise DecodeError("stream header truncated")
        (magic, version, h, w, c, t, lam, q, a, sc, flags, period, lv, bs, rad, mode,
         snr, fade, seed) = _HEADER.unpack_from(data, offset)
        if magic != MAGIC:
            raise DecodeError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DecodeError(f"unsupported version {version}")
        if mode >= len(MODES):
            raise DecodeError("bad channel mode in header")
        try:
            return cls(h, w, c, t, CoderParams(q, a, sc, lam), bool(flags & _FLAG_MOE),
                       period, MotionConfig(lv, bs, rad),
                       ChannelConfig(MODES[mode], snr, fade, seed))
        except ConfigError as e:
            raise DecodeError(f"invalid header field: {e}") from None


HEADER_SIZE = _HEADER.size


@dataclass
class FrameRecord:
    frame_type: int
    alpha: bytes
    latent: bytes

    def pack(self) -> bytes:
        body = (struct.pack("<BI", self.frame_type, len(self.alpha)) + self.alpha
                + struct.pack("<I", len(self.latent)) + self.latent)
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def unpack(cls, data: bytes) -> "FrameRecord":
        """Parse one record; a CRC mismatch or bad length raises DecodeError."""
        if len(data) < 13:
            raise DecodeError("frame record truncated")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) != crc:
            raise DecodeError("frame record CRC mismatch")
        ftype, alen = struct.unpack_from("<BI", body)
        if ftype not in (INTRA, INTER) or 5 + alen + 4 > len(body):
            raise DecodeError("frame record malformed")
        alpha = body[5:5 + alen]
        (llen,) = struct.unpack_from("<I", body, 5 + alen)
        latent = body[9 + alen:]
        if len(latent) != llen:
            raise DecodeError("frame record malformed")
        return cls(ftype, alpha, latent)


@dataclass
class Bitstream:
    header: StreamHeader
    background: bytes
    records: list = field(default_factory=list)  # packed FrameRecord bytes

    def serialize(self) -> bytes:
        parts = [self.header.pack(), struct.pack("<I", len(self.background)), self.background]
        for r in self.records:
            parts += [struct.pack("<I", len(r)), r]
        return b"".join(parts)

    @classmethod
    def parse(cls, data: bytes) -> "Bitstream":
        header = StreamHeader.unpack(data)
        pos = HEADER_SIZE

        def chunk():
            nonlocal pos
            if pos + 4 > len(data):
                raise DecodeError("stream truncated")
            (n,) = struct.unpack_from("<I", data, pos)
            if pos + 4 + n > len(data):
                raise DecodeError("stream truncated")
            out = data[pos + 4:pos + 4 + n]
            pos += 4 + n
            return out

        background = chunk()
        records = [chunk() for _ in range(header.frames)]
        if pos != len(data):
            raise DecodeError("trailing bytes after the last frame record")
        return cls(header, background, records)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.serialize())

    @classmethod
    def load(cls, path) -> "Bitstream":
        with open(path, "rb") as fh:
            return cls.parse(fh.read())


# ---------------------------------------------------------------------------
# configuration

# Motion search rate penalty used by the encoder: about half a grey level of
# mean absolute difference per unit of displacement.
MOTION_PENALTY = 0.002

@dataclass(frozen=True)
class CodecConfig:
    """Everything the encoder needs besides the frames.

    ``moe=False`` is the diagnostic mode that codes whole frames (alpha = 1,
    no background payload).  ``intra_period = n > 0`` codes every n-th frame
    against a blank context (intra) so it decodes on its own; ``0`` makes only
    the first frame intra.  The baseline scheme is MOE off with period 1.
    """
    params: CoderParams = field(default_factory=lambda: packaged_params(1024))
    segmenter: SegmenterConfig = SegmenterConfig(method="oracle")
    motion: MotionConfig = MotionConfig(penalty=MOTION_PENALTY)
    channel: ChannelConfig = ChannelConfig(mode="ideal")
    moe: bool = True
    intra_period: int = 0
    background: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 <= self.intra_period <= 0xFFFF:
            raise ConfigError("intra_period must lie in [0, 65535]")


def _blank(shape) -> np.ndarray:
    return np.ones(shape)


def _inpaint(v: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Fill foreground pixels with the nearest background pixel."""
    hole = alpha > 0.5
    if not hole.any() or hole.all():
        return (1.0 - alpha)[:, :, None] * v if hole.all() else v.copy()
    _, (iy, ix) = ndimage.distance_transform_edt(hole, return_indices=True)
    return v[iy, ix]


def background_source(v0: np.ndarray, alpha0: np.ndarray, cfg: CodecConfig) -> np.ndarray:
    """The frame sent as the background payload."""
    if cfg.background is not None:
        return as_frame(cfg.background, "background")
    if cfg.segmenter.reference_background is not None:
        return as_frame(cfg.segmenter.reference_background, "reference_background")
    return _inpaint(v0, alpha0)


# ---------------------------------------------------------------------------
# latent payload

@dataclass
class PayloadBits:
    latent: int = 0
    motion: int = 0
    escape: int = 0
    symbols: int = 0


def _code_payload(motion_syms: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[bytes, PayloadBits]:
    clamped, overflow = escape_split(y.ravel())
    syms = np.concatenate([motion_syms, clamped])
    bins = np.concatenate([np.full(motion_syms.size, MOTION_BIN), w.ravel()])
    cw = rans_encode(syms, bins)
    # Split the realised rANS length between motion and latent by their ideal shares.
    mbits = table_bits(motion_syms, bins[:motion_syms.size])
    lbits = table_bits(clamped, bins[motion_syms.size:])
    share = mbits / (mbits + lbits) if mbits + lbits > 0 else 0.0
    motion_bits = int(round(cw.bit_length * share))
    bits = PayloadBits(cw.bit_length - motion_bits, motion_bits, escape_bits(overflow), int(syms.size))
    return cw.data + write_escapes(overflow), bits


def _decode_payload(data: bytes, n_motion: int, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dec = RansDecoder(data)
    motion = np.array(dec.decode([MOTION_BIN] * n_motion), dtype=np.int64)
    clamped = np.array(dec.decode(w.ravel().tolist()), dtype=np.int64)
    if not dec.exhausted_cleanly:
        raise DecodeError("rANS state did not return to its initial value")
    y, end = read_escapes(clamped, data, dec.position)
    if end != len(data):
        raise DecodeError("latent payload has trailing bytes")
    return motion, y.reshape(w.shape)


# ---------------------------------------------------------------------------
# encoder

@dataclass
class EncodeResult:
    bitstream: Bitstream
    foreground_recon: list   # encoder-side x_hat per frame
    recon: list              # encoder-side v_hat per frame
    bits: list               # k_t per frame
    breakdown: list          # dict of bit components per frame
    background_bits: int


def _code_intra(x: np.ndarray, p: CoderParams):
    z = _blank(x.shape)
    w = entropy_estimate(z, p)
    y = latent_forward(x, z, p)
    payload, bits = _code_payload(np.zeros(0, dtype=np.int64), y, w)
    return payload, bits, latent_inverse(y, z, p)


def _code_inter(x: np.ndarray, x_prev_hat: np.ndarray, p: CoderParams, mcfg: MotionConfig):
    flow, grids = estimate_flow_residuals(x, x_prev_hat, mcfg)
    z = extract_context(x_prev_hat, flow)
    w = entropy_estimate(z, p)
    y = latent_forward(x, z, p)
    payload, bits = _code_payload(pack_residuals(grids), y, w)
    return payload, bits, latent_inverse(y, z, p), flow


def mask_predictions(prev_alpha, flow) -> tuple:
    """Decoder-side guesses of the current mask: the previous mask as is, and
    carried along the (integer) motion field."""
    a = np.asarray(prev_alpha, dtype=np.float64)
    warped = (warp_bilinear(a[:, :, None], flow)[:, :, 0] >= 0.5).astype(np.float64)
    return a, warped


def _check_sequence(frames) -> list:
    frames = [as_frame(f) for f in frames]
    if not frames:
        raise DimensionError("cannot encode an empty sequence")
    shape = frames[0].shape
    for f in frames:
        if f.shape != shape:
            raise DimensionError("all frames must share one shape")
    h, w, c = shape
    if h % BLOCK or w % BLOCK:
        raise DimensionError(f"frame {h}x{w} not divisible by {BLOCK}")
    if c != 3:
        raise DimensionError("the codec needs 3-channel frames")
    return frames


def encode_stream(frames, cfg: CodecConfig = CodecConfig(), masks=None) -> EncodeResult:
    """Encode a sequence; *masks* feed the oracle segmenter."""
    frames = _check_sequence(frames)
    h, w, c = frames[0].shape
    p = cfg.params
    # The search penalty only steers the encoder, so it stays out of the header.
    header = StreamHeader(h, w, c, len(frames), p, cfg.moe, cfg.intra_period,
                          replace(cfg.motion, penalty=0.0), cfg.channel)

    alphas = []
    for t, v in enumerate(frames):
        if not cfg.moe:
            alphas.append(np.ones((h, w)))
            continue
        m = None if masks is None else masks[t]
        # The run-length side channel carries hard masks, so soft oracle
        # masks are binarised before they shape the coded foreground.
        alphas.append((estimate_alpha(v, cfg.segmenter, oracle_mask=m) >= 0.5).astype(np.float64))

    background, bgr_hat, background_bits = b"", np.zeros((h, w, c)), 0
    if cfg.moe:
        background, bb, bgr_hat = _code_intra(background_source(frames[0], alphas[0], cfg), p)
        background_bits = bb.latent + bb.escape

    stream = Bitstream(header, background)
    xs, vs, ks, parts = [], [], [], []
    x_prev = None
    for t, (v, a) in enumerate(zip(frames, alphas)):
        x = compose_foreground(v, a) if cfg.moe else v
        if t == 0 or (cfg.intra_period and t % cfg.intra_period == 0):
            ftype = INTRA
            payload, bits, x_hat = _code_intra(x, p)
        else:
            ftype = INTER
            payload, bits, x_hat, flow = _code_inter(x, x_prev, p, cfg.motion)
        alpha_bytes, alpha_bits = b"", 0
        if cfg.moe:
            # Inter frames may code the mask as a change from a prediction.
            preds = mask_predictions(alphas[t - 1], flow) if ftype == INTER else ()
            alpha_bytes, alpha_bits = encode_alpha(a, preds), alpha_bit_length(a, preds)
        stream.records.append(FrameRecord(ftype, alpha_bytes, payload).pack())
        k = bits.latent + bits.motion + bits.escape + alpha_bits
        part = {"latent": bits.latent, "motion": bits.motion, "escape": bits.escape,
                "alpha": alpha_bits, "background": 0, "symbols": bits.symbols}
        if t == 0:
            # The one-off background payload is charged to the first frame.
            k += background_bits
            part["background"] = background_bits
        xs.append(x_hat)
        vs.append(reconstruct_frame(x_hat, a, bgr_hat) if cfg.moe else x_hat)
        ks.append(k)
        parts.append(part)
        x_prev = x_hat
    return EncodeResult(stream, xs, vs, ks, parts, background_bits)


# ---------------------------------------------------------------------------
# decoder

LatentHook = Callable[[np.ndarray, int], np.ndarray]


def feature_hook(cfg: ChannelConfig, q_step: float) -> Optional[LatentHook]:
    """Latent corruption for feature mode: noisy dequantised values, re-quantised."""
    if cfg.mode != "feature":
        return None
    from .channel import transmit_features

    def hook(y: np.ndarray, t: int) -> np.ndarray:
        noisy = transmit_features(y * q_step, cfg, frame_index=t)
        return np.rint(noisy / q_step).astype(np.int64)
    return hook


@dataclass
class DecodeResult:
    frames: list
    foreground: list
    concealed: list


def _decode_background(data: bytes, shape, p: CoderParams) -> np.ndarray:
    z = _blank(shape)
    w = entropy_estimate(z, p)
    _, y = _decode_payload(data, 0, w)
    return latent_inverse(y, z, p)


def decode_stream(stream: Bitstream, latent_hook: Optional[LatentHook] = None) -> DecodeResult:
    """Rebuild the frames; a record failing its CRC freezes the previous output.

    With a *latent_hook* the latent symbols are perturbed after entropy
    decoding.  Entropy decoding itself keeps running on an unperturbed
    reference chain (the scale field depends on the context), so the hook
    models features that reach the receiver directly as noisy values.
    """
    hd = stream.header
    if hd.height % BLOCK or hd.width % BLOCK or hd.channels != 3:
        raise DecodeError("header dimensions are not codable")
    if len(stream.records) != hd.frames:
        raise DecodeError("record count does not match the header")
    shape = (hd.height, hd.width, hd.channels)
    p = hd.params
    bgr_hat = _decode_background(stream.background, shape, p) if hd.moe else None
    n_motion = residual_symbol_count(hd.height, hd.width, hd.motion)
    frames, fgs, concealed = [], [], []
    x_ref = x_prev = v_prev = alpha_prev = None
    ref_ok = False
    for t, raw in enumerate(stream.records):
        try:
            rec = FrameRecord.unpack(raw)
            if rec.frame_type == INTER and not ref_ok:
                # The reference was lost; decoding would only produce garbage.
                raise DecodeError("inter frame without a valid reference")
            if rec.frame_type == INTRA:
                flow = None
                z_ref = _blank(shape)
                _, y = _decode_payload(rec.latent, 0, entropy_estimate(z_ref, p))
            else:
                # Motion comes first in the stream, so the context (and with it
                # the latent scale field) is known before the latent is read.
                msyms = np.array(RansDecoder(rec.latent).decode([MOTION_BIN] * n_motion),
                                 dtype=np.int64)
                flow = flow_from_residuals(unpack_residuals(msyms, hd.height, hd.width, hd.motion),
                                           hd.height, hd.width, hd.motion)
                z_ref = extract_context(x_ref, flow)
                _, y = _decode_payload(rec.latent, n_motion, entropy_estimate(z_ref, p))
            alpha = None
            if hd.moe:
                alpha = decode_alpha(rec.alpha, hd.height, hd.width,
                                     () if flow is None else mask_predictions(alpha_prev, flow))
        except DecodeError:
            if v_prev is None:
                # Nothing to freeze on: show the background (or mid grey).
                v_prev = bgr_hat.copy() if bgr_hat is not None else np.full(shape, 0.5)
                x_prev = x_ref = np.ones(shape)
            frames.append(v_prev.copy())
            fgs.append(x_prev.copy())
            concealed.append(True)
            ref_ok = False
            continue
        if latent_hook is None:
            x_hat = x_ref = latent_inverse(y, z_ref, p)
        else:
            x_ref = latent_inverse(y, z_ref, p)
            z = _blank(shape) if flow is None else extract_context(x_prev, flow)
            x_hat = latent_inverse(latent_hook(y, t), z, p)
        v_hat = reconstruct_frame(x_hat, alpha, bgr_hat) if hd.moe else x_hat
        frames.append(v_hat)
        fgs.append(x_hat)
        concealed.append(False)
        x_prev, v_prev, alpha_prev = x_hat, v_hat, alpha
        ref_ok = True
    return DecodeResult(frames, fgs, concealed)
