"""File formats: binary PPM/PGM, raw planar frames, frame directories, flow dumps."""
from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .errors import DecodeError, DimensionError

_HEADER = re.compile(rb"^(P[56])\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s")


def to_uint8(f: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(f) * 255.0), 0, 255).astype(np.uint8)


def read_pnm(path) -> np.ndarray:
    """Read a binary P6 (colour) or P5 (grey) file into an HxWxC array in [0, 1]."""
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if not m:
        raise DecodeError(f"{path}: not a binary PPM/PGM file")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise DecodeError(f"{path}: only maxval 255 is supported, got {maxval}")
    c = 3 if magic == b"P6" else 1
    body = data[m.end():m.end() + h * w * c]
    if len(body) != h * w * c:
        raise DecodeError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, c) / 255.0


def write_pnm(path, f: np.ndarray) -> None:
    a = np.asarray(f)
    if a.ndim == 2:
        a = a[:, :, None]
    h, w, c = a.shape
    if c not in (1, 3):
        raise DimensionError(f"cannot write {c}-channel frame as PPM/PGM")
    magic = b"P6" if c == 3 else b"P5"
    Path(path).write_bytes(magic + b"\n%d %d\n255\n" % (w, h) + to_uint8(a).tobytes())


def read_raw_planar(path, height: int, width: int, channels: int = 3) -> np.ndarray:
    """Header-less 8-bit planar file (all of channel 0, then channel 1, ...)."""
    data = np.fromfile(path, dtype=np.uint8)
    if data.size != height * width * channels:
        raise DimensionError(f"{path}: expected {height * width * channels} bytes, got {data.size}")
    return data.reshape(channels, height, width).transpose(1, 2, 0) / 255.0


def write_raw_planar(path, f: np.ndarray) -> None:
    to_uint8(f).transpose(2, 0, 1).tofile(path)


def frame_name(index: int, suffix: str = ".ppm") -> str:
    return f"{index:06d}{suffix}"


def read_sequence(directory) -> list[np.ndarray]:
    """Load numbered frames ``000000.ppm, 000001.ppm, ...`` from *directory*."""
    d = Path(directory)
    files = sorted(p for p in d.iterdir() if p.suffix in (".ppm", ".pgm") and p.stem.isdigit())
    if not files:
        raise FileNotFoundError(f"no numbered PPM frames in {d}")
    frames = [read_pnm(p) for p in files]
    if len({f.shape for f in frames}) != 1:
        raise DimensionError(f"frames in {d} do not share one shape")
    return frames


def write_sequence(directory, frames, suffix: str = ".ppm") -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_pnm(d / frame_name(i, suffix), f)


def read_masks(directory, count: int | None = None) -> list[np.ndarray]:
    """Load grey PGM masks (255 = foreground) as HxW arrays in [0, 1]."""
    d = Path(directory)
    files = sorted(p for p in d.iterdir() if p.suffix == ".pgm" and p.stem.isdigit())
    if count is not None and len(files) < count:
        raise FileNotFoundError(f"{d}: expected {count} masks, found {len(files)}")
    return [read_pnm(p)[:, :, 0] for p in files]


def write_flow(path, flow: np.ndarray) -> None:
    """Little-endian float32 dump: int32 header (H, W) then row-major (dx, dy) pairs."""
    h, w, _ = flow.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<ii", h, w))
        fh.write(np.asarray(flow, dtype="<f4").tobytes())


def read_flow(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise DecodeError(f"{path}: truncated flow header")
    h, w = struct.unpack_from("<ii", data)
    body = np.frombuffer(data, dtype="<f4", offset=8)
    if body.size != h * w * 2:
        raise DecodeError(f"{path}: flow payload size mismatch")
    return body.reshape(h, w, 2).astype(np.float64)
