"""Clip ingestion: PPM frame sequences, the .vclip binary format, quarter
resize and Rec.601 grayscale."""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    IndexOutOfRange,
    InconsistentDims,
    InvalidClip,
    MalformedFile,
    MissingFrames,
    NotDivisible,
)

VCLIP_MAGIC = b"VCLP1\n"
FRAME_PATTERN = "frame_{:04d}.ppm"
_FRAME_RE = re.compile(r"^frame_(\d+)\.ppm$")
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class Clip:
    """RGB frame stack of shape (T, H, W, 3), float32 in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 4 or d.shape[3] != 3:
            raise InvalidClip(f"clip data must be (T, H, W, 3), got {d.shape}")
        if d.shape[0] < 2:
            raise InvalidClip(f"clip needs at least 2 frames, got {d.shape[0]}")
        if not np.all(np.isfinite(d)) or d.min() < 0.0 or d.max() > 1.0:
            raise InvalidClip("clip values must lie in [0, 1]")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class GrayFrame:
    data: np.ndarray  # (H, W) luma in [0, 1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def make_clip(data) -> Clip:
    return Clip(np.ascontiguousarray(data, dtype=np.float32))


# --- PPM -------------------------------------------------------------------

def _ppm_tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated header integers, skipping comments.
    Returns the integers and the offset of the single whitespace byte that
    terminates the last one."""
    vals = []
    pos = 0
    n = len(buf)
    while len(vals) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise MalformedFile("truncated or non-numeric PPM header")
        vals.append(int(buf[start:pos]))
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise MalformedFile("PPM header not followed by whitespace")
    return vals, pos


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM (maxval 255) into a uint8 (H, W, 3) array."""
    buf = Path(path).read_bytes()
    if buf[:2] != b"P6":
        raise MalformedFile(f"{path}: not a P6 PPM")
    (w, h, maxval), pos = _ppm_tokens(buf[2:], 3)
    if maxval != 255:
        raise MalformedFile(f"{path}: unsupported maxval {maxval}")
    start = 2 + pos + 1
    payload = buf[start:start + w * h * 3]
    if len(payload) != w * h * 3:
        raise MalformedFile(f"{path}: expected {w * h * 3} pixel bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write a uint8 (H, W, 3) array as binary P6."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("rgb must be uint8 (H, W, 3)")
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(rgb).tobytes())


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] floats to uint8 by rounding."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_frames(directory, frames: np.ndarray) -> list[Path]:
    """Write a (T, H, W, 3) float stack as frame_0001.ppm, frame_0002.ppm, ..."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, frame in enumerate(frames):
        p = directory / FRAME_PATTERN.format(t + 1)
        write_ppm(p, to_bytes(frame))
        paths.append(p)
    return paths


def _load_ppm_dir(directory: Path) -> Clip:
    indexed = []
    for p in directory.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            indexed.append((int(m.group(1)), p))
    if not indexed:
        raise MissingFrames(f"{directory}: no frame_NNNN.ppm files")
    indexed.sort()
    frames = [read_ppm(p) for _, p in indexed]
    shape = frames[0].shape
    for (_, p), fr in zip(indexed, frames):
        if fr.shape != shape:
            raise InconsistentDims(f"{p.name}: {fr.shape[:2]} differs from {shape[:2]}")
    data = np.stack(frames).astype(np.float32) / np.float32(255.0)
    return Clip(data)


# --- .vclip ------------------------------------------------------------------

def write_vclip(path, clip: Clip) -> None:
    t, h, w, c = clip.data.shape
    with open(path, "wb") as f:
        f.write(VCLIP_MAGIC)
        f.write(struct.pack("<4I", t, h, w, c))
        f.write(clip.data.astype("<f4").tobytes())


def read_vclip(path) -> Clip:
    buf = Path(path).read_bytes()
    if buf[:6] != VCLIP_MAGIC:
        raise MalformedFile(f"{path}: bad magic")
    if len(buf) < 22:
        raise MalformedFile(f"{path}: truncated header")
    t, h, w, c = struct.unpack_from("<4I", buf, 6)
    if c != 3:
        raise MalformedFile(f"{path}: channel count must be 3, got {c}")
    expected = t * h * w * c * 4
    payload = buf[22:]
    if len(payload) != expected:
        raise MalformedFile(f"{path}: header says {expected} payload bytes, file has {len(payload)}")
    if t == 0:
        raise MissingFrames(f"{path}: zero frames")
    data = np.frombuffer(payload, dtype="<f4").reshape(t, h, w, c).astype(np.float32)
    return Clip(data)


def load_clip(path) -> Clip:
    """Load a clip from a directory of PPM frames or a .vclip file."""
    path = Path(path)
    if path.is_dir():
        return _load_ppm_dir(path)
    if not path.exists():
        raise MissingFrames(f"{path}: no such file or directory")
    return read_vclip(path)


def save_clip(path, clip: Clip) -> None:
    """Counterpart of load_clip: a `.vclip` suffix writes binary, anything
    else is treated as a frame directory."""
    path = Path(path)
    if path.suffix == ".vclip":
        write_vclip(path, clip)
    else:
        write_frames(path, clip.data)


# --- transforms ----------------------------------------------------------------

def resize_quarter(clip: Clip) -> Clip:
    """4x4 box-filter downsample in both spatial dimensions."""
    t, h, w, c = clip.data.shape
    if h % 4 or w % 4:
        raise NotDivisible(f"frame size {w}x{h} is not a multiple of 4")
    blocks = clip.data.astype(np.float64).reshape(t, h // 4, 4, w // 4, 4, c)
    return Clip(blocks.mean(axis=(2, 4)).astype(np.float32))


def to_grayscale(clip: Clip, frame_index: int) -> GrayFrame:
    if not 0 <= frame_index < clip.frames:
        raise IndexOutOfRange(f"frame {frame_index} outside [0, {clip.frames})")
    rgb = clip.data[frame_index]
    luma = rgb @ LUMA_WEIGHTS
    # float32 rounding can push a gray pixel a hair outside its channel range
    return GrayFrame(np.clip(luma, rgb.min(axis=-1), rgb.max(axis=-1)))


def standardize_frames(clip: Clip, frames: int) -> Clip:
    """Center-crop a clip in time to exactly `frames`; shorter clips are rejected."""
    if clip.frames < frames:
        raise InvalidClip(f"clip has {clip.frames} frames, need {frames}")
    start = (clip.frames - frames) // 2
    return Clip(clip.data[start:start + frames])
