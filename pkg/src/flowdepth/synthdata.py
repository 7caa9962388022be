"""Synthetic two-class motion clips.

Label 0 blobs drift at constant velocity; label 1 blobs reverse their
velocity every ``reversal_period`` frames. Directions are uniform in both
classes, so any single flow frame looks the same for either label and the
class is only visible across consecutive flow frames.

Blobs come in mirrored pairs: every second blob is its partner reflected
through the canvas center, so it moves the opposite way, bounces off the
border at the same instant and reverses with it. The set of motion
directions in view then stays a fixed antipodal pair throughout a clip of
either label, so comparing whole-frame statistics across time does not
reveal the class either.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigInvalid, OddCount
from .videoio import Clip, write_vclip


@dataclass(frozen=True)
class SynthConfig:
    frames: int = 24
    height: int = 32
    width: int = 32
    n_blobs: int = 2
    speed: float = 1.5
    reversal_period: int = 4
    noise_sigma: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        if self.reversal_period < 1:
            raise ConfigInvalid("reversal_period must be >= 1")
        if self.frames < self.reversal_period + 2:
            raise ConfigInvalid(
                f"frames ({self.frames}) must be >= reversal_period + 2 ({self.reversal_period + 2})"
            )
        if not 0 < self.speed <= 2:
            raise ConfigInvalid(f"speed must be in (0, 2], got {self.speed}")
        if self.height < 16 or self.width < 16:
            raise ConfigInvalid(f"dims must be >= 16, got {self.width}x{self.height}")
        if self.n_blobs < 1:
            raise ConfigInvalid("n_blobs must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigInvalid("noise_sigma must be >= 0")


@dataclass(frozen=True)
class LabeledClip:
    clip: Clip
    label: int
    name: str = ""


def blob_radius(cfg: SynthConfig) -> float:
    return max(3.0, min(cfg.height, cfg.width) / 6)


def _sine_texture(rng: np.random.Generator, n: int = 3):
    """Random smooth texture as a function of continuous coordinates."""
    wavelengths = rng.uniform(6.0, 11.0, n)
    angles = rng.uniform(0, np.pi, n)
    phases = rng.uniform(0, 2 * np.pi, n)
    amps = rng.uniform(0.5, 1.0, n)
    amps = amps / amps.sum()
    kx = 2 * np.pi * np.cos(angles) / wavelengths
    ky = 2 * np.pi * np.sin(angles) / wavelengths

    def tex(x, y):
        s = np.zeros(np.broadcast(x, y).shape)
        for i in range(n):
            s += amps[i] * np.sin(kx[i] * x + ky[i] * y + phases[i])
        return 0.5 + 0.5 * s  # within [0, 1]

    return tex


def _trajectory(rng, cfg: SynthConfig, label: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Blob centers (T, 2) as (x, y), reflecting at [lo, hi]."""
    theta = rng.uniform(0, 2 * np.pi)
    vel = cfg.speed * np.array([np.cos(theta), np.sin(theta)])
    steps = cfg.frames - 1

    # place the start so the unreflected path stays in frame whenever it can
    span = np.abs(vel) * (cfg.reversal_period if label == 1 else steps)
    start = np.empty(2)
    for k in range(2):
        room = hi[k] - lo[k] - span[k]
        if room >= 0:
            base = lo[k] + rng.uniform(0, room)
            start[k] = base if vel[k] >= 0 else base + span[k]
        else:
            start[k] = rng.uniform(lo[k], hi[k])

    pos = np.empty((cfg.frames, 2))
    pos[0] = start
    v = vel.copy()
    for t in range(steps):
        if label == 1 and t > 0 and t % cfg.reversal_period == 0:
            v = -v
        p = pos[t] + v
        for k in range(2):
            if p[k] < lo[k]:
                p[k] = 2 * lo[k] - p[k]
                v[k] = -v[k]
            elif p[k] > hi[k]:
                p[k] = 2 * hi[k] - p[k]
                v[k] = -v[k]
        pos[t + 1] = p
    return pos


def gen_clip(label: int, cfg: SynthConfig, seed: int) -> LabeledClip:
    """Render one clip. Identical (label, cfg, seed) give bit-identical output."""
    cfg.validate()
    if label not in (0, 1):
        raise ConfigInvalid(f"label must be 0 or 1, got {label}")
    rng = np.random.default_rng(seed)
    h, w = cfg.height, cfg.width
    r = blob_radius(cfg)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    bg = gaussian_filter(rng.random((h, w)), 1.5)
    bg = (bg - bg.min()) / max(bg.max() - bg.min(), 1e-12)
    bg_tint = rng.uniform(0.7, 1.0, 3)
    background = (0.15 + 0.3 * bg)[..., None] * bg_tint

    lo = np.array([r, r])
    hi = np.array([w - 1 - r, h - 1 - r])
    blobs = []
    for i in range(cfg.n_blobs):
        tex = _sine_texture(rng)
        tint = rng.uniform(0.6, 1.0, 3)
        if i % 2 == 1:
            pos = (lo + hi) - blobs[-1][2]  # point mirror of the partner
        else:
            pos = _trajectory(rng, cfg, label, lo, hi)
        blobs.append((tex, tint, pos))

    data = np.empty((cfg.frames, h, w, 3))
    for t in range(cfg.frames):
        frame = background.copy()
        for tex, tint, pos in blobs:
            cx, cy = pos[t]
            dx, dy = xx - cx, yy - cy
            alpha = np.clip(r + 0.5 - np.hypot(dx, dy), 0.0, 1.0)[..., None]
            shade = (0.45 + 0.5 * tex(dx, dy))[..., None] * tint
            frame = (1 - alpha) * frame + alpha * shade
        data[t] = frame
    if cfg.noise_sigma > 0:
        data += rng.normal(0.0, cfg.noise_sigma, data.shape)
    data = np.clip(data, 0.0, 1.0).astype(np.float32)
    return LabeledClip(Clip(data), label)


def derive_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def gen_dataset(n: int, cfg: SynthConfig, seed: int | None = None) -> list[LabeledClip]:
    """Balanced dataset of n clips in a seed-determined shuffled order."""
    if n % 2:
        raise OddCount(f"dataset size must be even, got {n}")
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    seeds = derive_seeds(seed, n)
    labels = [1] * (n // 2) + [0] * (n // 2)
    order = np.random.default_rng(seed).permutation(n)
    out = []
    for i, j in enumerate(order):
        lc = gen_clip(labels[j], cfg, seeds[j])
        out.append(LabeledClip(lc.clip, lc.label, f"clip_{i:04d}"))
    return out


def write_dataset(out_dir, clips: list[LabeledClip]) -> Path:
    """Materialize clips as <name>.vclip plus labels.csv (filename,label)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels_path = out_dir / "labels.csv"
    with open(labels_path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["filename", "label"])
        for i, lc in enumerate(clips):
            name = (lc.name or f"clip_{i:04d}") + ".vclip"
            write_vclip(out_dir / name, lc.clip)
            wr.writerow([name, lc.label])
    return labels_path
