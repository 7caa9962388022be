"""Dense single-level Lucas-Kanade flow and its HSV color encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigInvalid, DimMismatch, FrameTooSmall
from .videoio import Clip, GrayFrame, to_grayscale


@dataclass(frozen=True)
class FlowConfig:
    window: int = 5
    det_epsilon: float = 1e-6
    v_max: float = 8.0  # pixels/frame mapped to full intensity

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigInvalid(f"window must be odd and >= 3, got {self.window}")
        if not self.det_epsilon > 0:
            raise ConfigInvalid("det_epsilon must be positive")
        if not self.v_max > 0:
            raise ConfigInvalid("v_max must be positive")


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray  # (H, W) rightward displacement
    v: np.ndarray  # (H, W) downward displacement

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def _window_sum(a: np.ndarray, k: int) -> np.ndarray:
    """Sum over every k x k window; output is (H-k+1, W-k+1)."""
    return sliding_window_view(a, (k, k)).sum(axis=(-2, -1))


def lucas_kanade(prev: GrayFrame, next: GrayFrame, cfg: FlowConfig = FlowConfig()) -> FlowField:
    """Per-pixel least-squares flow over a square window.

    Spatial gradients are central differences averaged over both frames,
    which makes lucas_kanade(a, b) == -lucas_kanade(b, a) up to rounding.
    Pixels whose window or gradient stencil leaves the image, or whose
    structure tensor has determinant below det_epsilon, get zero flow.
    """
    a = np.asarray(prev.data, dtype=np.float64)
    b = np.asarray(next.data, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"frame shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    k = cfg.window
    if h < k or w < k:
        raise FrameTooSmall(f"{w}x{h} frame smaller than {k}x{k} window")

    u = np.zeros((h, w))
    v = np.zeros((h, w))
    r = k // 2
    # valid centers need r pixels of window plus 1 of stencil on each side
    if h < k + 2 or w < k + 2:
        return FlowField(u, v)

    avg = 0.5 * (a + b)
    ix = 0.5 * (avg[1:-1, 2:] - avg[1:-1, :-2])
    iy = 0.5 * (avg[2:, 1:-1] - avg[:-2, 1:-1])
    it = (b - a)[1:-1, 1:-1]

    sxx = _window_sum(ix * ix, k)
    syy = _window_sum(iy * iy, k)
    sxy = _window_sum(ix * iy, k)
    sxt = _window_sum(ix * it, k)
    syt = _window_sum(iy * it, k)

    det = sxx * syy - sxy * sxy
    ok = det >= cfg.det_epsilon
    safe = np.where(ok, det, 1.0)
    uu = np.where(ok, (-syy * sxt + sxy * syt) / safe, 0.0)
    vv = np.where(ok, (sxy * sxt - sxx * syt) / safe, 0.0)

    inner = (slice(r + 1, h - r - 1), slice(r + 1, w - r - 1))
    u[inner] = uu
    v[inner] = vv
    return FlowField(u, v)


def hsv_to_rgb(hue: np.ndarray, sat: np.ndarray, val: np.ndarray) -> np.ndarray:
    """Vectorized sextant HSV -> RGB; hue in [0, 1). Returns (..., 3)."""
    h6 = (np.asarray(hue) % 1.0) * 6.0
    sector = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * f)
    t = val * (1.0 - sat * (1.0 - f))
    table = [
        (val, t, p),
        (q, val, p),
        (p, val, t),
        (p, q, val),
        (t, p, val),
        (val, p, q),
    ]
    rgb = np.zeros(np.shape(h6) + (3,))
    for s, (r, g, b) in enumerate(table):
        m = sector == s
        rgb[..., 0] = np.where(m, r, rgb[..., 0])
        rgb[..., 1] = np.where(m, g, rgb[..., 1])
        rgb[..., 2] = np.where(m, b, rgb[..., 2])
    return rgb


def flow_hsv(flow: FlowField, cfg: FlowConfig = FlowConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Hue in [0, 1) (0 = rightward, increasing with atan2(v, u)) and value in [0, 1]."""
    angle = np.arctan2(flow.v, flow.u) % (2 * np.pi)
    hue = angle / (2 * np.pi)
    hue = np.where(hue >= 1.0, 0.0, hue)
    value = np.minimum(flow.magnitude / cfg.v_max, 1.0)
    return hue, value


def encode_flow(flow: FlowField, cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    """Direction -> hue, magnitude -> value, full saturation. Returns (H, W, 3) float32."""
    hue, value = flow_hsv(flow, cfg)
    return hsv_to_rgb(hue, np.ones_like(value), value).astype(np.float32)


def clip_to_flow(clip: Clip, cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    """Encoded flow for every consecutive frame pair, shape (3, T-1, H, W)."""
    grays = [to_grayscale(clip, t) for t in range(clip.frames)]
    out = np.empty((3, clip.frames - 1, clip.height, clip.width), dtype=np.float32)
    for t in range(1, clip.frames):
        rgb = encode_flow(lucas_kanade(grays[t - 1], grays[t], cfg), cfg)
        out[:, t - 1] = rgb.transpose(2, 0, 1)
    return out


def flow_to_frames(flow_clip: np.ndarray) -> np.ndarray:
    """(3, D, H, W) -> (D, H, W, 3), the layout the PPM writer expects."""
    return np.ascontiguousarray(flow_clip.transpose(1, 2, 3, 0))
