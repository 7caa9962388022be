"""Dense numeric kernels: 3D convolution, 3D max pooling, dense layers,
ReLU, sigmoid + BCE, Adam and a central-difference gradient checker.

Every function keeps the dtype of its inputs. Models run in float32; the
gradient checker feeds float64 copies through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, KernelTooDeep, PoolTooLarge, ShapeMismatch

N_FILTERS = 6


@dataclass
class Conv3dLayer:
    kernels: np.ndarray  # (F, C, N, 3, 3)
    bias: np.ndarray  # (F,)

    def __post_init__(self):
        k = self.kernels
        if k.ndim != 5 or k.shape[3:] != (3, 3):
            raise ShapeMismatch(f"kernels must be (F, C, N, 3, 3), got {k.shape}")
        if self.bias.shape != (k.shape[0],):
            raise ShapeMismatch(f"bias shape {self.bias.shape} != ({k.shape[0]},)")

    @property
    def depth(self) -> int:
        return self.kernels.shape[2]


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch(f"inconsistent dense shapes {self.weights.shape}, {self.bias.shape}")


# --- convolution -------------------------------------------------------------

def _conv_columns(x: np.ndarray, n: int) -> np.ndarray:
    """(C, D, H, W) -> (D', H', W', C*N*9) patch matrix, (c, n, i, j) order."""
    win = sliding_window_view(x, (n, 3, 3), axis=(1, 2, 3))  # (C, D', H', W', N, 3, 3)
    c, dd, hh, ww = win.shape[:4]
    return win.transpose(1, 2, 3, 0, 4, 5, 6).reshape(dd, hh, ww, c * n * 9)


def _check_conv(x: np.ndarray, layer: Conv3dLayer) -> None:
    if x.ndim != 4:
        raise ShapeMismatch(f"conv input must be (C, D, H, W), got {x.shape}")
    f, c, n = layer.kernels.shape[:3]
    if x.shape[0] != c:
        raise ShapeMismatch(f"input has {x.shape[0]} channels, kernels expect {c}")
    if n > x.shape[1]:
        raise KernelTooDeep(f"kernel depth {n} exceeds input depth {x.shape[1]}")
    if x.shape[2] < 3 or x.shape[3] < 3:
        raise ShapeMismatch(f"spatial extent {x.shape[2:]} smaller than 3x3 kernel")


def conv3d_forward(x: np.ndarray, layer: Conv3dLayer) -> np.ndarray:
    """Valid, stride-1 cross-correlation. Returns (F, D-N+1, H-2, W-2)."""
    _check_conv(x, layer)
    f = layer.kernels.shape[0]
    cols = _conv_columns(x, layer.depth)
    out = cols @ layer.kernels.reshape(f, -1).T + layer.bias
    return np.ascontiguousarray(out.transpose(3, 0, 1, 2))


def conv3d_backward(x: np.ndarray, layer: Conv3dLayer, grad_out: np.ndarray):
    """Gradients of conv3d_forward. Returns (grad_x, grad_kernels, grad_bias)."""
    _check_conv(x, layer)
    f, c, n = layer.kernels.shape[:3]
    d2, h2, w2 = x.shape[1] - n + 1, x.shape[2] - 2, x.shape[3] - 2
    if grad_out.shape != (f, d2, h2, w2):
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} != {(f, d2, h2, w2)}")

    g = grad_out.reshape(f, -1)  # (F, P)
    cols = _conv_columns(x, n).reshape(-1, c * n * 9)  # (P, K)
    grad_k = (g @ cols).reshape(layer.kernels.shape)
    grad_b = g.sum(axis=1)

    dcols = (g.T @ layer.kernels.reshape(f, -1)).reshape(d2, h2, w2, c, n, 3, 3)
    grad_x = np.zeros_like(x)
    for dn in range(n):
        for i in range(3):
            for j in range(3):
                grad_x[:, dn:dn + d2, i:i + h2, j:j + w2] += dcols[..., dn, i, j].transpose(3, 0, 1, 2)
    return grad_x, grad_k, grad_b


# --- pooling -------------------------------------------------------------------

@dataclass(frozen=True)
class PoolIndex:
    """Flat positions into the pooled input of each window's maximum."""

    flat: np.ndarray
    input_shape: tuple


def maxpool3d(x: np.ndarray, pool: tuple[int, int, int]):
    """Disjoint-window max pool over (D, H, W) of a (C, D, H, W) tensor.

    Trailing elements that do not fill a window are dropped. Ties go to
    the lowest flat index. Returns (y, PoolIndex).
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"pool input must be (C, D, H, W), got {x.shape}")
    pd, ph, pw = pool
    if min(pool) < 1:
        raise PoolTooLarge(f"pool extents must be >= 1, got {pool}")
    c, d, h, w = x.shape
    od, oh, ow = d // pd, h // ph, w // pw
    if min(od, oh, ow) < 1:
        raise PoolTooLarge(f"pool {pool} larger than input extents {(d, h, w)}")

    crop = x[:, :od * pd, :oh * ph, :ow * pw]
    blocks = crop.reshape(c, od, pd, oh, ph, ow, pw).transpose(0, 1, 3, 5, 2, 4, 6)
    blocks = blocks.reshape(c, od, oh, ow, pd * ph * pw)
    local = np.argmax(blocks, axis=-1)  # first maximum = lowest flat index
    y = np.take_along_axis(blocks, local[..., None], axis=-1)[..., 0]

    a, rem = np.divmod(local, ph * pw)
    b, cc = np.divmod(rem, pw)
    ci = np.arange(c)[:, None, None, None]
    di = np.arange(od)[None, :, None, None] * pd + a
    hi = np.arange(oh)[None, None, :, None] * ph + b
    wi = np.arange(ow)[None, None, None, :] * pw + cc
    flat = ((ci * d + di) * h + hi) * w + wi
    return np.ascontiguousarray(y), PoolIndex(flat, x.shape)


def maxpool3d_backward(index: PoolIndex, grad_out: np.ndarray) -> np.ndarray:
    if grad_out.shape != index.flat.shape:
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} != pooled shape {index.flat.shape}")
    grad_x = np.zeros(int(np.prod(index.input_shape)), dtype=grad_out.dtype)
    # windows are disjoint, so each position receives at most one value
    grad_x[index.flat.ravel()] = grad_out.ravel()
    return grad_x.reshape(index.input_shape)


# --- elementwise and dense ----------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype)


def dense_forward(x: np.ndarray, layer: DenseLayer) -> np.ndarray:
    if x.ndim != 1 or x.shape[0] != layer.weights.shape[1]:
        raise ShapeMismatch(f"input length {x.shape} != layer input {layer.weights.shape[1]}")
    return layer.weights @ x + layer.bias


def dense_backward(x: np.ndarray, layer: DenseLayer, grad_out: np.ndarray):
    """Returns (grad_x, grad_weights, grad_bias)."""
    if grad_out.shape != (layer.weights.shape[0],):
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} != ({layer.weights.shape[0]},)")
    if x.shape != (layer.weights.shape[1],):
        raise ShapeMismatch(f"input shape {x.shape} != ({layer.weights.shape[1]},)")
    return layer.weights.T @ grad_out, np.outer(grad_out, x), grad_out.copy()


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def sigmoid_bce(logit: float, label: int) -> tuple[float, float]:
    """Binary cross-entropy of sigmoid(logit) against label, and its
    derivative with respect to the logit."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    z = float(logit)
    loss = max(z, 0.0) - z * label + np.log1p(np.exp(-abs(z)))
    return float(loss), float(sigmoid(z)) - label


# --- Adam ------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamHyper:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.alpha < 0 or self.epsilon <= 0:
            raise ConfigError("alpha must be >= 0 and epsilon > 0")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, hyper: AdamHyper = AdamHyper()):
    """One bias-corrected Adam update. Returns new (params, state); inputs
    are left untouched."""
    if set(grads) != set(params):
        raise ShapeMismatch(f"gradient keys {sorted(grads)} != parameter keys {sorted(params)}")
    if not state.m:
        state = AdamState.zeros_like(params)
    t = state.t + 1
    b1, b2 = hyper.beta1, hyper.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ShapeMismatch(f"{k}: param {p.shape}, grad {g.shape}, moment {state.m[k].shape}")
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p[k] = (p - hyper.alpha * m_hat / (np.sqrt(v_hat) + hyper.epsilon)).astype(p.dtype)
        new_m[k] = m.astype(p.dtype)
        new_v[k] = v.astype(p.dtype)
    return new_p, AdamState(new_m, new_v, t)


# --- gradient checking -------------------------------------------------------------

def finite_diff_gradient(loss_fn: Callable[[np.ndarray], float], params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, evaluated in float64."""
    if not h > 0:
        raise ValueError("step h must be positive")
    theta = np.array(params, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(loss_fn(theta))
        flat[i] = orig - h
        fm = float(loss_fn(theta))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||), with 0 when both vanish."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)
