"""The temporal-depth classifier: architecture, training, evaluation and
checkpoint I/O.

Pipeline for a flow clip of shape (3, D, H, W):

    max-pool (1, 4, 4) -> conv 6 x (3, N, 3, 3) -> ReLU -> max-pool (2, 4, 4)
    -> flatten -> dense 16 -> ReLU -> dense 1 -> sigmoid

The second pool's window is clamped to the conv output extent, so very
small inputs pool to a single cell instead of vanishing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .errors import (
    ArchitectureUnderflow,
    ClassMissing,
    ConfigError,
    EmptySet,
    MalformedFile,
    NonFiniteLoss,
    ShapeMismatch,
)
from .nn import AdamHyper, AdamState, Conv3dLayer, DenseLayer

PRE_POOL = (1, 4, 4)
POST_POOL = (2, 4, 4)
HIDDEN = 16
CHECKPOINT_MAGIC = b"VCNN1\n"
PARAM_ORDER = ("conv.kernels", "conv.bias", "fc1.weights", "fc1.bias", "fc2.weights", "fc2.bias")


@dataclass
class Sample:
    """One model input: an encoded flow clip (3, D, H, W) and its label."""

    x: np.ndarray
    label: int
    name: str = ""


@dataclass
class ModelParams:
    n_frames: int
    input_dims: tuple[int, int, int, int]
    conv: Conv3dLayer
    fc1: DenseLayer
    fc2: DenseLayer

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "conv.kernels": self.conv.kernels,
            "conv.bias": self.conv.bias,
            "fc1.weights": self.fc1.weights,
            "fc1.bias": self.fc1.bias,
            "fc2.weights": self.fc2.weights,
            "fc2.bias": self.fc2.bias,
        }

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        return ModelParams(
            self.n_frames,
            self.input_dims,
            Conv3dLayer(arrays["conv.kernels"], arrays["conv.bias"]),
            DenseLayer(arrays["fc1.weights"], arrays["fc1.bias"]),
            DenseLayer(arrays["fc2.weights"], arrays["fc2.bias"]),
        )

    def astype(self, dtype) -> "ModelParams":
        return self.with_arrays({k: v.astype(dtype) for k, v in self.as_dict().items()})


def feature_dims(n_frames: int, input_dims) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
    """Conv output extents and the clamped post-conv pool window."""
    c, d, h, w = input_dims
    if c != 3:
        raise ArchitectureUnderflow(f"flow input must have 3 channels, got {c}")
    if n_frames < 1:
        raise ArchitectureUnderflow(f"n_frames must be >= 1, got {n_frames}")
    hp, wp = h // PRE_POOL[1], w // PRE_POOL[2]
    conv = (d - n_frames + 1, hp - 2, wp - 2)
    if min(conv) < 1:
        raise ArchitectureUnderflow(
            f"N={n_frames} on input {tuple(input_dims)} leaves conv output {conv}"
        )
    pool = tuple(min(p, e) for p, e in zip(POST_POOL, conv))
    return conv, pool


def flat_size(n_frames: int, input_dims) -> int:
    conv, pool = feature_dims(n_frames, input_dims)
    return nn.N_FILTERS * int(np.prod([e // p for e, p in zip(conv, pool)]))


def build_model(n_frames: int, input_dims, seed: int) -> ModelParams:
    """He-uniform weights, zero biases, fully determined by seed."""
    input_dims = tuple(int(v) for v in input_dims)
    flat = flat_size(n_frames, input_dims)
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, shape).astype(np.float32)

    c = input_dims[0]
    conv = Conv3dLayer(
        he((nn.N_FILTERS, c, n_frames, 3, 3), c * n_frames * 9),
        np.zeros(nn.N_FILTERS, np.float32),
    )
    fc1 = DenseLayer(he((HIDDEN, flat), flat), np.zeros(HIDDEN, np.float32))
    fc2 = DenseLayer(he((1, HIDDEN), HIDDEN), np.zeros(1, np.float32))
    return ModelParams(n_frames, input_dims, conv, fc1, fc2)


def _check_input(params: ModelParams, x: np.ndarray) -> None:
    if tuple(x.shape) != tuple(params.input_dims):
        raise ShapeMismatch(f"input {tuple(x.shape)} != model input {tuple(params.input_dims)}")


def _forward_cache(params: ModelParams, x: np.ndarray):
    _check_input(params, x)
    x = x.astype(params.conv.kernels.dtype, copy=False)
    p0, idx0 = nn.maxpool3d(x, PRE_POOL)
    z1 = nn.conv3d_forward(p0, params.conv)
    a1 = nn.relu(z1)
    _, pool = feature_dims(params.n_frames, params.input_dims)
    p1, idx1 = nn.maxpool3d(a1, pool)
    f = p1.reshape(-1)
    z2 = nn.dense_forward(f, params.fc1)
    a2 = nn.relu(z2)
    logit = nn.dense_forward(a2, params.fc2)[0]
    cache = (p0, z1, idx1, p1.shape, f, z2, a2)
    return logit, cache


def logit(params: ModelParams, x: np.ndarray) -> float:
    return float(_forward_cache(params, x)[0])


def forward(params: ModelParams, x: np.ndarray) -> float:
    """Probability that the clip is fight-like, strictly inside (0, 1)."""
    p = float(nn.sigmoid(logit(params, x)))
    return min(max(p, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0))


def loss_and_grads(params: ModelParams, x: np.ndarray, label: int):
    """BCE loss, logit and parameter gradients for one sample."""
    z, (p0, z1, idx1, p1_shape, f, z2, a2) = _forward_cache(params, x)
    loss, dz = nn.sigmoid_bce(z, label)
    dtype = params.conv.kernels.dtype
    g_out = np.array([dz], dtype=dtype)

    g_a2, g_w2, g_b2 = nn.dense_backward(a2, params.fc2, g_out)
    g_z2 = nn.relu_backward(z2, g_a2)
    g_f, g_w1, g_b1 = nn.dense_backward(f, params.fc1, g_z2)
    g_a1 = nn.maxpool3d_backward(idx1, g_f.reshape(p1_shape))
    g_z1 = nn.relu_backward(z1, g_a1)
    _, g_k, g_kb = nn.conv3d_backward(p0, params.conv, g_z1)
    grads = {
        "conv.kernels": g_k,
        "conv.bias": g_kb,
        "fc1.weights": g_w1,
        "fc1.bias": g_b1,
        "fc2.weights": g_w2,
        "fc2.bias": g_b2,
    }
    return loss, z, grads


# --- data handling ----------------------------------------------------------------

def split_dataset(data: Sequence, split_frac: float, seed: int):
    """Stratified train/test split.

    Each class puts round(split_frac * count) items in the test set, halves
    rounding up. When both classes land exactly on a half, only one of them
    (label 1) rounds up, so two clips at 0.5 split one and one. Each class
    is shuffled independently by seed.
    """
    if not 0 < split_frac < 1:
        raise ConfigError(f"split_frac must be in (0, 1), got {split_frac}")
    by_label = {0: [], 1: []}
    for i, item in enumerate(data):
        by_label[int(item.label)].append(i)
    if not by_label[0] or not by_label[1]:
        raise ClassMissing("both classes must be present to split")

    n_test = {}
    halves = []
    for c, idx in by_label.items():
        q = split_frac * len(idx)
        if abs(q - np.floor(q) - 0.5) < 1e-9:
            halves.append(c)
            n_test[c] = int(np.floor(q))
        else:
            n_test[c] = int(np.floor(q + 0.5))
    for c in sorted(halves, reverse=True)[:(len(halves) + 1) // 2]:
        n_test[c] += 1

    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in (0, 1):
        idx = np.array(by_label[label])
        perm = idx[rng.permutation(len(idx))]
        test_idx.extend(perm[:n_test[label]].tolist())
        train_idx.extend(perm[n_test[label]:].tolist())
    train_idx.sort()
    test_idx.sort()
    return [data[i] for i in train_idx], [data[i] for i in test_idx]


# --- training and evaluation -------------------------------------------------------

@dataclass
class TrainConfig:
    n_frames: int = 3
    epochs: int = 20
    batch_size: int = 8
    split_frac: float = 0.2
    seed: int = 0
    threshold: float = 0.5
    adam: AdamHyper = field(default_factory=AdamHyper)

    def __post_init__(self):
        if isinstance(self.adam, dict):
            self.adam = AdamHyper(**self.adam)
        if not 0 < self.split_frac < 1:
            raise ConfigError(f"split_frac must be in (0, 1), got {self.split_frac}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def confusion_from_predictions(preds: Sequence[int], labels: Sequence[int]) -> ConfusionMatrix:
    tp = fp = fn = tn = 0
    for p, y in zip(preds, labels):
        if p and y:
            tp += 1
        elif p and not y:
            fp += 1
        elif not p and y:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _scores(params: ModelParams, samples: Sequence[Sample]):
    logits = np.array([logit(params, s.x) for s in samples])
    return logits, nn.sigmoid(logits)


def evaluate(params: ModelParams, samples: Sequence[Sample], threshold: float = 0.5):
    """Accuracy and confusion matrix; predicts positive iff probability > threshold."""
    if not samples:
        raise EmptySet("cannot evaluate an empty set")
    _, probs = _scores(params, samples)
    preds = [int(p > threshold) for p in probs]
    cm = confusion_from_predictions(preds, [s.label for s in samples])
    return cm.accuracy, cm


def _eval_loss_acc(params, samples, threshold):
    logits, probs = _scores(params, samples)
    losses = [nn.sigmoid_bce(z, s.label)[0] for z, s in zip(logits, samples)]
    correct = [int(p > threshold) == s.label for p, s in zip(probs, samples)]
    return float(np.mean(losses)), float(np.mean(correct))


def _check_finite(loss: float, where: str) -> None:
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"non-finite loss during {where}")


def train(params: ModelParams, train_set: Sequence[Sample], val_set: Sequence[Sample], cfg: TrainConfig):
    """Mini-batch Adam on mean BCE. Returns (final params, per-epoch metrics).

    Train metrics are accumulated from the forward passes made while
    training; validation metrics are computed after each epoch.
    """
    if not train_set or not val_set:
        raise EmptySet("train and validation sets must be nonempty")
    for s in list(train_set) + list(val_set):
        _check_input(params, s.x)

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))
    arrays = params.as_dict()
    state = AdamState.zeros_like(arrays)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        losses, correct = [], []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            current = params.with_arrays(arrays)
            acc = {k: np.zeros(v.shape, np.float64) for k, v in arrays.items()}
            for i in batch:
                s = train_set[i]
                loss, z, grads = loss_and_grads(current, s.x, s.label)
                _check_finite(loss, f"epoch {epoch}")
                losses.append(loss)
                correct.append(int(nn.sigmoid(z) > cfg.threshold) == s.label)
                for k in acc:
                    acc[k] += grads[k]
            mean = {k: (acc[k] / len(batch)).astype(arrays[k].dtype) for k in acc}
            arrays, state = nn.adam_step(arrays, mean, state, cfg.adam)
        params = params.with_arrays(arrays)
        val_loss, val_acc = _eval_loss_acc(params, val_set, cfg.threshold)
        _check_finite(val_loss, f"validation at epoch {epoch}")
        history.append(EpochMetrics(epoch, float(np.mean(losses)), float(np.mean(correct)), val_loss, val_acc))
    return params, history


# --- checkpoints ------------------------------------------------------------------

def save_checkpoint(path, params: ModelParams) -> None:
    """Layout: magic, u32 N, 4 x u32 input dims, then for each tensor in
    PARAM_ORDER a u32 rank, rank x u32 extents and little-endian float32 data."""
    arrays = params.as_dict()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", params.n_frames))
        f.write(struct.pack("<4I", *params.input_dims))
        for name in PARAM_ORDER:
            a = arrays[name]
            f.write(struct.pack("<I", a.ndim))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(a.astype("<f4").tobytes())


def load_checkpoint(path) -> ModelParams:
    buf = Path(path).read_bytes()
    if buf[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise MalformedFile(f"{path}: not a model checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    try:
        (n,) = struct.unpack_from("<I", buf, pos)
        dims = struct.unpack_from("<4I", buf, pos + 4)
        pos += 20
        arrays = {}
        for name in PARAM_ORDER:
            (ndim,) = struct.unpack_from("<I", buf, pos)
            shape = struct.unpack_from(f"<{ndim}I", buf, pos + 4)
            pos += 4 + 4 * ndim
            count = int(np.prod(shape))
            data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
            arrays[name] = data.reshape(shape).astype(np.float32)
            pos += 4 * count
    except (struct.error, ValueError) as exc:
        raise MalformedFile(f"{path}: truncated checkpoint") from exc
    if pos != len(buf):
        raise MalformedFile(f"{path}: {len(buf) - pos} trailing bytes")
    template = build_model(n, dims, 0)
    for name, a in template.as_dict().items():
        if a.shape != arrays[name].shape:
            raise MalformedFile(f"{path}: {name} has shape {arrays[name].shape}, expected {a.shape}")
    return template.with_arrays(arrays)
