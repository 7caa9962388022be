"""N-sweep experiment: dataset preparation, per-depth training runs and
all file outputs (metrics CSVs, SVG curves, confusion matrices, summary,
checkpoints and kernel slice images)."""

from __future__ import annotations

import csv
import dataclasses
import logging
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, MissingFrames
from .model import (
    ConfusionMatrix,
    EpochMetrics,
    ModelParams,
    Sample,
    TrainConfig,
    build_model,
    evaluate,
    feature_dims,
    save_checkpoint,
    split_dataset,
    train,
)
from .opticalflow import FlowConfig, clip_to_flow
from .synthdata import SynthConfig, gen_dataset
from .videoio import load_clip, resize_quarter, standardize_frames, to_bytes, write_ppm

log = logging.getLogger(__name__)

STABILIZED_WINDOW = 5
METRIC_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class DatasetSpec:
    kind: str = "synthetic"  # "synthetic" or "vclip"
    path: str | None = None  # directory with labels.csv for kind="vclip"
    n_clips: int = 120
    synth: SynthConfig = field(default_factory=SynthConfig)
    frames: int | None = None  # temporal center-crop target; None keeps clips as-is
    resize_quarter: bool = False
    flow: FlowConfig = field(default_factory=FlowConfig)

    def __post_init__(self):
        if isinstance(self.synth, dict):
            self.synth = SynthConfig(**self.synth)
        if isinstance(self.flow, dict):
            self.flow = FlowConfig(**self.flow)
        if self.kind not in ("synthetic", "vclip"):
            raise ConfigError(f"dataset kind must be 'synthetic' or 'vclip', got {self.kind!r}")
        if self.kind == "vclip" and not self.path:
            raise ConfigError("dataset kind 'vclip' needs a path")


@dataclass
class SweepConfig:
    n_values: list[int] = field(default_factory=lambda: [1, 2, 3, 10, 20])
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    base: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "sweep_out"

    def __post_init__(self):
        if isinstance(self.dataset, dict):
            self.dataset = DatasetSpec(**self.dataset)
        if isinstance(self.base, dict):
            self.base = TrainConfig(**self.base)
        if not self.n_values:
            raise ConfigError("n_values must be nonempty")
        self.n_values = sorted(int(n) for n in self.n_values)


@dataclass
class NResult:
    n_frames: int
    metrics: list[EpochMetrics]
    confusion: ConfusionMatrix
    params: ModelParams

    @property
    def peak_val_acc(self) -> float:
        return peak(self.metrics)

    @property
    def stabilized_val_acc(self) -> float:
        return stabilized(self.metrics)


@dataclass
class SweepReport:
    results: list[NResult]
    n_train: int
    n_test: int


@dataclass(frozen=True)
class SummaryRow:
    n_frames: int
    peak_val_acc: float
    stabilized_val_acc: float
    accuracy: float


# --- config io -------------------------------------------------------------------

def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def sweep_config_from_dict(d: dict) -> SweepConfig:
    try:
        return SweepConfig(**d)
    except TypeError as exc:
        raise ConfigError(f"bad sweep config: {exc}") from exc


# --- datasets ----------------------------------------------------------------------

def read_labels(directory) -> list[tuple[str, int]]:
    directory = Path(directory)
    labels_path = directory / "labels.csv"
    if not labels_path.exists():
        raise MissingFrames(f"{labels_path} not found")
    rows = []
    with open(labels_path, newline="") as f:
        for row in csv.DictReader(f):
            try:
                label = int(row["label"])
            except (KeyError, ValueError) as exc:
                raise DataError(f"{labels_path}: bad row {row}") from exc
            if label not in (0, 1):
                raise DataError(f"{labels_path}: label must be 0 or 1, got {label}")
            rows.append((row["filename"], label))
    if not rows:
        raise DataError(f"{labels_path}: no clips listed")
    return rows


def prepare_clip(clip, spec: DatasetSpec) -> np.ndarray:
    if spec.frames is not None:
        clip = standardize_frames(clip, spec.frames)
    if spec.resize_quarter:
        clip = resize_quarter(clip)
    return clip_to_flow(clip, spec.flow)


def load_samples(spec: DatasetSpec, seed: int) -> list[Sample]:
    """Flow-encoded samples for a synthetic or on-disk dataset."""
    if spec.kind == "synthetic":
        clips = gen_dataset(spec.n_clips, spec.synth, seed)
        return [Sample(prepare_clip(lc.clip, spec), lc.label, lc.name) for lc in clips]
    directory = Path(spec.path)
    samples = []
    for name, label in read_labels(directory):
        samples.append(Sample(prepare_clip(load_clip(directory / name), spec), label, name))
    shapes = {s.x.shape for s in samples}
    if len(shapes) != 1:
        raise DataError(f"clips have differing flow shapes {sorted(shapes)}; set dataset.frames")
    return samples


# --- summaries ------------------------------------------------------------------

def peak(metrics: Sequence[EpochMetrics]) -> float:
    return max(m.val_acc for m in metrics)


def stabilized(metrics: Sequence[EpochMetrics], window: int = STABILIZED_WINDOW) -> float:
    """Mean validation accuracy over the final `window` epochs."""
    tail = [m.val_acc for m in metrics[-window:]]
    return float(np.mean(tail))


def summarize(report: SweepReport) -> list[SummaryRow]:
    return [
        SummaryRow(r.n_frames, r.peak_val_acc, r.stabilized_val_acc, r.confusion.accuracy)
        for r in report.results
    ]


# --- file outputs ------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_metrics_csv(path, metrics: Sequence[EpochMetrics]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(METRIC_FIELDS)
        for m in metrics:
            wr.writerow([m.epoch, _fmt(m.train_loss), _fmt(m.train_acc), _fmt(m.val_loss), _fmt(m.val_acc)])


def write_confusion_csv(path, cm: ConfusionMatrix) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["tp", "fp", "fn", "tn"])
        wr.writerow([cm.tp, cm.fp, cm.fn, cm.tn])


def write_summary_csv(path, rows: Sequence[SummaryRow]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["n_frames", "peak_val_acc", "stabilized_val_acc", "accuracy"])
        for r in rows:
            wr.writerow([r.n_frames, _fmt(r.peak_val_acc), _fmt(r.stabilized_val_acc), _fmt(r.accuracy)])


def accuracy_svg(metrics: Sequence[EpochMetrics], title: str) -> str:
    """Line chart of train and validation accuracy against epoch."""
    width, height = 480, 320
    left, right, top, bottom = 50, 20, 30, 40
    pw, ph = width - left - right, height - top - bottom
    n = len(metrics)

    def xy(i, acc):
        x = left + (pw * i / (n - 1) if n > 1 else pw / 2)
        y = top + ph * (1.0 - acc)
        return f"{x:.2f},{y:.2f}"

    train_pts = " ".join(xy(i, m.train_acc) for i, m in enumerate(metrics))
    val_pts = " ".join(xy(i, m.val_acc) for i, m in enumerate(metrics))
    grid = []
    for k in range(0, 11, 2):
        y = top + ph * (1 - k / 10)
        grid.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        grid.append(f'<text x="{left - 6}" y="{y + 4:.2f}" font-size="10" text-anchor="end">{k / 10:.1f}</text>')
    for i, m in enumerate(metrics):
        if n <= 10 or (i + 1) % 5 == 0 or i == 0:
            x = left + (pw * i / (n - 1) if n > 1 else pw / 2)
            grid.append(f'<text x="{x:.2f}" y="{top + ph + 14}" font-size="10" text-anchor="middle">{m.epoch}</text>')
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2}" y="18" font-size="13" text-anchor="middle">{title}</text>',
        *grid,
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{height - 6}" font-size="11" text-anchor="middle">epoch</text>',
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{train_pts}"/>',
        f'<polyline fill="none" stroke="#d62728" stroke-width="2" points="{val_pts}"/>',
        f'<text x="{left + pw - 4}" y="{top + ph - 24}" font-size="11" fill="#1f77b4" text-anchor="end">train acc</text>',
        f'<text x="{left + pw - 4}" y="{top + ph - 10}" font-size="11" fill="#d62728" text-anchor="end">val acc</text>',
        "</svg>",
        "",
    ])


def emit_curves(report: SweepReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in report.results:
        n = r.n_frames
        p = out_dir / f"metrics_N{n}.csv"
        write_metrics_csv(p, r.metrics)
        svg = out_dir / f"curve_N{n}.svg"
        svg.write_text(accuracy_svg(r.metrics, f"N = {n}: accuracy vs epoch"))
        cm = out_dir / f"confusion_N{n}.csv"
        write_confusion_csv(cm, r.confusion)
        paths += [p, svg, cm]
    summary = out_dir / "summary.csv"
    write_summary_csv(summary, summarize(report))
    paths.append(summary)
    return paths


def kernel_slice_image(slice_: np.ndarray, scale: int = 16) -> np.ndarray:
    """(3 channels, 3, 3) weights -> (3*scale, 3*scale, 3) uint8, min-max
    normalized; a constant slice maps to mid-gray 128."""
    rgb = np.asarray(slice_, dtype=np.float64).transpose(1, 2, 0)
    lo, hi = rgb.min(), rgb.max()
    if hi > lo:
        img = to_bytes((rgb - lo) / (hi - lo))
    else:
        img = np.full(rgb.shape, 128, dtype=np.uint8)
    return np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)


def export_kernel_slices(params: ModelParams, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    k = params.conv.kernels  # (F, C, N, 3, 3)
    paths = []
    for f in range(k.shape[0]):
        for n in range(k.shape[2]):
            p = out_dir / f"kernel_f{f}_t{n}.ppm"
            write_ppm(p, kernel_slice_image(k[f, :, n]))
            paths.append(p)
    return paths


# --- the sweep ------------------------------------------------------------------

def model_seed(seed: int, n_frames: int) -> int:
    return int(np.random.SeedSequence([seed, n_frames]).generate_state(1, dtype=np.uint64)[0])


def run_single(n_frames: int, train_set, test_set, base: TrainConfig) -> NResult:
    cfg = dataclasses.replace(base, n_frames=n_frames)
    params = build_model(n_frames, train_set[0].x.shape, model_seed(base.seed, n_frames))
    params, metrics = train(params, train_set, test_set, cfg)
    _, cm = evaluate(params, test_set, cfg.threshold)
    return NResult(n_frames, metrics, cm, params)


def run_sweep(cfg: SweepConfig, samples: Sequence[Sample] | None = None) -> SweepReport:
    """Train one model per temporal depth on a shared split and write every
    output under cfg.out_dir. Outputs are staged and only moved into place
    once all runs succeed."""
    if samples is None:
        samples = load_samples(cfg.dataset, cfg.base.seed)
    dims = samples[0].x.shape
    for n in cfg.n_values:
        feature_dims(n, dims)  # fail fast on invalid depths
    train_set, test_set = split_dataset(samples, cfg.base.split_frac, cfg.base.seed)

    results = []
    for n in cfg.n_values:
        log.info("training N=%d on %d clips (%d held out)", n, len(train_set), len(test_set))
        results.append(run_single(n, train_set, test_set, cfg.base))
    report = SweepReport(results, len(train_set), len(test_set))

    out_dir = Path(cfg.out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".sweep-", dir=out_dir.parent))
    try:
        emit_curves(report, staging)
        for r in results:
            save_checkpoint(staging / f"model_N{r.n_frames}.vcnn", r.params)
            export_kernel_slices(r.params, staging / f"kernels_N{r.n_frames}")
        out_dir.mkdir(parents=True, exist_ok=True)
        for item in sorted(staging.iterdir()):
            dest = out_dir / item.name
            if dest.is_dir():
                shutil.rmtree(dest)
            elif dest.exists():
                dest.unlink()
            shutil.move(str(item), str(dest))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return report
