"""Command-line entry point: synth, flow, train, sweep, eval, kernels.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, FlowDepthError
from .model import TrainConfig, evaluate, load_checkpoint, save_checkpoint, split_dataset
from .opticalflow import FlowConfig, clip_to_flow, flow_to_frames
from .synthdata import SynthConfig, gen_dataset, write_dataset
from .videoio import load_clip, resize_quarter, write_frames

log = logging.getLogger("flowdepth")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def _add_synth_args(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--n-clips", type=int)
    g.add_argument("--frames", type=int, help="frames per synthetic clip")
    g.add_argument("--height", type=int)
    g.add_argument("--width", type=int)
    g.add_argument("--n-blobs", type=int)
    g.add_argument("--speed", type=float)
    g.add_argument("--reversal-period", type=int)
    g.add_argument("--noise-sigma", type=float)


def _add_flow_args(p):
    g = p.add_argument_group("optical flow")
    g.add_argument("--window", type=int)
    g.add_argument("--det-epsilon", type=float)
    g.add_argument("--v-max", type=float)


def _add_data_args(p):
    g = p.add_argument_group("dataset")
    g.add_argument("--data", help="directory with labels.csv and clips; omit for synthetic data")
    g.add_argument("--clip-frames", type=int, help="center-crop every clip to this many frames")
    g.add_argument("--resize-quarter", action="store_true", default=None)
    _add_synth_args(p)
    _add_flow_args(p)


def _add_train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--split-frac", type=float)
    g.add_argument("--threshold", type=float)
    g.add_argument("--lr", type=float)


def _override(d: dict, **kw) -> dict:
    d = dict(d)
    for k, v in kw.items():
        if v is not None:
            d[k] = v
    return d


def _sweep_config(args) -> harness.SweepConfig:
    doc = _load_config(getattr(args, "config", None))
    ds = dict(doc.get("dataset", {}))
    ds["synth"] = _override(ds.get("synth", {}), frames=args.frames, height=args.height, width=args.width,
                            n_blobs=args.n_blobs, speed=args.speed, reversal_period=args.reversal_period,
                            noise_sigma=args.noise_sigma)
    ds["flow"] = _override(ds.get("flow", {}), window=args.window, det_epsilon=args.det_epsilon, v_max=args.v_max)
    ds = _override(ds, n_clips=args.n_clips, frames=args.clip_frames, resize_quarter=args.resize_quarter)
    if args.data:
        ds.update(kind="vclip", path=args.data)

    base = dict(doc.get("base", {}))
    base["adam"] = _override(base.get("adam", {}), alpha=args.lr)
    base = _override(base, epochs=args.epochs, batch_size=args.batch_size, split_frac=args.split_frac,
                     threshold=args.threshold, seed=args.seed, n_frames=getattr(args, "n_frames", None))

    top = _override({k: v for k, v in doc.items() if k not in ("dataset", "base")},
                    n_values=getattr(args, "n_values", None), out_dir=getattr(args, "out", None))
    try:
        return harness.SweepConfig(
            dataset=harness.DatasetSpec(**ds),
            base=TrainConfig(**base),
            **top,
        )
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc


# --- subcommands ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SynthConfig(**_override({}, frames=args.frames, height=args.height, width=args.width,
                                  n_blobs=args.n_blobs, speed=args.speed, reversal_period=args.reversal_period,
                                  noise_sigma=args.noise_sigma, seed=args.seed))
    clips = gen_dataset(args.n_clips or 120, cfg, args.seed)
    path = write_dataset(args.out, clips)
    print(f"wrote {len(clips)} clips and {path}")
    return 0


def cmd_flow(args) -> int:
    fcfg = FlowConfig(**_override({}, window=args.window, det_epsilon=args.det_epsilon, v_max=args.v_max))
    clip = load_clip(args.clip)
    if args.resize_quarter:
        clip = resize_quarter(clip)
    flow = clip_to_flow(clip, fcfg)
    paths = write_frames(args.out, flow_to_frames(flow))
    print(f"wrote {len(paths)} flow frames to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _sweep_config(args)
    samples = harness.load_samples(cfg.dataset, cfg.base.seed)
    train_set, test_set = split_dataset(samples, cfg.base.split_frac, cfg.base.seed)
    result = harness.run_single(cfg.base.n_frames, train_set, test_set, cfg.base)
    report = harness.SweepReport([result], len(train_set), len(test_set))
    out = Path(cfg.out_dir)
    harness.emit_curves(report, out)
    save_checkpoint(out / f"model_N{result.n_frames}.vcnn", result.params)
    print(f"N={result.n_frames} peak={result.peak_val_acc:.6f} stabilized={result.stabilized_val_acc:.6f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _sweep_config(args)
    report = harness.run_sweep(cfg)
    print("n_frames,peak_val_acc,stabilized_val_acc,accuracy")
    for row in harness.summarize(report):
        print(f"{row.n_frames},{row.peak_val_acc:.6f},{row.stabilized_val_acc:.6f},{row.accuracy:.6f}")
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    cfg = _sweep_config(args)
    samples = harness.load_samples(cfg.dataset, cfg.base.seed)
    if args.split == "test":
        _, samples = split_dataset(samples, cfg.base.split_frac, cfg.base.seed)
    acc, cm = evaluate(params, samples, cfg.base.threshold)
    print(f"accuracy={acc:.6f} tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        harness.write_confusion_csv(args.out, cm)
    return 0


def cmd_kernels(args) -> int:
    params = load_checkpoint(args.checkpoint)
    paths = harness.export_kernel_slices(params, args.out)
    print(f"wrote {len(paths)} kernel slices to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowdepth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset (.vclip + labels.csv)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_synth_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("flow", help="write a clip's encoded optical flow as PPM frames")
    p.add_argument("clip", help=".vclip file or directory of frame_NNNN.ppm")
    p.add_argument("--out", required=True)
    p.add_argument("--resize-quarter", action="store_true")
    _add_flow_args(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("train", help="train a single temporal depth N")
    p.add_argument("--config")
    p.add_argument("--n-frames", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    _add_data_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run the full N sweep")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-values", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--out")
    _add_data_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--out", help="optional confusion CSV path")
    _add_data_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kernels", help="export conv kernel slices as PPM images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kernels)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FlowDepthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
