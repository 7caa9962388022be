"""Run the N sweep on synthetic clips and print the summary table.

    python3 scripts/run_temporal_sweep.py --seed 0 --out runs/sweep_seed0
"""

import argparse
import logging
import time

from flowdepth import harness


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--n-values", default="1,2,3,10,20")
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = harness.SweepConfig(
        n_values=[int(v) for v in args.n_values.split(",")],
        base=harness.TrainConfig(epochs=args.epochs, seed=args.seed),
        out_dir=args.out,
    )
    start = time.perf_counter()
    report = harness.run_sweep(cfg)
    print(f"train {report.n_train} / test {report.n_test} clips, {time.perf_counter() - start:.1f}s")
    print(f"{'N':>3}  {'peak':>7}  {'stable':>7}  {'final':>7}")
    for row in harness.summarize(report):
        print(f"{row.n_frames:>3}  {row.peak_val_acc:7.4f}  {row.stabilized_val_acc:7.4f}  {row.accuracy:7.4f}")
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
