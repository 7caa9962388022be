"""Write a synthetic dataset plus flow renderings of the first clip of each
label, for eyeballing what the model sees.

    python3 scripts/make_synth_dataset.py --out runs/synth --n-clips 120 --seed 0
"""

import argparse
from pathlib import Path

from flowdepth.opticalflow import clip_to_flow, flow_to_frames
from flowdepth.synthdata import SynthConfig, gen_dataset, write_dataset
from flowdepth.videoio import write_frames


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/synth")
    ap.add_argument("--n-clips", type=int, default=120)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    clips = gen_dataset(args.n_clips, SynthConfig(seed=args.seed))
    labels = write_dataset(out / "clips", clips)
    print(f"{len(clips)} clips, labels in {labels}")
    for label in (0, 1):
        lc = next(c for c in clips if c.label == label)
        write_frames(out / f"preview_label{label}" / "frames", lc.clip.data)
        write_frames(out / f"preview_label{label}" / "flow", flow_to_frames(clip_to_flow(lc.clip)))
        print(f"label {label}: {lc.name} rendered under {out / f'preview_label{label}'}")


if __name__ == "__main__":
    main()
