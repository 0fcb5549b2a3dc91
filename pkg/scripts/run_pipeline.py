#!/usr/bin/env python3
"""Run the label -> simulate -> decode -> evaluate chain on a corpus.

Example:
    python scripts/make_corpus.py --out /tmp/synth --images 20
    python scripts/run_pipeline.py --dataset /tmp/synth --out /tmp/run \\
        --noise-sigma-score 0.1 --noise-dropout 0.05 --noise-sigma-dist 2
"""

import argparse
import sys

from textborder.cli import run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--format", default="msra",
                        choices=("msra", "icdar13", "icdar17"))
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--noise-sigma-score", type=float, default=0.0)
    parser.add_argument("--noise-sigma-dist", type=float, default=0.0)
    parser.add_argument("--noise-dropout", type=float, default=0.0)
    parser.add_argument("--noise-blur", type=float, default=1.0)
    parser.add_argument("--iou-threshold", type=float, default=0.5)
    parser.add_argument("--overlay", action="store_true")
    args = parser.parse_args()

    base = args.out.rstrip("/")
    seed, jobs = str(args.seed), str(args.jobs)
    stages = [
        ["labels", "--dataset", args.dataset, "--format", args.format,
         "--out", f"{base}/labels", "--seed", seed, "--jobs", jobs],
        ["simulate", "--labels", f"{base}/labels", "--out", f"{base}/preds",
         "--seed", seed, "--jobs", jobs,
         "--noise-sigma-score", str(args.noise_sigma_score),
         "--noise-sigma-dist", str(args.noise_sigma_dist),
         "--noise-dropout", str(args.noise_dropout),
         "--noise-blur", str(args.noise_blur)],
        ["decode", "--preds", f"{base}/preds", "--dataset", args.dataset,
         "--out", f"{base}/dets", "--jobs", jobs]
        + (["--overlay"] if args.overlay else []),
        ["evaluate", "--dataset", args.dataset, "--format", args.format,
         "--dets", f"{base}/dets", "--out", f"{base}/report",
         "--iou-threshold", str(args.iou_threshold)],
    ]
    for stage in stages:
        code = run(stage)
        if code != 0:
            print(f"stage {stage[0]} failed with exit code {code}",
                  file=sys.stderr)
            sys.exit(code)


if __name__ == "__main__":
    main()
