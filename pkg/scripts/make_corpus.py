#!/usr/bin/env python3
"""Generate a synthetic scene-text corpus (PNG images + MSRA-style .gt).

Example:
    python scripts/make_corpus.py --out data/synth --images 20 --seed 7
"""

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from textborder.annotations import write_msra
from textborder.synth import random_scene, render_scene


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--images", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--size", type=int, default=512)
    parser.add_argument("--max-boxes", type=int, default=8)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.images):
        rng = np.random.default_rng(args.seed * 100_003 + i)
        scene = random_scene(rng, size=args.size, box_count=(1, args.max_boxes))
        image = render_scene(scene, rng)
        stem = f"img{i:04d}"
        Image.fromarray(image).save(out / f"{stem}.png")
        (out / f"{stem}.gt").write_text(write_msra(scene.annotations))
    print(f"wrote {args.images} images to {out}")


if __name__ == "__main__":
    main()
