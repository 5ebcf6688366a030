#!/usr/bin/env python3
"""Write a small synthetic RGB dataset (smooth gradients + color blobs).

Handy for smoke-testing the full pipeline without downloading anything:

    python scripts/make_toy_dataset.py --out data/toy --count 64
    fakefill prepare --data-root data/toy --val-fraction 0.25 --seed 0 --out manifest.tsv
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fakefill.data import write_toy_dataset  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--count", type=int, default=64)
    parser.add_argument("--resolution", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    names = write_toy_dataset(args.out, args.count, args.resolution, args.seed)
    print(f"wrote {len(names)} images to {args.out}")


if __name__ == "__main__":
    main()
