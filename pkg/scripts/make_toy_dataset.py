#!/usr/bin/env python3
"""Generate the two-class toy corpus: band-limited noise bursts + click trains.

Writes WAV clips, a JSONL manifest (last two clips of each class held out as
the test split), and a ready-to-run config YAML.
"""

import argparse
from pathlib import Path

from simsynth.toydata import make_toy_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="corpus directory to create")
    parser.add_argument("--clips", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0x70D)
    args = parser.parse_args()
    config = make_toy_corpus(args.out, n_clips=args.clips, seed=args.seed)
    print(f"corpus under {args.out}; run the pipeline with --config {config}")


if __name__ == "__main__":
    main()
