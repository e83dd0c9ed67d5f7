#!/usr/bin/env python3
"""End-to-end toy experiment: corpus, training, finetune, sweep, evaluation.

Roughly two minutes on one CPU.  Artifacts land under <out>/work: the two
checkpoints, loss histories, a controllability sweep with its exponential
fit, the reconstruction report, and per-class score densities.
"""

import argparse
import sys
from pathlib import Path

from simsynth.cli import main as simsynth
from simsynth.toydata import make_toy_corpus

STAGES = (
    ["features"],
    ["embed"],
    ["stats"],
    ["train"],
    ["finetune"],
    ["synth", "--reference", "burst_00", "--similarity", "0.0,1.0"],
    ["sweep", "--reference", "burst_00", "--channel", "0", "--steps", "20"],
    ["evaluate"],
    ["kde"],
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="corpus/run directory")
    parser.add_argument("--keep-corpus", action="store_true",
                        help="reuse an existing corpus instead of rewriting it")
    args = parser.parse_args()
    config = args.out / "config.yaml"
    if not (args.keep_corpus and config.is_file()):
        config = make_toy_corpus(args.out)
    for stage in STAGES:
        print(f"== {' '.join(stage)}", flush=True)
        code = simsynth([*stage, "--config", str(config)])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
