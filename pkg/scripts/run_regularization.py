"""Sweep batch-norm and dropout variants over the desk architectures.

Needs a desk run directory that already has datasets (gen stage); writes
experiment/regularization.csv and comparison charts next to it.
"""

import argparse
import sys

from expecta.cli import main


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True,
                        help="existing desk run directory (from run_desk_audit.py)")
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    sys.exit(main([
        "experiment-regularization", "--profile", "desk",
        "--seed", str(args.seed), "--out", args.out,
    ]))
