"""Run the full desk-scale audit pipeline (about an hour on one core)."""

import argparse
import sys

from expecta.cli import main


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="run directory (default: runs/<stamp>-<hash>)")
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    argv = ["audit", "--profile", "desk", "--seed", str(args.seed)]
    if args.out:
        argv += ["--out", args.out]
    sys.exit(main(argv))
