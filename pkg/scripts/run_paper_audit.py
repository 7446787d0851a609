"""Run the full-scale audit: 50k collected images, five architectures,
five repeats each.  Expect days of CPU time; use run_desk_audit.py for a
same-shape result in about an hour."""

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
    argv = ["audit", "--profile", "paper", "--seed", str(args.seed)]
    if args.out:
        argv += ["--out", args.out]
    sys.exit(main(argv))
