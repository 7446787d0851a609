"""Contact sheets comparing the expectation distribution with the
collection bias: expectation.svg (clean renders of declared-range draws)
and collected.svg (the biased handdrawn set the pipeline trains on)."""

import argparse
from pathlib import Path

from expecta.annot import Annotation, sample_expected
from expecta.config import default_config
from expecta.dataset import gen_collected
from expecta.render import GrayImage, RenderStyle, contact_sheet, render
from expecta.seeds import derive


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--profile", default="desk")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--count", type=int, default=24)
    parser.add_argument("--out", default="samples",
                        help="output directory (default: samples/)")
    return parser.parse_args()


def caption(ann):
    shape = "circle" if ann.y1 == 0 else "square"
    return f"{shape} {ann.y4 - ann.y2}px b={ann.y6}"


def main():
    args = parse_args()
    cfg = default_config(args.profile)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    style = RenderStyle.clean()
    anns = sample_expected(cfg.spec, derive(args.seed, "samples", "expected"),
                           args.count)
    sheet = contact_sheet(
        [render(a, style, canvas=cfg.canvas) for a in anns],
        captions=[caption(a) for a in anns],
        title=f"expectation draws ({args.profile})",
    )
    (out / "expectation.svg").write_text(sheet)

    collected = gen_collected(cfg.bias, args.count,
                              derive(args.seed, "samples", "collected"),
                              cfg.canvas)
    truth = [Annotation(*row) for row in collected.truth]
    sheet = contact_sheet(
        [GrayImage(px) for px in collected.images],
        captions=[caption(a) for a in truth],
        title=f"collected set ({args.profile} bias)",
    )
    (out / "collected.svg").write_text(sheet)
    print(f"wrote {out / 'expectation.svg'} and {out / 'collected.svg'}")


if __name__ == "__main__":
    main()
