"""Report assembly: summary JSON, overlap table, SVG figure panels."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .annot import LABELS, BinnedSupport, LabelDistribution
from .nn.model import make_arch
from .svgplot import PALETTE, bar_chart_svg, hist_counts, hist_grid_svg, table_svg

LABEL_NAMES = {2: "y2 (left)", 3: "y3 (top)", 4: "y4 (right)", 5: "y5 (bottom)", 6: "y6 (brightness)"}
CLASS_NAMES = {0: "circle", 1: "square"}


def dump_json(obj, path) -> None:
    """Canonical JSON artifact: sorted keys, trailing newline, no timestamps."""
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _support_series(sup: BinnedSupport, label: str, color: str):
    counts = np.asarray(sup.counts, dtype=np.float64)
    if counts.size == 0:
        counts = np.zeros(1)
        edges = np.array([sup.origin, sup.origin + sup.bin_width])
    else:
        edges = sup.origin + sup.bin_width * np.arange(counts.size + 1)
    return (label, color, edges, counts)


def _dist_panels(dists: list[tuple[str, str, LabelDistribution]], classes, value_ranges):
    """Panel grid rows (one per class) of per-label overlaid histograms."""
    rows = []
    for k in classes:
        row = []
        for j in LABELS:
            series = []
            for name, color, dist in dists:
                if dist.has_class(k):
                    series.append(_support_series(dist.get(k, j), name, color))
            row.append((f"{CLASS_NAMES.get(k, k)} {LABEL_NAMES[j]}", series, value_ranges[j]))
        rows.append(row)
    return rows


def _value_ranges(canvas):
    w, h = canvas
    side = max(w, h)
    return {2: (0, side), 3: (0, side), 4: (0, side), 5: (0, side), 6: (0, 256)}


def expectation_vs_collected_svg(expected: LabelDistribution, collected: LabelDistribution,
                                 canvas) -> str:
    classes = collected.classes()
    rows = _dist_panels(
        [("collected P_S", PALETTE["collected"], collected),
         ("expectation P_T", PALETTE["expected"], expected)],
        classes, _value_ranges(canvas),
    )
    return hist_grid_svg(
        "Expectation vs collected label distributions",
        rows,
        [("collected P_S", PALETTE["collected"]), ("expectation P_T", PALETTE["expected"])],
    )


def representation_svg(expected: LabelDistribution, collected: LabelDistribution,
                       estimate: LabelDistribution, canvas) -> str:
    classes = collected.classes()
    rows = _dist_panels(
        [("collected P_S", PALETTE["collected"], collected),
         ("expectation P_T", PALETTE["expected"], expected),
         ("estimate P+_T", PALETTE["estimate"], estimate)],
        classes, _value_ranges(canvas),
    )
    return hist_grid_svg(
        "Marginal sample representation vs expectation and collected data",
        rows,
        [("collected P_S", PALETTE["collected"]),
         ("expectation P_T", PALETTE["expected"]),
         ("estimate P+_T", PALETTE["estimate"])],
    )


def score_spread_svg(scores_t1, scores_tstar, t_star: float, target: float) -> str:
    e1, c1 = hist_counts(scores_t1, 0.5, 1.0, 25)
    e2, c2 = hist_counts(scores_tstar, 0.5, 1.0, 25)
    panel = (
        "max-softmax score distribution",
        [("T = 1", PALETTE["t1"], e1, c1.astype(float)),
         (f"T* = {t_star:g}", PALETTE["tstar"], e2, c2.astype(float))],
        (0.5, 1.0),
    )
    return hist_grid_svg(
        f"Score spread before and after temperature scaling (target {target:g})",
        [[panel]],
        [("T = 1", PALETTE["t1"]), (f"T* = {t_star:g}", PALETTE["tstar"])],
        panel_size=(460, 240),
    )


def auroc_by_arch_svg(arch_names, auroc_t1, auroc_tstar) -> str:
    return bar_chart_svg(
        "Outlier-detection AUROC per architecture",
        list(arch_names),
        [("T = 1", PALETTE["t1"], auroc_t1), ("T*", PALETTE["tstar"], auroc_tstar)],
        ylabel="AUROC",
        y_range=(0.0, 1.0),
        baseline=0.5,
    )


def incidence_svg(arch_names, incidences) -> str:
    """incidences[arch] = {label j: fraction of phi_j >= 0}."""
    series = []
    colors = [PALETTE["collected"], PALETTE["expected"], PALETTE["estimate"],
              PALETTE["t1"], "#b47cc7"]
    for idx, j in enumerate(LABELS):
        series.append(
            (LABEL_NAMES[j], colors[idx % len(colors)],
             [incidences[a][j] for a in arch_names])
        )
    return bar_chart_svg(
        "Incidence of non-negative attributions per label",
        list(arch_names),
        series,
        ylabel="fraction phi_j >= 0",
        y_range=(0.0, 1.0),
        size=(720, 300),
    )


def overlap_table_rows(cfg, arch_tables: dict, expected_table: dict) -> list[dict]:
    """Row dicts for the overlap table; baseline first, then per arch x T."""
    rows = [{
        "arch": "expectation",
        "temperature": "",
        "v": expected_table["expected"],
        "mean": expected_table["expected_mean"],
    }]
    for name in cfg.archs:
        for t_key in ("1", "t_star"):
            table = arch_tables[name][t_key]
            rows.append({
                "arch": name,
                "temperature": t_key if t_key == "1" else f"t_star={table['t']:g}",
                "v": table["estimated"],
                "mean": table["estimated_mean"],
            })
    return rows


def write_overlap_table(rows: list[dict], classes, out_dir: Path) -> None:
    dump_json({"labels": list(LABELS), "rows": rows}, out_dir / "overlap_table.json")
    headers = ["arch", "temperature"]
    for k in classes:
        for j in LABELS:
            headers.append(f"v_c{k}_y{j}")
    headers.append("mean")
    with open(out_dir / "overlap_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for row in rows:
            cells = [row["arch"], row["temperature"]]
            for k in classes:
                for j in LABELS:
                    v = row["v"].get(str(k), {}).get(str(j))
                    cells.append("" if v is None else repr(float(v)))
            cells.append(repr(float(row["mean"])))
            writer.writerow(cells)
    svg_rows = []
    for row in rows:
        cells = [row["arch"], row["temperature"]]
        for k in classes:
            for j in LABELS:
                v = row["v"].get(str(k), {}).get(str(j))
                cells.append("-" if v is None else f"{float(v):+.3f}")
        cells.append(f"{float(row['mean']):+.3f}")
        svg_rows.append(cells)
    svg_headers = ["arch", "T"] + [f"c{k}:y{j}" for k in classes for j in LABELS] + ["mean"]
    with open(out_dir / "overlap_table.svg", "w") as fh:
        fh.write(table_svg("Support overlap against the collected dataset", svg_headers, svg_rows))


def deepest_arch(cfg) -> str:
    return max(cfg.archs, key=lambda n: make_arch(n, cfg.canvas).layer_count())


def shallowest_arch(cfg) -> str:
    return min(cfg.archs, key=lambda n: make_arch(n, cfg.canvas).layer_count())
