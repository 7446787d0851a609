"""Outlier-annotation detector: scoring, temperature search, partition, AUROC.

The detector renders each test annotation with the clean simulator, runs
the classifier, and takes the temperature-scaled maximum softmax
probability as the familiarity score S_i.  The temperature is picked on a
grid by minimizing (mean(S) - target)^2 - var(S): keep the mean near the
safeguard level while spreading the scores.  Ground truth for evaluation
partitions test annotations into familiar and outlier sets by per-label
support membership against the collected dataset, and AUROC measures how
well the score separates the two.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .annot import LABELS, Annotation, LabelDistribution
from .exceptions import RenderDomainError, SpecificationError
from .render import RenderStyle, render

DEFAULT_SCORE_TARGET = 0.7
DEFAULT_GRID = (1.0, 20.0, 0.25)

Renderer = Callable[[Annotation], np.ndarray]


@dataclass(frozen=True)
class ScoreRecord:
    """One scored test annotation; the score is recomputable from logits."""

    index: int
    annotation: Annotation
    logits: tuple[float, ...]
    score: float
    temperature: float


@dataclass(frozen=True)
class CalibrationResult:
    """Chosen temperature plus the full search grid.

    Each grid row is (T, mean, variance, objective) with
    objective = (mean - target)^2 - variance.
    """

    t_star: float
    target: float
    grid: tuple[tuple[float, float, float, float], ...]

    def row(self, t: float) -> tuple[float, float, float, float]:
        for entry in self.grid:
            if entry[0] == t:
                return entry
        raise SpecificationError(f"temperature {t} not on the calibration grid")

    def to_jsonable(self) -> dict:
        return {
            "t_star": self.t_star,
            "target": self.target,
            "grid": [
                {"t": t, "mean": m, "variance": v, "objective": o}
                for t, m, v, o in self.grid
            ],
        }

    @staticmethod
    def from_jsonable(obj: Mapping) -> "CalibrationResult":
        grid = tuple(
            (float(r["t"]), float(r["mean"]), float(r["variance"]), float(r["objective"]))
            for r in obj["grid"]
        )
        return CalibrationResult(float(obj["t_star"]), float(obj["target"]), grid)


@dataclass(frozen=True)
class OutlierPartition:
    """Index sets of familiar and outlier test annotations."""

    familiar: tuple[int, ...]
    outliers: tuple[int, ...]
    rule: str

    def is_familiar(self, n: int) -> np.ndarray:
        flags = np.zeros(n, dtype=bool)
        flags[list(self.familiar)] = True
        return flags


def make_clean_renderer(canvas: tuple[int, int]) -> Renderer:
    """Renderer used for scoring: deterministic clean strokes."""
    style = RenderStyle.clean()

    def _render(ann: Annotation) -> np.ndarray:
        return render(ann, style, canvas=canvas).pixels

    return _render


def temperature_grid(lo: float = 1.0, hi: float = 20.0, step: float = 0.25) -> np.ndarray:
    if step <= 0 or hi < lo or lo <= 0:
        raise SpecificationError(f"bad temperature grid ({lo}, {hi}, {step})")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _render_batch(annotations: Sequence[Annotation], renderer: Renderer) -> np.ndarray:
    images = []
    for i, ann in enumerate(annotations):
        try:
            images.append(renderer(ann))
        except RenderDomainError as exc:
            raise RenderDomainError(f"sample {i}: {exc}") from exc
    return np.stack(images)


def compute_logits(model, annotations: Sequence[Annotation], renderer: Renderer,
                   batch: int = 256) -> np.ndarray:
    """Forward all rendered annotations once; returns (n, classes) float64."""
    if len(annotations) == 0:
        raise SpecificationError("no annotations to score")
    outs = []
    for start in range(0, len(annotations), batch):
        imgs = _render_batch(annotations[start : start + batch], renderer)
        outs.append(np.asarray(model.forward(imgs), dtype=np.float64))
    return np.concatenate(outs, axis=0)


def score_from_logits(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Maximum softmax probability of logits / T, max-subtracted, float64."""
    if temperature <= 0:
        raise SpecificationError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e.max(axis=-1) / e.sum(axis=-1)


def records_from_logits(annotations: Sequence[Annotation], logits: np.ndarray,
                        temperature: float) -> list[ScoreRecord]:
    """Build score records from precomputed logits (logits are T-independent)."""
    s = score_from_logits(logits, temperature)
    return [
        ScoreRecord(i, ann, tuple(float(v) for v in logits[i]), float(s[i]), float(temperature))
        for i, ann in enumerate(annotations)
    ]


def score(model, annotations: Sequence[Annotation], renderer: Renderer,
          temperature: float = 1.0) -> list[ScoreRecord]:
    """Score each annotation by temperature-scaled max softmax."""
    logits = compute_logits(model, annotations, renderer)
    return records_from_logits(annotations, logits, temperature)


def calibrate_temperature(
    model,
    annotations: Sequence[Annotation],
    renderer: Renderer,
    target: float = DEFAULT_SCORE_TARGET,
    grid: Sequence[float] | None = None,
) -> CalibrationResult:
    """Grid search for the temperature minimizing (mean - target)^2 - var.

    Logits are computed once; ties resolve to the smallest temperature
    (the grid is scanned in ascending order).
    """
    ts = temperature_grid(*DEFAULT_GRID) if grid is None else np.sort(np.asarray(grid, dtype=np.float64))
    if ts.size == 0:
        raise SpecificationError("temperature grid is empty")
    if ts[0] <= 0:
        raise SpecificationError("temperatures must be > 0")
    logits = compute_logits(model, annotations, renderer)
    rows = []
    for t in ts:
        s = score_from_logits(logits, float(t))
        mean = float(s.mean())
        var = float(s.var())
        rows.append((float(t), mean, var, (mean - target) ** 2 - var))
    best = int(np.argmin([r[3] for r in rows]))
    return CalibrationResult(rows[best][0], float(target), tuple(rows))


def partition_outliers(
    annotations: Sequence[Annotation], collected_support: LabelDistribution
) -> OutlierPartition:
    """Split test annotations into familiar and outlier sets.

    An annotation is familiar iff, conditioned on its class, every label
    y2..y6 falls in an occupied bin of the collected per-label support.
    A support with no classes at all makes everything an outlier; a
    support that knows some classes but not an annotation's class is a
    specification error.
    """
    rule = (
        "familiar iff every label y2..y6 lies in an occupied bin of the "
        "collected per-class marginal support"
    )
    familiar: list[int] = []
    outliers: list[int] = []
    known = collected_support.classes()
    for i, ann in enumerate(annotations):
        if not known:
            outliers.append(i)
            continue
        if ann.y1 not in known:
            raise SpecificationError(
                f"class {ann.y1} missing from the collected support"
            )
        ok = all(
            collected_support.get(ann.y1, j).contains(ann.label_value(j))
            for j in LABELS
        )
        (familiar if ok else outliers).append(i)
    return OutlierPartition(tuple(familiar), tuple(outliers), rule)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    n = len(values)
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_vals[1:] != sorted_vals[:-1]
    group = np.cumsum(boundary) - 1
    base = np.arange(1, n + 1, dtype=np.float64)
    mean_rank = np.bincount(group, weights=base) / np.bincount(group)
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = mean_rank[group]
    return ranks


def auroc(scores: Sequence[float], is_familiar: Sequence[bool]) -> float:
    """Probability a random familiar sample outscores a random outlier.

    Rank-based (Mann-Whitney) computation; ties count one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_familiar, dtype=bool)
    if s.shape != pos.shape or s.ndim != 1:
        raise SpecificationError("scores and flags must be matching 1-d sequences")
    n_pos = int(pos.sum())
    n_neg = int(len(pos) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SpecificationError("AUROC needs both familiar and outlier samples")
    ranks = _average_ranks(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def save_scores_csv(records: Sequence[ScoreRecord], path,
                    familiar: Sequence[bool] | None = None) -> None:
    """Write scores.csv; the familiar column is empty when no partition is given."""
    if familiar is not None and len(familiar) != len(records):
        raise SpecificationError("familiar flags do not match the records")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["index", "y1", "y2", "y3", "y4", "y5", "y6",
             "logit0", "logit1", "t", "score", "familiar"]
        )
        for i, rec in enumerate(records):
            flag = "" if familiar is None else int(bool(familiar[i]))
            writer.writerow(
                [rec.index, *rec.annotation.astuple(),
                 repr(rec.logits[0]), repr(rec.logits[1]),
                 repr(rec.temperature), repr(rec.score), flag]
            )


def load_scores_csv(path) -> tuple[list[ScoreRecord], list[bool] | None]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        records = []
        flags: list[bool] = []
        has_flags = True
        for row in reader:
            ann = Annotation(*(int(row[f"y{j}"]) for j in range(1, 7)))
            records.append(
                ScoreRecord(
                    int(row["index"]), ann,
                    (float(row["logit0"]), float(row["logit1"])),
                    float(row["score"]), float(row["t"]),
                )
            )
            if row["familiar"] == "":
                has_flags = False
            else:
                flags.append(bool(int(row["familiar"])))
    return records, (flags if has_flags and records else None)


def save_calibration_json(result: CalibrationResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.to_jsonable(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_calibration_json(path) -> CalibrationResult:
    with open(path) as fh:
        return CalibrationResult.from_jsonable(json.load(fh))
