"""Exact Shapley attribution of detector scores to annotation labels.

Each of the five labels y2..y6 is a player; the class label y1 is held
fixed so attributions stay conditioned on the class.  With only five
players the 2^5 coalitions are enumerated exactly: masked labels are
replaced by draws from the expectation distribution, composites are
projected back to valid square boxes, and coalition values average the
detector score over the background draws.  Non-negative attributions
then select which test labels the dataset apparently covers: the
marginal representation, audited against the collected distribution by
the support-overlap index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from math import factorial
from typing import Callable, Mapping, Sequence

import numpy as np

from .annot import (
    LABELS,
    Annotation,
    ExpectationSpec,
    LabelDistribution,
    estimate_support,
    mean_overlap,
    per_label_overlap,
    sample_expected,
)
from .dataset import Dataset
from .detector import Renderer, make_clean_renderer, score_from_logits
from .exceptions import SpecificationError
from .seeds import as_generator, spawn

# All 32 coalitions over the five attributable labels, enumerated small to
# large so the empty and full coalitions sit at the ends.
COALITIONS: tuple[frozenset, ...] = tuple(
    frozenset(c) for r in range(6) for c in combinations(LABELS, r)
)

_FULL = frozenset(LABELS)


@dataclass(frozen=True)
class AttributionRecord:
    """Shapley decomposition of one test sample's score.

    phis follows the label order (y2..y6); additivity guarantees
    phi0 + sum(phis) equals the achieved score up to float error.
    """

    index: int
    phi0: float
    phis: tuple[float, float, float, float, float]
    score: float

    def phi(self, j: int) -> float:
        return self.phis[LABELS.index(j)]

    @property
    def additivity_gap(self) -> float:
        return abs(self.score - self.phi0 - sum(self.phis))


@dataclass(frozen=True)
class MaskingPolicy:
    """How masked labels are filled in: background draws from the expectation."""

    spec: ExpectationSpec
    background_count: int = 8

    def __post_init__(self):
        if self.background_count < 1:
            raise SpecificationError("background_count must be >= 1")

    def to_jsonable(self) -> dict:
        return {
            "spec": self.spec.to_jsonable(),
            "background_count": self.background_count,
        }

    @staticmethod
    def from_jsonable(obj: Mapping) -> "MaskingPolicy":
        return MaskingPolicy(
            ExpectationSpec.from_jsonable(obj["spec"]), int(obj["background_count"])
        )


def project_valid(values: Sequence[int], canvas: tuple[int, int]) -> Annotation:
    """Deterministic, idempotent projection of raw label values to a valid box.

    Corners are ordered per axis, clamped to the canvas, forced to span at
    least one pixel, then squared by shrinking the longer axis toward its
    top-left corner; brightness clamps to [1, 255].
    """
    y1, y2, y3, y4, y5, y6 = (int(v) for v in values)
    w, h = canvas
    x_lo, x_hi = sorted((y2, y4))
    y_lo, y_hi = sorted((y3, y5))
    x_lo = min(max(x_lo, 0), w - 1)
    y_lo = min(max(y_lo, 0), h - 1)
    x_hi = min(max(x_hi, x_lo + 1), w)
    y_hi = min(max(y_hi, y_lo + 1), h)
    side = min(x_hi - x_lo, y_hi - y_lo)
    return Annotation(y1, x_lo, y_lo, x_lo + side, y_lo + side, min(max(y6, 1), 255))


def compose(ann: Annotation, background: Annotation, coalition: frozenset,
            canvas: tuple[int, int]) -> Annotation:
    """Composite annotation: coalition labels kept, the rest from the background.

    The class label always comes from ann; the result is projected valid.
    """
    values = [ann.y1] + [
        ann.label_value(j) if j in coalition else background.label_value(j)
        for j in LABELS
    ]
    return project_valid(values, canvas)


def _shapley_weights() -> dict[int, float]:
    # weight for adding player j to a coalition of size s (of the other 4)
    return {s: factorial(s) * factorial(4 - s) / factorial(5) for s in range(5)}


def shapley_from_game(game: Mapping[frozenset, float]) -> tuple[float, dict[int, float]]:
    """Exact Shapley values from a full table of coalition values.

    Returns (phi0, {label: phi}) with phi0 = v(empty); the weighted
    marginal contributions satisfy phi0 + sum(phi) = v(full) exactly.
    """
    missing = [c for c in COALITIONS if c not in game]
    if missing:
        raise SpecificationError(f"game table is missing {len(missing)} coalitions")
    weights = _shapley_weights()
    phi0 = float(game[frozenset()])
    phis: dict[int, float] = {}
    for j in LABELS:
        others = [k for k in LABELS if k != j]
        total = 0.0
        for r in range(5):
            for rest in combinations(others, r):
                coalition = frozenset(rest)
                total += weights[r] * (
                    game[coalition | {j}] - game[coalition]
                )
        phis[j] = total
    return phi0, phis


def _backgrounds(policy: MaskingPolicy, ann: Annotation, seed) -> list[Annotation]:
    # draws share the sample's class so composites stay class-conditioned
    rng = as_generator(seed)
    spec = policy.spec.restricted(ann.y1)
    return sample_expected(spec, rng, policy.background_count)


def shapley_exact(
    value_fn: Callable[[Annotation], float],
    ann: Annotation,
    policy: MaskingPolicy,
    seed,
) -> AttributionRecord:
    """Exact Shapley attribution of value_fn over the five labels of ann.

    For each coalition the value is the mean of value_fn over composites
    built from policy.background_count background draws; the full
    coalition is evaluated once on ann itself.
    """
    backgrounds = _backgrounds(policy, ann, seed)
    canvas = policy.spec.canvas
    game: dict[frozenset, float] = {}
    for coalition in COALITIONS:
        if coalition == _FULL:
            game[coalition] = float(value_fn(ann))
        else:
            vals = [
                float(value_fn(compose(ann, bg, coalition, canvas)))
                for bg in backgrounds
            ]
            game[coalition] = float(np.mean(vals))
    phi0, phis = shapley_from_game(game)
    return AttributionRecord(
        0, phi0, tuple(phis[j] for j in LABELS), game[_FULL]
    )


def _stratified_subset(annotations: Sequence[Annotation], size: int, seed) -> list[int]:
    """Class-proportional sample of annotation indices, ascending."""
    n = len(annotations)
    if size >= n:
        return list(range(n))
    rng = spawn(seed, "subset")
    by_class: dict[int, list[int]] = {}
    for i, ann in enumerate(annotations):
        by_class.setdefault(ann.y1, []).append(i)
    classes = sorted(by_class)
    chosen: list[int] = []
    remaining = size
    for pos, k in enumerate(classes):
        quota = round(size * len(by_class[k]) / n)
        if pos == len(classes) - 1:
            quota = remaining
        quota = min(quota, len(by_class[k]), remaining)
        picked = rng.choice(len(by_class[k]), size=quota, replace=False)
        chosen.extend(by_class[k][i] for i in sorted(picked))
        remaining -= quota
    return sorted(chosen)


def attribute_testset_multi(
    model,
    temperatures: Sequence[float],
    testset: Dataset,
    policy: MaskingPolicy,
    seed: int,
    subset_size: int | None = None,
    renderer: Renderer | None = None,
    batch: int = 256,
) -> dict[float, list[AttributionRecord]]:
    """Shapley-attribute detector scores over (a stratified subset of) a test set.

    The value function is the temperature-scaled max-softmax score of the
    cleanly rendered composite.  Per sample, the 31 proper coalitions x B
    backgrounds plus the sample itself are rendered and forwarded in one
    batch, then folded into coalition means.  Composite logits do not
    depend on the temperature, so attributions at several temperatures
    share a single render/forward pass.
    """
    if not temperatures:
        raise SpecificationError("at least one temperature is required")
    if any(t <= 0 for t in temperatures):
        raise SpecificationError(f"temperatures must be > 0, got {temperatures}")
    annotations = testset.annotations()
    if not annotations:
        raise SpecificationError("test set is empty")
    canvas = policy.spec.canvas
    if renderer is None:
        renderer = make_clean_renderer(canvas)
    indices = (
        list(range(len(annotations)))
        if subset_size is None
        else _stratified_subset(annotations, subset_size, seed)
    )
    proper = [c for c in COALITIONS if c != _FULL]
    out: dict[float, list[AttributionRecord]] = {float(t): [] for t in temperatures}
    for orig in indices:
        ann = annotations[orig]
        backgrounds = _backgrounds(policy, ann, spawn(seed, "bg", orig))
        composites = [ann] + [
            compose(ann, bg, coalition, canvas)
            for coalition in proper
            for bg in backgrounds
        ]
        images = np.stack([renderer(a) for a in composites])
        logits = np.concatenate(
            [
                np.asarray(model.forward(images[i : i + batch]), dtype=np.float64)
                for i in range(0, len(images), batch)
            ]
        )
        for t in out:
            values = score_from_logits(logits, t)
            game = {_FULL: float(values[0])}
            means = values[1:].reshape(len(proper), len(backgrounds)).mean(axis=1)
            for coalition, v in zip(proper, means):
                game[coalition] = float(v)
            phi0, phis = shapley_from_game(game)
            out[t].append(
                AttributionRecord(orig, phi0, tuple(phis[j] for j in LABELS), game[_FULL])
            )
    return out


def attribute_testset(
    model,
    temperature: float,
    testset: Dataset,
    policy: MaskingPolicy,
    seed: int,
    subset_size: int | None = None,
    renderer: Renderer | None = None,
    batch: int = 256,
) -> list[AttributionRecord]:
    """Single-temperature convenience wrapper over attribute_testset_multi."""
    result = attribute_testset_multi(
        model, [temperature], testset, policy, seed, subset_size, renderer, batch
    )
    return result[float(temperature)]


def marginal_representation(
    records: Sequence[AttributionRecord],
    annotations: Sequence[Annotation],
    k: int,
    bin_width: float = 1.0,
    min_count: int = 1,
) -> LabelDistribution:
    """Distribution of class-k test labels whose attribution is non-negative.

    Per label j the support collects values with phi_j >= 0; a label where
    every attribution is negative yields an empty support (reported as-is,
    maximal disagreement under the overlap index).
    """
    class_records = [r for r in records if annotations[r.index].y1 == k]
    if not class_records:
        raise SpecificationError(f"no attribution records for class {k}")
    supports = {}
    for j in LABELS:
        vals = [
            annotations[r.index].label_value(j)
            for r in class_records
            if r.phi(j) >= 0
        ]
        supports[(k, j)] = estimate_support(vals, bin_width, min_count, label=j)
    return LabelDistribution(supports, len(class_records))


def merge_distributions(parts: Sequence[LabelDistribution]) -> LabelDistribution:
    """Union of per-class distributions into one table."""
    supports = {}
    for part in parts:
        for key, sup in part.supports.items():
            if key in supports:
                raise SpecificationError(f"duplicate entry for class/label {key}")
            supports[key] = sup
    return LabelDistribution(supports, sum(p.n for p in parts))


def nonnegative_incidence(
    records: Sequence[AttributionRecord],
) -> dict[int, float]:
    """Fraction of samples with phi_j >= 0, per label."""
    if not records:
        raise SpecificationError("no attribution records")
    return {
        j: float(np.mean([r.phi(j) >= 0 for r in records])) for j in LABELS
    }


def audit_overlap(
    p_plus: LabelDistribution,
    collected: LabelDistribution,
    expected: LabelDistribution | None = None,
) -> dict:
    """Per-class, per-label overlap of the estimate against the collected data.

    When the expectation distribution is given its rows are included as
    the baseline the estimate should improve on.
    """
    def rows(candidate: LabelDistribution) -> dict:
        table = {}
        for k in collected.classes():
            if candidate.has_class(k):
                table[str(k)] = {
                    str(j): v for j, v in per_label_overlap(collected, candidate, k).items()
                }
        if not table:
            raise SpecificationError("no common classes between distributions")
        return table

    result = {
        "labels": list(LABELS),
        "estimated": rows(p_plus),
        "estimated_mean": mean_overlap(collected, p_plus),
    }
    if expected is not None:
        result["expected"] = rows(expected)
        result["expected_mean"] = mean_overlap(collected, expected)
    return result


def save_attributions_csv(records: Sequence[AttributionRecord],
                          annotations: Sequence[Annotation], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["index", "y2", "y3", "y4", "y5", "y6",
             "phi0", "phi2", "phi3", "phi4", "phi5", "phi6", "score"]
        )
        for rec in records:
            ann = annotations[rec.index]
            writer.writerow(
                [rec.index, *(ann.label_value(j) for j in LABELS),
                 repr(rec.phi0), *(repr(p) for p in rec.phis), repr(rec.score)]
            )


def load_attributions_csv(path) -> list[AttributionRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                AttributionRecord(
                    int(row["index"]),
                    float(row["phi0"]),
                    tuple(float(row[f"phi{j}"]) for j in LABELS),
                    float(row["score"]),
                )
            )
    return records
