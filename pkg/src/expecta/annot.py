"""Annotation space, expectation distributions, support estimation, overlap index.

An annotation is the 6-d label vector (class, square bounding box, mean
stroke brightness).  The expectation distribution is declared as uniform
integer ranges; empirical label distributions are 1-unit histograms whose
occupied bins form the support sets compared by the overlap index.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import SpecificationError, UndefinedOverlapError
from .seeds import as_generator

# attributable labels: y2..y5 bbox corners, y6 brightness (y1 is the class)
LABELS = (2, 3, 4, 5, 6)


@dataclass(frozen=True)
class Annotation:
    """6-d label vector.

    y1 is the class (0 circle, 1 square), (y2, y3) the top-left corner,
    (y4, y5) the exclusive bottom-right corner, y6 the mean stroke
    brightness.  The box is square: y4 - y2 = y5 - y3.
    """

    y1: int
    y2: int
    y3: int
    y4: int
    y5: int
    y6: int

    def __post_init__(self):
        for name in ("y1", "y2", "y3", "y4", "y5", "y6"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.y2 < 0 or self.y3 < 0:
            raise SpecificationError(f"negative top-left corner in {self.astuple()}")
        if not (self.y2 < self.y4 and self.y3 < self.y5):
            raise SpecificationError(f"degenerate bounding box in {self.astuple()}")
        if self.y4 - self.y2 != self.y5 - self.y3:
            raise SpecificationError(f"bounding box not square in {self.astuple()}")
        if not 1 <= self.y6 <= 255:
            raise SpecificationError(f"brightness {self.y6} outside [1, 255]")

    def size(self) -> int:
        return self.y4 - self.y2

    def astuple(self) -> tuple[int, int, int, int, int, int]:
        return (self.y1, self.y2, self.y3, self.y4, self.y5, self.y6)

    def label_value(self, j: int) -> int:
        if j not in (1,) + LABELS:
            raise SpecificationError(f"no label y{j}")
        return self.astuple()[j - 1]

    def validate_canvas(self, canvas: tuple[int, int]) -> None:
        w, h = canvas
        if self.y4 > w or self.y5 > h:
            raise SpecificationError(
                f"annotation {self.astuple()} exceeds canvas {canvas}"
            )


@dataclass(frozen=True)
class ExpectationSpec:
    """Declarative uniform ranges defining the expectation distribution.

    Sizes and positions are in pixels; all ranges are inclusive integer
    intervals.  Corners are implied: (y2, y3) uniform over what keeps the
    box on the canvas.
    """

    canvas: tuple[int, int] = (128, 128)
    size_range: tuple[int, int] = (30, 120)
    brightness_range: tuple[int, int] = (100, 255)
    classes: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "canvas", tuple(int(v) for v in self.canvas))
        object.__setattr__(self, "size_range", tuple(int(v) for v in self.size_range))
        object.__setattr__(
            self, "brightness_range", tuple(int(v) for v in self.brightness_range)
        )
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        w, h = self.canvas
        lo, hi = self.size_range
        blo, bhi = self.brightness_range
        if len(self.canvas) != 2 or w < 1 or h < 1:
            raise SpecificationError(f"bad canvas {self.canvas}")
        if not 0 < lo <= hi <= min(w, h):
            raise SpecificationError(
                f"size range {self.size_range} incompatible with canvas {self.canvas}"
            )
        if not 1 <= blo <= bhi <= 255:
            raise SpecificationError(f"bad brightness range {self.brightness_range}")
        if not self.classes:
            raise SpecificationError("classes must be nonempty")

    def restricted(self, cls: int) -> "ExpectationSpec":
        """Same ranges, single class; used to draw class-balanced sets."""
        if cls not in self.classes:
            raise SpecificationError(f"class {cls} not among {self.classes}")
        return ExpectationSpec(self.canvas, self.size_range, self.brightness_range, (cls,))

    def to_jsonable(self) -> dict:
        return {
            "canvas": list(self.canvas),
            "size_range": list(self.size_range),
            "brightness_range": list(self.brightness_range),
            "classes": list(self.classes),
        }

    @staticmethod
    def from_jsonable(obj: Mapping) -> "ExpectationSpec":
        return ExpectationSpec(
            tuple(obj["canvas"]),
            tuple(obj["size_range"]),
            tuple(obj["brightness_range"]),
            tuple(obj["classes"]),
        )


def sample_expected(spec: ExpectationSpec, seed, count: int) -> list[Annotation]:
    """Draw annotations from the expectation distribution.

    Stream order per sample batch: classes, sizes, x corners, y corners,
    brightness (each as one vectorized draw), which fixes determinism for
    a given seed.
    """
    if count < 1:
        raise SpecificationError(f"count must be >= 1, got {count}")
    rng = as_generator(seed)
    w, h = spec.canvas
    cls = np.asarray(spec.classes)[rng.integers(0, len(spec.classes), size=count)]
    s = rng.integers(spec.size_range[0], spec.size_range[1] + 1, size=count)
    x = rng.integers(0, w - s + 1)
    y = rng.integers(0, h - s + 1)
    b = rng.integers(spec.brightness_range[0], spec.brightness_range[1] + 1, size=count)
    return [
        Annotation(cls[i], x[i], y[i], x[i] + s[i], y[i] + s[i], b[i])
        for i in range(count)
    ]


@dataclass(frozen=True)
class BinnedSupport:
    """Histogram over a fixed-width bin grid anchored at zero.

    Bin b covers [b * bin_width, (b + 1) * bin_width); ``origin`` is the
    left edge of the first stored bin and is always a grid multiple.  A
    bin is occupied when its count reaches max(1, min_count).
    """

    label: int
    bin_width: float
    origin: float
    counts: np.ndarray
    min_count: int = 1

    def __post_init__(self):
        if self.bin_width <= 0:
            raise SpecificationError(f"bin_width must be positive, got {self.bin_width}")
        if self.min_count < 0:
            raise SpecificationError("min_count must be non-negative")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise SpecificationError("counts must be one-dimensional")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bin_width", float(self.bin_width))
        object.__setattr__(self, "origin", float(self.origin))

    @property
    def occupancy(self) -> np.ndarray:
        return self.counts >= max(1, self.min_count)

    def measure(self) -> float:
        return self.bin_width * int(np.count_nonzero(self.occupancy))

    def is_empty(self) -> bool:
        return not bool(self.occupancy.any())

    def bin_indices(self) -> np.ndarray:
        """Absolute indices (grid anchored at 0) of occupied bins."""
        base = int(round(self.origin / self.bin_width))
        return base + np.flatnonzero(self.occupancy)

    def contains(self, value: float) -> bool:
        b = math.floor(value / self.bin_width)
        base = int(round(self.origin / self.bin_width))
        i = b - base
        if i < 0 or i >= len(self.counts):
            return False
        return bool(self.occupancy[i])

    @staticmethod
    def from_interval(lo: float, hi: float, bin_width: float = 1.0, label: int = 0) -> "BinnedSupport":
        """Support of the half-open interval [lo, hi): every covered bin occupied."""
        if hi <= lo:
            raise SpecificationError(f"empty interval [{lo}, {hi})")
        b0 = math.floor(lo / bin_width)
        b1 = math.ceil(hi / bin_width)
        return BinnedSupport(label, bin_width, b0 * bin_width, np.ones(b1 - b0, np.int64))


def estimate_support(
    values: Sequence[float], bin_width: float = 1.0, min_count: int = 1, label: int = 0
) -> BinnedSupport:
    """Histogram the values on the zero-anchored grid; empty input gives measure 0."""
    if bin_width <= 0:
        raise SpecificationError(f"bin_width must be positive, got {bin_width}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return BinnedSupport(label, bin_width, 0.0, np.zeros(0, np.int64), min_count)
    bins = np.floor(arr / bin_width).astype(np.int64)
    bmin = int(bins.min())
    counts = np.bincount(bins - bmin)
    return BinnedSupport(label, bin_width, bmin * bin_width, counts, min_count)


def overlap_index(a: BinnedSupport, b: BinnedSupport) -> float:
    """Signed Steinhaus-style index of support mismatch.

    V = I * |R_a symdiff R_b| / |R_a union R_b| with I = -1 exactly when
    the second support is a strict nonempty subset of the first.  0 means
    identical supports, 1 disjoint, negative values containment.
    """
    if a.bin_width != b.bin_width:
        raise SpecificationError(
            f"bin widths differ: {a.bin_width} vs {b.bin_width}"
        )
    ia = set(a.bin_indices().tolist())
    ib = set(b.bin_indices().tolist())
    if not ia and not ib:
        raise UndefinedOverlapError("overlap of two empty supports is undefined")
    sym = len(ia ^ ib)
    uni = len(ia | ib)
    sign = -1.0 if (ib and ib < ia) else 1.0
    return sign * sym / uni


@dataclass(frozen=True)
class LabelDistribution:
    """Per (class, label) binned supports of an annotation sample."""

    supports: Mapping[tuple[int, int], BinnedSupport]
    n: int

    def __post_init__(self):
        object.__setattr__(self, "supports", dict(self.supports))

    @staticmethod
    def from_annotations(
        annotations: Sequence[Annotation], bin_width: float = 1.0, min_count: int = 1
    ) -> "LabelDistribution":
        by_class: dict[int, list[Annotation]] = {}
        for ann in annotations:
            by_class.setdefault(ann.y1, []).append(ann)
        supports = {}
        for k, group in sorted(by_class.items()):
            for j in LABELS:
                vals = [ann.label_value(j) for ann in group]
                supports[(k, j)] = estimate_support(vals, bin_width, min_count, label=j)
        return LabelDistribution(supports, len(annotations))

    def classes(self) -> tuple[int, ...]:
        return tuple(sorted({k for k, _ in self.supports}))

    def has_class(self, k: int) -> bool:
        return any(kk == k for kk, _ in self.supports)

    def get(self, k: int, j: int) -> BinnedSupport:
        try:
            return self.supports[(k, j)]
        except KeyError:
            raise SpecificationError(
                f"no support for class {k}, label y{j}"
            ) from None

    def to_jsonable(self) -> dict:
        entries = [
            {
                "class": k,
                "label": j,
                "bin_origin": sup.origin,
                "bin_width": sup.bin_width,
                "counts": sup.counts.tolist(),
            }
            for (k, j), sup in sorted(self.supports.items())
        ]
        return {"n": self.n, "entries": entries}

    @staticmethod
    def from_jsonable(obj: Mapping, min_count: int = 1) -> "LabelDistribution":
        supports = {}
        for e in obj["entries"]:
            supports[(int(e["class"]), int(e["label"]))] = BinnedSupport(
                int(e["label"]),
                float(e["bin_width"]),
                float(e["bin_origin"]),
                np.asarray(e["counts"], np.int64),
                min_count,
            )
        return LabelDistribution(supports, int(obj["n"]))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "label", "bin_origin", "bin_width", "counts"])
            for (k, j), sup in sorted(self.supports.items()):
                writer.writerow([k, j, sup.origin, sup.bin_width] + sup.counts.tolist())

    @staticmethod
    def load_csv(path, n: int | None = None, min_count: int = 1) -> "LabelDistribution":
        supports = {}
        totals: dict[int, int] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:4] != ["class", "label", "bin_origin", "bin_width"]:
                raise SpecificationError(f"unexpected distribution header in {path}")
            for row in reader:
                k, j = int(row[0]), int(row[1])
                counts = np.asarray([int(v) for v in row[4:]], np.int64)
                supports[(k, j)] = BinnedSupport(
                    j, float(row[3]), float(row[2]), counts, min_count
                )
                totals[j] = totals.get(j, 0) + int(counts.sum())
        if n is None:
            n = max(totals.values()) if totals else 0
        return LabelDistribution(supports, n)


def per_label_overlap(
    reference: LabelDistribution, candidate: LabelDistribution, k: int
) -> dict[int, float]:
    """Overlap of each label's support against the reference, for one class.

    The reference is the dataset under audit; the candidate is whichever
    distribution (expectation or estimate) is being compared against it.
    """
    if not reference.has_class(k):
        raise SpecificationError(f"class {k} missing from reference distribution")
    if not candidate.has_class(k):
        raise SpecificationError(f"class {k} missing from candidate distribution")
    return {j: overlap_index(reference.get(k, j), candidate.get(k, j)) for j in LABELS}


def mean_overlap(
    reference: LabelDistribution,
    candidate: LabelDistribution,
    classes: Iterable[int] | None = None,
) -> float:
    """Mean of the per-label overlaps over labels and classes."""
    if classes is None:
        classes = tuple(k for k in reference.classes() if candidate.has_class(k))
    classes = tuple(classes)
    if not classes:
        raise SpecificationError("no common classes to average over")
    vals = []
    for k in classes:
        vals.extend(per_label_overlap(reference, candidate, k).values())
    return float(np.mean(vals))
