"""Dataset generation, persistence, and optional external-corpus import.

A dataset is a directory: meta.json, images.u8 (raw row-major bytes,
N x H x W), labels.csv with -1 for untrusted fields, and, for generated
collected sets, a truth.csv sidecar holding the generating annotations.
The sidecar exists for benchmarking only; pipeline loads skip it unless
explicitly asked.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .annot import Annotation, ExpectationSpec, sample_expected
from .exceptions import FormatError, MappingError, SpecificationError
from .render import GrayImage, RenderStyle, rasterize_polylines, render
from .seeds import spawn

SCHEMA_VERSION = 1

FULL_MASK = (True, True, True, True, True, True)
CLASS_ONLY_MASK = (True, False, False, False, False, False)


@dataclass(frozen=True)
class BiasSpec:
    """Parameterizes the selection bias of the collected set.

    The defaults over-represent large, bright, centered shapes drawn in
    the handdrawn style.  This is a stand-in for a real collection
    process, not a measured property of any corpus; see README.
    """

    size_range: tuple[int, int] = (90, 120)
    brightness_range: tuple[int, int] = (200, 255)
    center_slack: int = 8
    style: RenderStyle = field(default_factory=RenderStyle.handdrawn)

    def __post_init__(self):
        object.__setattr__(self, "size_range", tuple(int(v) for v in self.size_range))
        object.__setattr__(
            self, "brightness_range", tuple(int(v) for v in self.brightness_range)
        )
        object.__setattr__(self, "center_slack", int(self.center_slack))
        lo, hi = self.size_range
        blo, bhi = self.brightness_range
        if not 0 < lo <= hi:
            raise SpecificationError(f"bad size range {self.size_range}")
        if not 1 <= blo <= bhi <= 255:
            raise SpecificationError(f"bad brightness range {self.brightness_range}")
        if self.center_slack < 0:
            raise SpecificationError("center_slack must be >= 0")

    def validate_against(self, spec: ExpectationSpec) -> None:
        """Bias ranges must sit inside the expectation's declared domain."""
        if not (
            spec.size_range[0] <= self.size_range[0]
            and self.size_range[1] <= spec.size_range[1]
        ):
            raise SpecificationError(
                f"bias size range {self.size_range} outside expectation {spec.size_range}"
            )
        if not (
            spec.brightness_range[0] <= self.brightness_range[0]
            and self.brightness_range[1] <= spec.brightness_range[1]
        ):
            raise SpecificationError(
                f"bias brightness range {self.brightness_range} outside "
                f"expectation {spec.brightness_range}"
            )
        if self.size_range[1] > min(spec.canvas):
            raise SpecificationError(
                f"bias sizes {self.size_range} do not fit canvas {spec.canvas}"
            )

    def to_jsonable(self) -> dict:
        return {
            "size_range": list(self.size_range),
            "brightness_range": list(self.brightness_range),
            "center_slack": self.center_slack,
            "style": self.style.to_jsonable(),
        }

    @staticmethod
    def from_jsonable(obj: Mapping) -> "BiasSpec":
        return BiasSpec(
            tuple(obj["size_range"]),
            tuple(obj["brightness_range"]),
            int(obj["center_slack"]),
            RenderStyle.from_jsonable(obj["style"]),
        )


@dataclass
class Dataset:
    """In-memory dataset: images plus (partially) trusted labels."""

    meta: dict
    images: np.ndarray
    labels: np.ndarray
    label_mask: tuple[bool, ...]
    truth: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, np.uint8)
        self.labels = np.asarray(self.labels, np.int64)
        self.label_mask = tuple(bool(v) for v in self.label_mask)
        if self.images.ndim != 3:
            raise SpecificationError("images must have shape (n, h, w)")
        if self.labels.shape != (self.images.shape[0], 6):
            raise SpecificationError(
                f"labels shape {self.labels.shape} does not match {self.images.shape[0]} images"
            )
        if len(self.label_mask) != 6:
            raise SpecificationError("label_mask must have 6 entries")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, np.int64)
            if self.truth.shape != self.labels.shape:
                raise SpecificationError("truth shape must match labels")
        if int(self.meta.get("n", self.images.shape[0])) != self.images.shape[0]:
            raise SpecificationError("meta n disagrees with image count")

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def canvas(self) -> tuple[int, int]:
        return (self.images.shape[2], self.images.shape[1])

    def image(self, i: int) -> GrayImage:
        return GrayImage(self.images[i])

    def annotation(self, i: int) -> Annotation:
        if not all(self.label_mask):
            raise SpecificationError("dataset labels are not fully trusted")
        return Annotation(*self.labels[i])

    def annotations(self) -> list[Annotation]:
        return [self.annotation(i) for i in range(self.n)]

    def trusted_y1(self) -> np.ndarray:
        if not self.label_mask[0]:
            raise SpecificationError("class labels are not trusted in this dataset")
        return self.labels[:, 0]


def _interleave(groups: Sequence[list]) -> list:
    """Round-robin merge; earlier groups get the extra items."""
    out = []
    i = 0
    while any(i < len(g) for g in groups):
        for g in groups:
            if i < len(g):
                out.append(g[i])
        i += 1
    return out


def _sample_biased(
    bias: BiasSpec, canvas: tuple[int, int], seed, count: int, cls: int
) -> list[Annotation]:
    # stream order: sizes, brightness, x slack, y slack
    if count == 0:
        return []
    w, h = canvas
    if bias.size_range[1] > min(w, h):
        raise SpecificationError(
            f"bias size range {bias.size_range} incompatible with canvas {canvas}"
        )
    rng = seed if isinstance(seed, np.random.Generator) else spawn(seed)
    s = rng.integers(bias.size_range[0], bias.size_range[1] + 1, size=count)
    b = rng.integers(bias.brightness_range[0], bias.brightness_range[1] + 1, size=count)
    dx = rng.integers(-bias.center_slack, bias.center_slack + 1, size=count)
    dy = rng.integers(-bias.center_slack, bias.center_slack + 1, size=count)
    x0 = np.clip((w - s) // 2 + dx, 0, w - s)
    y0 = np.clip((h - s) // 2 + dy, 0, h - s)
    return [
        Annotation(cls, x0[i], y0[i], x0[i] + s[i], y0[i] + s[i], b[i])
        for i in range(count)
    ]


def _render_all(
    annotations: Sequence[Annotation], style: RenderStyle, seed, canvas
) -> np.ndarray:
    w, h = canvas
    out = np.zeros((len(annotations), h, w), np.uint8)
    for i, ann in enumerate(annotations):
        out[i] = render(ann, style, spawn(seed, "render", i), canvas).pixels
    return out


def gen_collected(
    bias: BiasSpec, n: int, seed: int, canvas: tuple[int, int] = (128, 128)
) -> Dataset:
    """Biased, handdrawn-style collected set; only the class label is trusted."""
    if n < 0:
        raise SpecificationError("n must be >= 0")
    classes = (0, 1)
    per_class = [n - n // 2, n // 2]
    groups = [
        _sample_biased(bias, canvas, spawn(seed, "annot", c), per_class[ci], c)
        for ci, c in enumerate(classes)
    ]
    annotations = _interleave(groups)
    images = _render_all(annotations, bias.style, seed, canvas)
    truth = np.asarray([a.astuple() for a in annotations], np.int64).reshape(n, 6)
    labels = np.full((n, 6), -1, np.int64)
    if n:
        labels[:, 0] = truth[:, 0]
    meta = {
        "schema_version": SCHEMA_VERSION,
        "origin": "collected",
        "canvas": [canvas[0], canvas[1]],
        "seed": int(seed),
        "style": bias.style.to_jsonable(),
        "n": n,
        "label_mask": list(CLASS_ONLY_MASK),
    }
    return Dataset(meta, images, labels, CLASS_ONLY_MASK, truth)


def gen_test(spec: ExpectationSpec, m: int, seed: int) -> Dataset:
    """Expectation-driven test set; clean renders, fully trusted labels."""
    if m < 0:
        raise SpecificationError("m must be >= 0")
    classes = spec.classes
    k = len(classes)
    per_class = [m // k + (1 if i < m % k else 0) for i in range(k)]
    groups = []
    for i, c in enumerate(classes):
        if per_class[i] == 0:
            groups.append([])
            continue
        groups.append(
            sample_expected(spec.restricted(c), spawn(seed, "annot", c), per_class[i])
        )
    annotations = _interleave(groups)
    style = RenderStyle.clean()
    images = _render_all(annotations, style, seed, spec.canvas)
    labels = np.asarray([a.astuple() for a in annotations], np.int64).reshape(m, 6)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "origin": "test",
        "canvas": [spec.canvas[0], spec.canvas[1]],
        "seed": int(seed),
        "style": style.to_jsonable(),
        "n": m,
        "label_mask": list(FULL_MASK),
    }
    return Dataset(meta, images, labels, FULL_MASK, None)


def _write_label_csv(path: Path, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "y1", "y2", "y3", "y4", "y5", "y6"])
        for i, row in enumerate(rows):
            writer.writerow([i] + [int(v) for v in row])


def _read_label_csv(path: Path, n: int) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "y1", "y2", "y3", "y4", "y5", "y6"]:
            raise FormatError(f"{path.name}: unexpected header {header}")
        rows = list(reader)
    if len(rows) != n:
        raise FormatError(f"{path.name}: expected {n} rows, got {len(rows)}")
    out = np.empty((n, 6), np.int64)
    for row in rows:
        i = int(row[0])
        out[i] = [int(v) for v in row[1:7]]
    return out


def save(ds: Dataset, path) -> None:
    """Write the directory container; bit-exact under load()."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = dict(ds.meta)
    meta["schema_version"] = SCHEMA_VERSION
    meta["n"] = ds.n
    meta["label_mask"] = list(ds.label_mask)
    with open(root / "meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(root / "images.u8", "wb") as fh:
        fh.write(ds.images.tobytes())
    _write_label_csv(root / "labels.csv", ds.labels)
    if ds.truth is not None and not all(ds.label_mask):
        _write_label_csv(root / "truth.csv", ds.truth)


def load(path, load_truth: bool = False) -> Dataset:
    """Read a dataset directory.

    ``load_truth`` exposes the generating-annotation sidecar and exists
    for the benchmark suite; pipeline code must leave it False.
    """
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise FormatError(f"{root}: missing meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{root}: meta.json is not valid JSON: {exc}") from exc
    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(
            f"{root}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})"
        )
    for key in ("canvas", "n", "label_mask"):
        if key not in meta:
            raise FormatError(f"{root}: meta.json missing key {key!r}")
    w, h = (int(v) for v in meta["canvas"])
    n = int(meta["n"])
    payload = (root / "images.u8").read_bytes() if (root / "images.u8").exists() else None
    if payload is None:
        raise FormatError(f"{root}: missing images.u8")
    expected = n * h * w
    if len(payload) != expected:
        raise FormatError(
            f"{root}: images.u8: expected {expected} bytes, got {len(payload)}"
        )
    images = np.frombuffer(payload, np.uint8).reshape(n, h, w).copy()
    labels = _read_label_csv(root / "labels.csv", n)
    truth = None
    if load_truth and (root / "truth.csv").exists():
        truth = _read_label_csv(root / "truth.csv", n)
    return Dataset(meta, images, labels, tuple(bool(v) for v in meta["label_mask"]), truth)


def import_drawing_corpus(
    path,
    class_map: Mapping[str, int],
    canvas: tuple[int, int] = (128, 128),
    thickness: int = 2,
    source_extent: float = 255.0,
) -> Dataset:
    """Import newline-delimited JSON drawings.

    Each record is {"word": str, "drawing": [[xs, ys], ...]} with stroke
    coordinates in [0, source_extent].  Records with no strokes are
    skipped and counted in meta["skipped"].  Only the class label is
    trusted.
    """
    w, h = canvas
    scale = (min(w, h) - 1) / float(source_extent)
    images = []
    y1s = []
    skipped = 0
    with open(path) as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {line_no + 1}: bad JSON: {exc}") from exc
            word = rec.get("word")
            if word not in class_map:
                raise MappingError(f"line {line_no + 1}: unknown class name {word!r}")
            strokes = [
                (np.asarray(sx, np.float64) * scale, np.asarray(sy, np.float64) * scale)
                for sx, sy in rec.get("drawing", [])
                if len(sx) > 0
            ]
            if not strokes:
                skipped += 1
                continue
            images.append(rasterize_polylines(strokes, canvas, thickness).pixels)
            y1s.append(int(class_map[word]))
    n = len(images)
    arr = np.asarray(images, np.uint8).reshape(n, h, w)
    labels = np.full((n, 6), -1, np.int64)
    if n:
        labels[:, 0] = y1s
    meta = {
        "schema_version": SCHEMA_VERSION,
        "origin": "import",
        "canvas": [w, h],
        "seed": 0,
        "style": RenderStyle.clean(thickness).to_jsonable(),
        "n": n,
        "label_mask": list(CLASS_ONLY_MASK),
        "skipped": skipped,
    }
    return Dataset(meta, arr, labels, CLASS_ONLY_MASK, None)


def autolabel_dataset(ds: Dataset) -> list[Annotation]:
    """Auto-label every image, classes taken from the trusted y1 column."""
    from .render import auto_label

    y1 = ds.trusted_y1()
    return [auto_label(ds.image(i), int(y1[i])) for i in range(ds.n)]
