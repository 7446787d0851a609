"""Dataset bias audits for parametric shape images.

Compares a declared expectation over annotation labels against what a
collected dataset actually contains: renders test sets from the
expectation, trains a small classifier on the collected data, flags
unfamiliar test samples by calibrated max-softmax score, attributes each
score to the annotation labels by exact Shapley values, and summarizes
the mismatch with a signed support-overlap index.
"""

from ._threads import configure as _configure_threads

_configure_threads()

from .annot import (
    LABELS,
    Annotation,
    BinnedSupport,
    ExpectationSpec,
    LabelDistribution,
    estimate_support,
    mean_overlap,
    overlap_index,
    per_label_overlap,
    sample_expected,
)
from .dataset import BiasSpec, Dataset, gen_collected, gen_test
from .exceptions import (
    ExpectaError,
    FormatError,
    MappingError,
    MissingArtifactError,
    NoForegroundError,
    RenderDomainError,
    SpecificationError,
    StaleArtifactError,
    TrainingFailureError,
    UndefinedOverlapError,
)
from .render import GrayImage, RenderStyle, auto_label, render

__version__ = "0.1.0"

__all__ = [
    "LABELS",
    "Annotation",
    "BiasSpec",
    "BinnedSupport",
    "Dataset",
    "ExpectaError",
    "ExpectationSpec",
    "FormatError",
    "GrayImage",
    "LabelDistribution",
    "MappingError",
    "MissingArtifactError",
    "NoForegroundError",
    "RenderDomainError",
    "RenderStyle",
    "SpecificationError",
    "StaleArtifactError",
    "TrainingFailureError",
    "UndefinedOverlapError",
    "auto_label",
    "estimate_support",
    "gen_collected",
    "gen_test",
    "mean_overlap",
    "overlap_index",
    "per_label_overlap",
    "render",
    "sample_expected",
]
