"""Run configuration: profiles, JSON round trip, dotted overrides, hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Mapping

from .annot import ExpectationSpec
from .dataset import BiasSpec
from .detector import temperature_grid
from .exceptions import SpecificationError
from .nn.model import PRESET_STAGE_CONVS
from .nn.train import TrainConfig

PROFILE_NAMES = ("paper", "desk", "ci")


@dataclass(frozen=True)
class RunConfig:
    """Everything a full audit run depends on.

    The output directory is carried here for convenience but excluded
    from the config hash, so runs into different directories compare as
    identical work.
    """

    profile: str
    seed: int
    canvas: tuple[int, int]
    spec: ExpectationSpec
    bias: BiasSpec
    n_collected: int
    m_test: int
    m_attr: int
    archs: tuple[str, ...]
    train: TrainConfig
    temp_grid: tuple[float, float, float]
    score_target: float = 0.7
    background_count: int = 8
    repeat: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.spec.canvas != self.canvas:
            raise SpecificationError(
                f"canvas {self.canvas} does not match the expectation spec's "
                f"{self.spec.canvas}"
            )
        self.bias.validate_against(self.spec)
        for name in self.archs:
            if name not in PRESET_STAGE_CONVS:
                raise SpecificationError(
                    f"unknown architecture {name!r}; presets: "
                    f"{sorted(PRESET_STAGE_CONVS)}"
                )
        if not self.archs:
            raise SpecificationError("at least one architecture is required")
        if min(self.n_collected, self.m_test, self.m_attr) < 1:
            raise SpecificationError("dataset sizes must be positive")
        if self.m_attr > self.m_test:
            raise SpecificationError("m_attr cannot exceed m_test")
        if self.repeat < 1:
            raise SpecificationError("repeat must be >= 1")
        if not 0.0 < self.score_target <= 1.0:
            raise SpecificationError("score_target must be in (0, 1]")
        if self.background_count < 1:
            raise SpecificationError("background_count must be >= 1")
        temperature_grid(*self.temp_grid)

    def to_jsonable(self) -> dict:
        obj = {
            "profile": self.profile,
            "seed": self.seed,
            "canvas": list(self.canvas),
            "spec": self.spec.to_jsonable(),
            "bias": self.bias.to_jsonable(),
            "n_collected": self.n_collected,
            "m_test": self.m_test,
            "m_attr": self.m_attr,
            "archs": list(self.archs),
            "train": self.train.to_jsonable(),
            "temp_grid": list(self.temp_grid),
            "score_target": self.score_target,
            "background_count": self.background_count,
            "repeat": self.repeat,
        }
        if self.out_dir is not None:
            obj["out_dir"] = self.out_dir
        return obj

    @staticmethod
    def from_jsonable(obj: Mapping) -> "RunConfig":
        try:
            spec_obj = dict(obj["spec"])
            if "canvas" in obj:
                spec_obj["canvas"] = list(obj["canvas"])
            spec = ExpectationSpec.from_jsonable(spec_obj)
            return RunConfig(
                profile=str(obj["profile"]),
                seed=int(obj["seed"]),
                canvas=spec.canvas,
                spec=spec,
                bias=BiasSpec.from_jsonable(obj["bias"]),
                n_collected=int(obj["n_collected"]),
                m_test=int(obj["m_test"]),
                m_attr=int(obj["m_attr"]),
                archs=_archs_tuple(obj["archs"]),
                train=TrainConfig.from_jsonable(obj["train"]),
                temp_grid=tuple(float(v) for v in obj["temp_grid"]),
                score_target=float(obj.get("score_target", 0.7)),
                background_count=int(obj.get("background_count", 8)),
                repeat=int(obj.get("repeat", 1)),
                out_dir=obj.get("out_dir"),
            )
        except KeyError as exc:
            raise SpecificationError(f"config is missing field {exc}") from exc


def _archs_tuple(value) -> tuple[str, ...]:
    # A bare string means one architecture, not an iterable of characters.
    if isinstance(value, str):
        return (value,)
    return tuple(str(a) for a in value)


def _profile_jsonable(name: str) -> dict:
    base_train = {
        "epochs": 5, "batch_size": 64, "learning_rate": 1e-3,
        "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
        "seed": 0, "val_fraction": 0.2,
    }
    if name == "paper":
        return {
            "profile": "paper", "seed": 0, "canvas": [128, 128],
            "spec": {"canvas": [128, 128], "size_range": [30, 120],
                     "brightness_range": [100, 255], "classes": [0, 1]},
            "bias": {"size_range": [90, 120], "brightness_range": [200, 255],
                     "center_slack": 8, "style": "handdrawn"},
            "n_collected": 50000, "m_test": 10000, "m_attr": 512,
            "archs": ["vgg05", "vgg07", "vgg09", "vgg11", "vgg13"],
            "train": base_train,
            "temp_grid": [1.0, 20.0, 0.25],
            "score_target": 0.7, "background_count": 8, "repeat": 5,
        }
    if name == "desk":
        return {
            "profile": "desk", "seed": 0, "canvas": [64, 64],
            "spec": {"canvas": [64, 64], "size_range": [15, 60],
                     "brightness_range": [100, 255], "classes": [0, 1]},
            "bias": {"size_range": [45, 60], "brightness_range": [200, 255],
                     "center_slack": 8, "style": "handdrawn"},
            "n_collected": 10000, "m_test": 2000, "m_attr": 512,
            "archs": ["vgg05", "vgg09"],
            "train": base_train,
            "temp_grid": [1.0, 50.0, 0.25],
            "score_target": 0.7, "background_count": 8, "repeat": 3,
        }
    if name == "ci":
        return {
            "profile": "ci", "seed": 0, "canvas": [32, 32],
            "spec": {"canvas": [32, 32], "size_range": [8, 30],
                     "brightness_range": [100, 255], "classes": [0, 1]},
            "bias": {"size_range": [23, 30], "brightness_range": [200, 255],
                     "center_slack": 4, "style": "handdrawn"},
            "n_collected": 1000, "m_test": 200, "m_attr": 64,
            "archs": ["vgg05"],
            "train": base_train,
            "temp_grid": [1.0, 50.0, 0.5],
            "score_target": 0.7, "background_count": 8, "repeat": 1,
        }
    raise SpecificationError(f"unknown profile {name!r}; choose from {PROFILE_NAMES}")


def default_config(profile: str = "desk") -> RunConfig:
    return RunConfig.from_jsonable(_profile_jsonable(profile))


def _deep_merge(base: dict, extra: Mapping) -> dict:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if "," in text:
            return [part.strip() for part in text.split(",")]
        return text


def apply_overrides(obj: dict, overrides: Mapping[str, str]) -> dict:
    """Set dotted JSON paths, e.g. {"train.epochs": "3"}; values parse as JSON.

    Paths must name keys already present in the base object, so typos fail
    instead of silently adding ignored settings.
    """
    result = json.loads(json.dumps(obj))
    for path, text in overrides.items():
        parts = path.split(".")
        node = result
        for depth, part in enumerate(parts[:-1]):
            if not isinstance(node.get(part), dict):
                raise SpecificationError(
                    f"override path {path!r} has no object at "
                    f"{'.'.join(parts[: depth + 1])!r}"
                )
            node = node[part]
        if parts[-1] not in node:
            raise SpecificationError(f"override path {path!r} names no known setting")
        node[parts[-1]] = text if not isinstance(text, str) else _parse_override_value(text)
    return result


def load_config(
    config_path: str | None = None,
    profile: str | None = None,
    seed: int | None = None,
    out_dir: str | None = None,
    overrides: Mapping[str, str] | None = None,
) -> RunConfig:
    """Resolve a run config: profile preset <- config file <- flag overrides."""
    file_obj: dict = {}
    if config_path is not None:
        with open(config_path) as fh:
            file_obj = json.load(fh)
        if not isinstance(file_obj, dict):
            raise SpecificationError("config file must hold a JSON object")
    name = profile or file_obj.get("profile") or "desk"
    obj = _deep_merge(_profile_jsonable(name), file_obj)
    obj["profile"] = name
    if "canvas" in file_obj and "canvas" not in file_obj.get("spec", {}):
        obj["spec"]["canvas"] = obj["canvas"]
    if overrides:
        obj = apply_overrides(obj, overrides)
        if "canvas" in overrides:
            obj["spec"]["canvas"] = obj["canvas"]
    if seed is not None:
        obj["seed"] = seed
    if out_dir is not None:
        obj["out_dir"] = out_dir
    return RunConfig.from_jsonable(obj)


def config_hash(cfg: RunConfig) -> str:
    """sha256 over the canonical config JSON, output directory excluded."""
    obj = cfg.to_jsonable()
    obj.pop("out_dir", None)
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf8")).hexdigest()


def save_config(cfg: RunConfig, path) -> None:
    obj = cfg.to_jsonable()
    obj.pop("out_dir", None)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def replace_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, seed=seed)
