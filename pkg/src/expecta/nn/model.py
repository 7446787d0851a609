"""Architecture presets, the flat-parameter model, and checkpointing.

Preset names count trainable layers (convolutions plus the single dense
head), so vgg05 is 4 convolutions and one dense layer:

    preset   convs per stage   widths            layers
    vgg05    1, 1, 1, 1        16, 32, 64, 128   5
    vgg07    2, 2, 1, 1        16, 32, 64, 128   7
    vgg09    2, 2, 2, 2        16, 32, 64, 128   9
    vgg11    3, 3, 2, 2        16, 32, 64, 128   11
    vgg13    3, 3, 3, 3        16, 32, 64, 128   13

Each stage ends in 2x2 max pooling; inputs are single-channel images
with sides divisible by 16.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..exceptions import FormatError, SpecificationError
from ..seeds import spawn
from .layers import (
    BatchNorm2d,
    Conv3x3,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2x2,
    ReLU,
)

PRESET_STAGE_CONVS = {
    "vgg05": (1, 1, 1, 1),
    "vgg07": (2, 2, 1, 1),
    "vgg09": (2, 2, 2, 2),
    "vgg11": (3, 3, 2, 2),
    "vgg13": (3, 3, 3, 3),
}
STAGE_WIDTHS = (16, 32, 64, 128)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    name: str
    stage_convs: tuple[int, ...]
    stage_widths: tuple[int, ...]
    input_hw: tuple[int, int]
    classes: int = 2
    batch_norm: bool = False
    dropout: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stage_convs", tuple(int(v) for v in self.stage_convs))
        object.__setattr__(self, "stage_widths", tuple(int(v) for v in self.stage_widths))
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        if len(self.stage_convs) != len(self.stage_widths):
            raise SpecificationError("stage_convs and stage_widths must align")
        if any(v < 1 for v in self.stage_convs) or any(v < 1 for v in self.stage_widths):
            raise SpecificationError("stage sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise SpecificationError(f"dropout {self.dropout} outside [0, 1)")
        if self.classes < 2:
            raise SpecificationError("need at least two classes")
        h, w = self.input_hw
        div = 2 ** len(self.stage_convs)
        if h % div or w % div or h < div or w < div:
            raise SpecificationError(
                f"input {self.input_hw} not divisible by {div} for {len(self.stage_convs)} pooling stages"
            )
        if self.name.startswith("vgg"):
            try:
                declared = int(self.name[3:])
            except ValueError:
                declared = None
            if declared is not None and declared != self.layer_count():
                raise SpecificationError(
                    f"{self.name} declares {declared} layers but config has {self.layer_count()}"
                )

    def layer_count(self) -> int:
        return sum(self.stage_convs) + 1

    def to_jsonable(self) -> dict:
        return {
            "name": self.name,
            "stage_convs": list(self.stage_convs),
            "stage_widths": list(self.stage_widths),
            "input_hw": list(self.input_hw),
            "classes": self.classes,
            "batch_norm": self.batch_norm,
            "dropout": self.dropout,
        }

    @staticmethod
    def from_jsonable(obj: Mapping) -> "ArchConfig":
        return ArchConfig(
            obj["name"],
            tuple(obj["stage_convs"]),
            tuple(obj["stage_widths"]),
            tuple(obj["input_hw"]),
            int(obj["classes"]),
            bool(obj["batch_norm"]),
            float(obj["dropout"]),
        )

    def arch_hash(self) -> str:
        blob = json.dumps(self.to_jsonable(), sort_keys=True).encode("utf8")
        return hashlib.sha256(blob).hexdigest()


def make_arch(
    name: str,
    input_hw: tuple[int, int],
    batch_norm: bool = False,
    dropout: float = 0.0,
) -> ArchConfig:
    key = name.lower()
    if key not in PRESET_STAGE_CONVS:
        raise SpecificationError(
            f"unknown architecture {name!r}; presets: {sorted(PRESET_STAGE_CONVS)}"
        )
    return ArchConfig(
        key, PRESET_STAGE_CONVS[key], STAGE_WIDTHS, tuple(input_hw), 2, batch_norm, dropout
    )


class Model:
    """Layered classifier over one flat parameter vector.

    The manifest lists every slot (name, shape, offset, kind); "param"
    slots are trainable, "buffer" slots hold batch-norm running
    statistics and are excluded from optimization but serialized with
    the rest of theta.
    """

    def __init__(self, arch: ArchConfig, dtype=np.float32, init_seed: int = 0):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise SpecificationError(f"unsupported dtype {dtype}")
        self.epochs_seen = 0
        self.train_seed: int | None = None
        self.init_seed = int(init_seed)
        self._named_layers: list[tuple[str, Layer]] = []
        c_in = 1
        for si, (convs, width) in enumerate(zip(arch.stage_convs, arch.stage_widths)):
            for ci in range(convs):
                tag = f"s{si}c{ci}"
                self._named_layers.append((f"conv_{tag}", Conv3x3(c_in, width)))
                if arch.batch_norm:
                    self._named_layers.append((f"bn_{tag}", BatchNorm2d(width)))
                self._named_layers.append((f"relu_{tag}", ReLU()))
                c_in = width
            self._named_layers.append((f"pool_s{si}", MaxPool2x2()))
        self._named_layers.append(("flatten", Flatten()))
        if arch.dropout > 0:
            self._named_layers.append(("dropout", Dropout(arch.dropout)))
        h, w = arch.input_hw
        shrink = 2 ** len(arch.stage_convs)
        feat = (h // shrink) * (w // shrink) * arch.stage_widths[-1]
        self._named_layers.append(("dense", Dense(feat, arch.classes)))

        self.manifest: list[dict] = []
        offset = 0
        for lname, layer in self._named_layers:
            for attr, shape, kind in layer.param_specs():
                size = int(np.prod(shape))
                self.manifest.append(
                    {
                        "name": f"{lname}.{attr}",
                        "shape": list(shape),
                        "offset": offset,
                        "kind": kind,
                    }
                )
                offset += size
        self.theta = np.zeros(offset, self.dtype)
        self.grad = np.zeros(offset, self.dtype)
        self.trainable = np.zeros(offset, bool)
        cursor = 0
        for lname, layer in self._named_layers:
            views, grad_views = {}, {}
            for attr, shape, kind in layer.param_specs():
                size = int(np.prod(shape))
                views[attr] = self.theta[cursor : cursor + size].reshape(shape)
                if kind == "param":
                    grad_views[attr] = self.grad[cursor : cursor + size].reshape(shape)
                    self.trainable[cursor : cursor + size] = True
                cursor += size
            layer.bind(views, grad_views)
        for i, (lname, layer) in enumerate(self._named_layers):
            layer.init_params(spawn(self.init_seed, "init", i))

    @property
    def n_params(self) -> int:
        return int(self.theta.size)

    def set_dropout_rng(self, rng: np.random.Generator) -> None:
        for _, layer in self._named_layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    def _prep(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[:, None, :, :]
        if x.ndim != 4 or x.shape[1] != 1:
            raise SpecificationError(f"expected (n, h, w) images, got shape {x.shape}")
        if x.shape[2:] != tuple(self.arch.input_hw):
            raise SpecificationError(
                f"image size {x.shape[2:]} does not match architecture input {self.arch.input_hw}"
            )
        if x.dtype == np.uint8:
            return x.astype(self.dtype) / self.dtype.type(255)
        return x.astype(self.dtype)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        h = self._prep(x)
        for _, layer in self._named_layers:
            h = layer.forward(h, training)
        return h

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        from .layers import softmax_cross_entropy

        logits = self.forward(x, training=True)
        loss, dlogits = softmax_cross_entropy(logits, np.asarray(y))
        self.zero_grad()
        g = dlogits
        for _, layer in reversed(self._named_layers):
            g = layer.backward(g)
        return loss, self.grad


def save_checkpoint(model: Model, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": CHECKPOINT_VERSION,
        "arch": model.arch.to_jsonable(),
        "arch_hash": model.arch.arch_hash(),
        "manifest": model.manifest,
        "dtype": "f32",
        "epochs_seen": model.epochs_seen,
        "train_seed": model.train_seed,
    }
    with open(root / "model.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(root / "weights.f32", "wb") as fh:
        fh.write(model.theta.astype("<f4").tobytes())


def load_checkpoint(path, expected_arch: ArchConfig | None = None) -> Model:
    root = Path(path)
    try:
        doc = json.loads((root / "model.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{root}: missing model.json") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{root}: model.json is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{root}: unsupported checkpoint version {doc.get('schema_version')!r}")
    arch = ArchConfig.from_jsonable(doc["arch"])
    if arch.arch_hash() != doc.get("arch_hash"):
        raise FormatError(f"{root}: architecture hash mismatch (corrupt manifest)")
    if expected_arch is not None and expected_arch.arch_hash() != doc.get("arch_hash"):
        raise FormatError(
            f"{root}: checkpoint belongs to {arch.name}, not {expected_arch.name} "
            "(architecture hash mismatch)"
        )
    model = Model(arch, np.float32, init_seed=0)
    data = (root / "weights.f32").read_bytes()
    expected_len = model.theta.size * 4
    if len(data) != expected_len:
        raise FormatError(
            f"{root}: weights.f32: expected {expected_len} bytes, got {len(data)}"
        )
    model.theta[...] = np.frombuffer(data, "<f4")
    model.epochs_seen = int(doc.get("epochs_seen", 0))
    model.train_seed = doc.get("train_seed")
    return model
