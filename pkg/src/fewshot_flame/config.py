"""Run configuration persisted as flat ``key = value`` text.

Documented keys (all optional, defaults shown by ``RunConfig()``):

=====================  =====================================================
algorithm              ``pn`` or ``sn-knn``
architecture           ``small-conv`` or ``vgg16-conv``
embedding_dim          integer; 0 picks the architecture default
channels               small-conv width
pretrained             vgg16-conv ImageNet weights (true/false)
input_size             network input side in pixels
scale_min, scale_max   random-rescale range (multiples of input_size)
flip_probability       horizontal flip probability
split_train/_validation/_test   per-class split sizes
epochs                 training epochs
learning_rate, weight_decay     Adam settings
standard_loss          pn: plain multiclass cross-entropy instead of per-cell BCE
n_anchors              sn-knn anchors per pair batch
n_support, n_query     pn episode sizes
k                      sn-knn neighbours (odd)
head_hidden            sn-knn hidden width of the similarity head
data_seed, model_seed, sampler_seed, val_seed
dataset                dataset directory; empty means generate synthetic data
synthetic_classes, synthetic_difficulty
output_dir             run directory
plot                   render PNG curves in addition to CSV
=====================  =====================================================
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .dataset import SplitSpec, TransformConfig
from .encoder import EncoderConfig
from .errors import ConfigurationError
from .training import OptimizerSettings

ALGORITHMS = ("pn", "sn-knn")


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "pn"
    architecture: str = "small-conv"
    embedding_dim: int = 0
    channels: int = 32
    pretrained: bool = False
    input_size: int = 84
    scale_min: float = 1.1
    scale_max: float = 1.5
    flip_probability: float = 0.5
    split_train: int = 20
    split_validation: int = 20
    split_test: int = 400
    epochs: int = 30
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    standard_loss: bool = False
    n_anchors: int = 15
    n_support: int = 5
    n_query: int = 5
    k: int = 5
    head_hidden: int = 512
    data_seed: int = 0
    model_seed: int = 0
    sampler_seed: int = 0
    val_seed: int = 0
    dataset: str = ""
    synthetic_classes: int = 6
    synthetic_difficulty: str = "easy"
    output_dir: str = "run"
    plot: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.synthetic_difficulty not in ("easy", "hard"):
            raise ConfigurationError(f"unknown synthetic_difficulty {self.synthetic_difficulty!r}")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.k % 2 == 0:
            raise ConfigurationError("k must be odd")
        # fail early on invalid nested settings
        self.encoder_config()
        self.transform_config()

    # -- derived settings
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.architecture, self.embedding_dim or None, self.pretrained,
                             self.input_size, self.channels)

    def transform_config(self) -> TransformConfig:
        return TransformConfig(self.input_size, (self.scale_min, self.scale_max),
                               self.flip_probability, self.sampler_seed)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.split_train, self.split_validation, self.split_test)

    def optimizer(self) -> OptimizerSettings:
        return OptimizerSettings(self.learning_rate, self.weight_decay)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- persistence
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = parse_pairs(line for line in text.splitlines())
        values.update(overrides)
        return cls.from_mapping(values)

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, types[key])
        return cls(**kwargs)


def parse_pairs(lines) -> dict[str, str]:
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def _coerce(key: str, raw, type_name: str):
    if not isinstance(raw, str):
        return raw
    try:
        if type_name == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {type_name}") from None
    return raw
