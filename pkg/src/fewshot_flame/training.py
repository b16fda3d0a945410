"""Training log, optimizer settings and checkpoint persistence shared by both algorithms."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .encoder import EncoderConfig


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 1e-4
    weight_decay: float = 0.0

    def build(self, params) -> torch.optim.Optimizer:
        return torch.optim.Adam(params, lr=self.learning_rate, weight_decay=self.weight_decay)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_acc: float
    val_acc: float
    loss: float
    improved: bool


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path) -> "TrainingLog":
        lines = Path(path).read_text().splitlines()
        return cls([EpochRecord(**json.loads(line)) for line in lines if line.strip()])

    def epochs_to_reach(self, threshold: float, key: str = "train_acc") -> int | None:
        """First epoch whose ``key`` is at least ``threshold`` (None if never)."""
        for r in self.records:
            if getattr(r, key) >= threshold:
                return r.epoch
        return None


@dataclass
class TrainingResult:
    log: TrainingLog
    best_state: dict[str, torch.Tensor]
    best_epoch: int = 0
    best_val_acc: float = float("nan")


def snapshot(module: torch.nn.Module) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained classifier without training data.

    ``state`` holds the full model state dict (encoder, plus the similarity head
    for ``sn-knn``). ``prototypes`` is the (m, d) deployment prototype matrix
    for ``pn`` and ``None`` otherwise.
    """

    algorithm: str
    encoder_config: EncoderConfig
    seed: int
    classes: tuple[str, ...]
    state: dict[str, torch.Tensor]
    head_hidden: int | None = None
    prototypes: torch.Tensor | None = None
    prototype_n: int | None = None
    transform: dict | None = None

    def save(self, path) -> None:
        payload = {
            "algorithm": self.algorithm,
            "encoder_config": self.encoder_config.to_dict(),
            "seed": self.seed,
            "classes": list(self.classes),
            "state": self.state,
            "head_hidden": self.head_hidden,
            "prototypes": self.prototypes,
            "prototype_n": self.prototype_n,
            "transform": self.transform,
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        payload = torch.load(path, map_location="cpu", weights_only=True)
        payload["encoder_config"] = EncoderConfig(**payload["encoder_config"])
        payload["classes"] = tuple(payload["classes"])
        return cls(**payload)
