"""Siamese similarity network with nearest-neighbour voting over the training set."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn as nn

from .dataset import Dataset, TransformConfig, transform_eval_batch
from .encoder import Encoder, EncoderConfig, as_float_tensor, build_encoder, encode, inference
from .errors import CapacityError
from .sampling import BATCHES_PER_EPOCH, PairBatch, sample_pair_batch
from .training import (EpochRecord, OptimizerSettings, TrainingLog, TrainingResult,
                       snapshot)

SCORE_EPS = 1e-7
DEFAULT_HEAD_HIDDEN = 512


class SiameseModel(nn.Module):
    """Shared encoder followed by a two-layer head on ``|e_a - e_b|``.

    Both branches call the same :class:`Encoder`, so there is exactly one
    set of encoder weights.
    """

    def __init__(self, encoder: Encoder, hidden: int = DEFAULT_HEAD_HIDDEN):
        super().__init__()
        self.encoder = encoder
        self.hidden = hidden
        self.head = nn.Sequential(nn.Linear(encoder.embedding_dim, hidden), nn.ReLU(),
                                  nn.Linear(hidden, 1))

    def score_embeddings(self, ea: torch.Tensor, eb: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.head(torch.abs(ea - eb))).squeeze(-1)

    def forward(self, images_a, images_b) -> torch.Tensor:
        n = len(images_a)
        emb = encode(self.encoder, np.concatenate([np.asarray(images_a), np.asarray(images_b)]))
        return self.score_embeddings(emb[:n], emb[n:])


def build_siamese(cfg: EncoderConfig = EncoderConfig(), seed: int = 0,
                  hidden: int = DEFAULT_HEAD_HIDDEN) -> SiameseModel:
    enc = build_encoder(cfg, seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed + 1)
        model = SiameseModel(enc, hidden)
    return model


def _check_pair_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")


def similarity(model: SiameseModel, image_a, image_b) -> float:
    """Similarity score in [0, 1] of two transformed images."""
    a, b = np.asarray(image_a), np.asarray(image_b)
    _check_pair_shapes(a, b)
    with inference(model):
        return float(model(a[None], b[None])[0])


def pair_scores(model: SiameseModel, images_a, images_b) -> np.ndarray:
    a, b = np.asarray(images_a), np.asarray(images_b)
    _check_pair_shapes(a, b)
    with inference(model):
        return model(a, b).double().numpy()


def bce_loss(scores, labels, eps: float = SCORE_EPS) -> torch.Tensor:
    """Mean binary cross-entropy with scores clamped to [eps, 1 - eps]."""
    s = as_float_tensor(scores)
    y = torch.as_tensor(labels, dtype=s.dtype)
    if s.shape != y.shape:
        raise ValueError(f"scores {tuple(s.shape)} and labels {tuple(y.shape)} differ in length")
    s = s.clamp(eps, 1 - eps)
    return -(y * torch.log(s) + (1 - y) * torch.log(1 - s)).mean()


# --------------------------------------------------------------- kNN protocol

@dataclass(frozen=True)
class SupportBank:
    """Eval-transformed training images; ``embeddings`` optionally caches their encodings."""

    images: np.ndarray
    class_ids: np.ndarray
    source_ids: tuple[str, ...]
    embeddings: torch.Tensor | None = None

    def __len__(self) -> int:
        return len(self.class_ids)

    def with_embeddings(self, encoder: Encoder) -> "SupportBank":
        with inference(encoder):
            emb = encode(encoder, self.images)
        return replace(self, embeddings=emb)


def build_support_bank(train: Dataset, cfg: TransformConfig = TransformConfig()) -> SupportBank:
    if len(train) == 0:
        return SupportBank(np.zeros((0, cfg.input_size, cfg.input_size, 3), np.float32),
                           np.zeros(0, np.int64), ())
    return SupportBank(transform_eval_batch(train.samples, cfg), train.class_ids,
                       tuple(s.source_id for s in train.samples))


@dataclass(frozen=True)
class DecisionSet:
    entries: tuple[tuple[str, int, float], ...]  # (source_id, class_id, score), best first

    @property
    def class_ids(self) -> list[int]:
        return [c for _, c, _ in self.entries]

    @property
    def scores(self) -> list[float]:
        return [s for _, _, s in self.entries]


def knn_vote(scores, class_ids, k: int = 5, source_ids=None) -> tuple[int, DecisionSet]:
    """Plurality vote among the ``k`` highest scores.

    Equal scores keep their bank order. A tied vote goes to the class with the
    largest summed score inside the decision set, then to the lowest class id.
    """
    scores = np.asarray(scores, dtype=np.float64)
    class_ids = np.asarray(class_ids)
    if k % 2 == 0 or k < 1:
        raise ValueError(f"k must be a positive odd integer, got {k}")
    if len(scores) == 0:
        raise CapacityError("empty training set")
    if k > len(scores):
        raise ValueError(f"k={k} exceeds training-set size {len(scores)}")
    if source_ids is None:
        source_ids = [str(i) for i in range(len(scores))]
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    entries = tuple((source_ids[i], int(class_ids[i]), float(scores[i])) for i in order)

    votes: dict[int, int] = defaultdict(int)
    mass: dict[int, float] = defaultdict(float)
    for _, c, s in entries:
        votes[c] += 1
        mass[c] += s
    winner = min(votes, key=lambda c: (-votes[c], -mass[c], c))
    return winner, DecisionSet(entries)


def knn_classify(model: SiameseModel, test_image, train, k: int = 5,
                 cfg: TransformConfig = TransformConfig()) -> tuple[int, DecisionSet]:
    """Score ``test_image`` against every training sample and vote among the top ``k``.

    ``train`` is a :class:`Dataset` (eval-transformed on the fly) or a
    :class:`SupportBank`. Unless the bank carries cached embeddings, every
    training image is re-encoded on each call.
    """
    bank = train if isinstance(train, SupportBank) else build_support_bank(train, cfg)
    if k % 2 == 0 or k < 1:
        raise ValueError(f"k must be a positive odd integer, got {k}")
    if len(bank) == 0:
        raise CapacityError("empty training set")
    x = np.asarray(test_image)
    if x.shape != bank.images.shape[1:]:
        raise ValueError(f"test image shape {x.shape} does not match bank {bank.images.shape[1:]}")
    with inference(model):
        if bank.embeddings is None:
            emb = encode(model.encoder, np.concatenate([x[None], bank.images]))
            e_test, e_bank = emb[:1], emb[1:]
        else:
            e_test, e_bank = encode(model.encoder, x[None]), bank.embeddings
        scores = model.score_embeddings(e_test.expand_as(e_bank), e_bank).double().numpy()
    return knn_vote(scores, bank.class_ids, k, bank.source_ids)


# ------------------------------------------------------------------ training

def _batch_step(model: SiameseModel, batch: PairBatch) -> tuple[torch.Tensor, torch.Tensor]:
    scores = model(batch.first, batch.second)
    return scores, bce_loss(scores, torch.from_numpy(batch.labels).to(scores.dtype))


def pair_accuracy(scores, labels) -> float:
    pred = (np.asarray(scores) > 0.5).astype(np.int64)
    return float((pred == np.asarray(labels)).mean())


def validation_pairs(val: Dataset, seed: int = 0, n_batches: int = BATCHES_PER_EPOCH,
                     n_anchors: int = 15, cfg: TransformConfig = TransformConfig()) -> list[PairBatch]:
    rng = np.random.default_rng(seed)
    return [sample_pair_batch(val, rng, n_anchors, cfg) for _ in range(n_batches)]


def evaluate_pairs(model: SiameseModel, batches: list[PairBatch]) -> float:
    correct = total = 0
    for b in batches:
        s = pair_scores(model, b.first, b.second)
        correct += int(((s > 0.5).astype(np.int64) == b.labels).sum())
        total += len(b)
    return correct / total


def train_siamese(model: SiameseModel, train: Dataset, val: Dataset, epochs: int,
                  rng: np.random.Generator, optimizer: OptimizerSettings = OptimizerSettings(),
                  cfg: TransformConfig = TransformConfig(), n_anchors: int = 15,
                  val_seed: int = 0, callback=None) -> TrainingResult:
    """Epoch-batch training with validation checkpointing.

    Each epoch runs four pair batches. After every epoch the pair accuracy on a
    fixed, seeded set of validation batches is measured; the weights are
    snapshotted whenever it strictly improves. ``model`` ends holding the last
    epoch's weights; ``result.best_state`` holds the checkpoint.
    """
    opt = optimizer.build(model.parameters())
    log = TrainingLog()
    result = TrainingResult(log, snapshot(model))
    val_batches = validation_pairs(val, val_seed, BATCHES_PER_EPOCH, n_anchors, cfg) if epochs else []
    best = -1.0
    for epoch in range(1, epochs + 1):
        model.train()
        correct = total = 0
        losses = []
        for _ in range(BATCHES_PER_EPOCH):
            batch = sample_pair_batch(train, rng, n_anchors, cfg)
            scores, loss = _batch_step(model, batch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            pred = (scores.detach().numpy() > 0.5).astype(np.int64)
            correct += int((pred == batch.labels).sum())
            total += len(batch)
            losses.append(loss.item())
        val_acc = evaluate_pairs(model, val_batches)
        improved = val_acc > best
        if improved:
            best = val_acc
            result.best_state = snapshot(model)
            result.best_epoch, result.best_val_acc = epoch, val_acc
        log.append(EpochRecord(epoch, correct / total, val_acc, float(np.mean(losses)), improved))
        if callback is not None:
            callback(log.records[-1])
    return result
