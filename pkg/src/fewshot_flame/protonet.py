"""Prototypical network: class prototypes, distance softmax and episodic training."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import torch

from .dataset import Dataset, TransformConfig, transform_eval_batch
from .encoder import Encoder, as_float_tensor, encode, inference
from .errors import NumericError
from .sampling import EPISODES_PER_EPOCH, Episode, sample_episode
from .training import EpochRecord, OptimizerSettings, TrainingLog, TrainingResult, snapshot

PROB_EPS = 1e-7


@dataclass(frozen=True)
class PrototypeSet:
    class_ids: tuple[int, ...]
    vectors: torch.Tensor  # (m, d), row i belongs to class_ids[i]
    n_per_class: int

    def as_dict(self) -> dict[int, torch.Tensor]:
        return {c: self.vectors[i] for i, c in enumerate(self.class_ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def compute_prototypes(support_embeddings: Mapping[int, torch.Tensor]) -> PrototypeSet:
    """Mean embedding per class. Differentiable when the inputs carry gradients."""
    class_ids = tuple(sorted(support_embeddings))
    rows, sizes = [], set()
    for c in class_ids:
        e = as_float_tensor(support_embeddings[c])
        if e.ndim == 1:
            e = e[None]
        if len(e) == 0:
            raise ValueError(f"class {c} has no support embeddings")
        rows.append(e.mean(dim=0))
        sizes.add(len(e))
    if not rows:
        raise ValueError("no classes given")
    n = sizes.pop() if len(sizes) == 1 else 0
    return PrototypeSet(class_ids, torch.stack(rows), n)


def class_distances(query, protos: PrototypeSet) -> torch.Tensor:
    """Euclidean distance from each query embedding to each prototype.

    ``query`` is (d,) or (q, d); the result is (m,) or (q, m) with columns in
    ``protos.class_ids`` order.
    """
    q = as_float_tensor(query)
    single = q.ndim == 1
    q2 = q[None] if single else q
    if q2.shape[-1] != protos.dim:
        raise ValueError(f"query dim {q2.shape[-1]} != prototype dim {protos.dim}")
    diff = q2[:, None, :] - protos.vectors[None].to(q2.dtype)
    # sqrt has an infinite derivative at 0; keep the gradient finite there
    sq = (diff * diff).sum(-1)
    d = torch.where(sq > 0, torch.sqrt(torch.where(sq > 0, sq, torch.ones_like(sq))),
                    torch.zeros_like(sq))
    return d[0] if single else d


def class_probabilities(distances) -> torch.Tensor:
    """Softmax over negative distances, shifted by the row minimum."""
    d = as_float_tensor(distances)
    if torch.isnan(d).any():
        raise NumericError("NaN distance")
    if d.shape[-1] < 2:
        raise ValueError("need at least two classes")
    shifted = d - d.min(dim=-1, keepdim=True).values
    w = torch.exp(-shifted)
    return w / w.sum(dim=-1, keepdim=True)


def pn_loss(probs, true_classes, standard: bool = False, eps: float = PROB_EPS) -> torch.Tensor:
    """Cross-entropy over (query, class) probability rows.

    By default every (query, class) cell contributes a binary cross-entropy
    term with target 1 for the true class and 0 elsewhere, averaged over all
    cells. ``standard=True`` uses the usual multiclass form, mean of
    ``-log P_true``. ``true_classes`` are column indices into ``probs``.
    """
    p = as_float_tensor(probs)
    if p.ndim == 1:
        p = p[None]
    y_idx = torch.as_tensor(true_classes, dtype=torch.long).reshape(-1)
    if len(y_idx) != len(p):
        raise ValueError(f"{len(p)} probability rows but {len(y_idx)} labels")
    p = p.clamp(eps, 1 - eps)
    if standard:
        return -torch.log(p.gather(1, y_idx[:, None])).mean()
    y = torch.zeros_like(p)
    y[torch.arange(len(p)), y_idx] = 1
    return -(y * torch.log(p) + (1 - y) * torch.log(1 - p)).mean()


def pn_classify(encoder: Encoder, protos: PrototypeSet, test_image,
                cfg: TransformConfig | None = None) -> tuple[int, torch.Tensor]:
    """Nearest-prototype class of a transformed image and its probability row.

    The decision is taken on the distances (identical to the probability
    argmax, but immune to probabilities that round to equal values); ties go
    to the lowest class id.
    """
    with inference(encoder):
        e = encode(encoder, np.asarray(test_image)[None])[0]
        d = class_distances(e, protos)
    return protos.class_ids[_first_argmin(d)], class_probabilities(d)


def _first_argmin(d: torch.Tensor) -> int:
    return int(torch.nonzero(d == d.min())[0, 0])


def predict_from_embeddings(embeddings: torch.Tensor, protos: PrototypeSet) -> np.ndarray:
    """Nearest-prototype class ids for a batch of embeddings."""
    d = class_distances(embeddings, protos)
    cols = np.array([_first_argmin(row) for row in d])
    return np.asarray(protos.class_ids)[cols]


def build_deployment_prototypes(encoder: Encoder, train: Dataset,
                                cfg: TransformConfig = TransformConfig(),
                                batch_size: int = 128) -> PrototypeSet:
    """Prototypes from every training image, eval-transformed."""
    images = transform_eval_batch(train.samples, cfg)
    with inference(encoder):
        emb = torch.cat([encode(encoder, images[i:i + batch_size])
                         for i in range(0, len(images), batch_size)])
    labels = train.class_ids
    return compute_prototypes({c: emb[labels == c] for c in sorted(set(labels.tolist()))})


# ------------------------------------------------------------------ training

def episode_forward(encoder: Encoder, episode: Episode, standard_loss: bool = False):
    """Loss and query predictions for one episode (gradients kept)."""
    xs, ys, xq, yq = episode.stacked()
    emb = encode(encoder, np.concatenate([xs, xq]))
    es, eq = emb[:len(xs)], emb[len(xs):]
    ys_t = torch.from_numpy(ys)
    protos = compute_prototypes({c: es[ys_t == c] for c in episode.class_ids})
    probs = class_probabilities(class_distances(eq, protos))
    col = {c: i for i, c in enumerate(protos.class_ids)}
    y_col = np.array([col[c] for c in yq])
    loss = pn_loss(probs, y_col, standard=standard_loss)
    pred = np.asarray(protos.class_ids)[torch.argmax(probs, dim=1).detach().numpy()]
    return loss, pred, yq


def validation_episodes(val: Dataset, seed: int = 0, n_episodes: int = EPISODES_PER_EPOCH,
                        n_support: int = 5, n_query: int = 5,
                        cfg: TransformConfig = TransformConfig()) -> list[Episode]:
    rng = np.random.default_rng(seed)
    return [sample_episode(val, rng, n_support, n_query, cfg) for _ in range(n_episodes)]


def evaluate_episodes(encoder: Encoder, episodes: list[Episode]) -> float:
    correct = total = 0
    with inference(encoder):
        for ep in episodes:
            _, pred, yq = episode_forward(encoder, ep)
            correct += int((pred == yq).sum())
            total += len(yq)
    return correct / total


def train_protonet(encoder: Encoder, train: Dataset, val: Dataset, epochs: int,
                   rng: np.random.Generator, optimizer: OptimizerSettings = OptimizerSettings(),
                   cfg: TransformConfig = TransformConfig(), n_support: int = 5, n_query: int = 5,
                   val_seed: int = 0, standard_loss: bool = False,
                   callback=None) -> TrainingResult:
    """Episodic training, four episodes per epoch, checkpoint on validation improvement."""
    opt = optimizer.build(encoder.parameters())
    log = TrainingLog()
    result = TrainingResult(log, snapshot(encoder))
    val_eps = validation_episodes(val, val_seed, EPISODES_PER_EPOCH, n_support, n_query, cfg) if epochs else []
    best = -1.0
    for epoch in range(1, epochs + 1):
        encoder.train()
        correct = total = 0
        losses = []
        for _ in range(EPISODES_PER_EPOCH):
            ep = sample_episode(train, rng, n_support, n_query, cfg)
            loss, pred, yq = episode_forward(encoder, ep, standard_loss)
            opt.zero_grad()
            loss.backward()
            opt.step()
            correct += int((pred == yq).sum())
            total += len(yq)
            losses.append(loss.item())
        val_acc = evaluate_episodes(encoder, val_eps)
        improved = val_acc > best
        if improved:
            best = val_acc
            result.best_state = snapshot(encoder)
            result.best_epoch, result.best_val_acc = epoch, val_acc
        log.append(EpochRecord(epoch, correct / total, val_acc, float(np.mean(losses)), improved))
        if callback is not None:
            callback(log.records[-1])
    return result
