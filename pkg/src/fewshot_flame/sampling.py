"""Contrastive pair batches for the Siamese model and support/query episodes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, TransformConfig, transform_train
from .errors import CapacityError, SamplingError

BATCHES_PER_EPOCH = 4
EPISODES_PER_EPOCH = 4


@dataclass(frozen=True)
class PairBatch:
    first: np.ndarray        # (P, S, S, 3)
    second: np.ndarray       # (P, S, S, 3)
    labels: np.ndarray       # (P,) int64, 1 = same class
    first_ids: tuple[str, ...]
    second_ids: tuple[str, ...]
    first_classes: np.ndarray
    second_classes: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Episode:
    support: dict[int, np.ndarray]   # class_id -> (n_support, S, S, 3)
    query: dict[int, np.ndarray]     # class_id -> (n_query, S, S, 3)
    support_ids: dict[int, tuple[str, ...]]
    query_ids: dict[int, tuple[str, ...]]

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.support)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (support images, support labels, query images, query labels)."""
        cls = self.class_ids
        xs = np.concatenate([self.support[c] for c in cls])
        ys = np.concatenate([np.full(len(self.support[c]), c) for c in cls])
        xq = np.concatenate([self.query[c] for c in cls])
        yq = np.concatenate([np.full(len(self.query[c]), c) for c in cls])
        return xs, ys, xq, yq


def sample_pair_batch(train: Dataset, rng: np.random.Generator, n_anchors: int = 15,
                      cfg: TransformConfig = TransformConfig()) -> PairBatch:
    """Draw ``n_anchors`` anchors with replacement, each with a positive and a negative partner.

    Pairs are emitted as (anchor, positive), (anchor, negative) for each anchor in
    turn. The positive partner is a different sample of the anchor's class; the
    negative partner's class is uniform over the other classes.
    """
    groups = {c: idx for c, idx in train.by_class().items() if idx}
    if len(groups) < 2:
        raise SamplingError("pair sampling needs at least two classes with samples")
    for c, idx in groups.items():
        if len(idx) < 2:
            raise SamplingError(f"class {train.classes[c]!r} has fewer than 2 samples")
    classes = sorted(groups)
    samples = train.samples

    first, second, labels, fid, sid, fcls, scls = [], [], [], [], [], [], []
    for _ in range(n_anchors):
        a = int(rng.integers(len(samples)))
        ca = samples[a].class_id
        same = [i for i in groups[ca] if i != a]
        p = same[int(rng.integers(len(same)))]
        others = [c for c in classes if c != ca]
        cn = others[int(rng.integers(len(others)))]
        n = groups[cn][int(rng.integers(len(groups[cn])))]

        xa = transform_train(samples[a], rng, cfg)
        xp = transform_train(samples[p], rng, cfg)
        xn = transform_train(samples[n], rng, cfg)
        for partner, x, label in ((p, xp, 1), (n, xn, 0)):
            first.append(xa)
            second.append(x)
            labels.append(label)
            fid.append(samples[a].source_id)
            sid.append(samples[partner].source_id)
            fcls.append(ca)
            scls.append(samples[partner].class_id)
    return PairBatch(np.stack(first), np.stack(second), np.array(labels, dtype=np.int64),
                     tuple(fid), tuple(sid), np.array(fcls), np.array(scls))


def sample_episode(train: Dataset, rng: np.random.Generator, n_support: int = 5,
                   n_query: int = 5, cfg: TransformConfig = TransformConfig()) -> Episode:
    """Per class, draw a support set and a disjoint query set without replacement."""
    groups = train.by_class()
    need = n_support + n_query
    for c, idx in groups.items():
        if len(idx) < need:
            raise CapacityError(f"class {train.classes[c]!r} has {len(idx)} samples, "
                                f"episode needs {need}")
    support, query, support_ids, query_ids = {}, {}, {}, {}
    for c, idx in groups.items():
        chosen = rng.choice(np.asarray(idx), size=need, replace=False)
        s_idx, q_idx = chosen[:n_support], chosen[n_support:]
        support[c] = np.stack([transform_train(train.samples[i], rng, cfg) for i in s_idx])
        query[c] = np.stack([transform_train(train.samples[i], rng, cfg) for i in q_idx])
        support_ids[c] = tuple(train.samples[i].source_id for i in s_idx)
        query_ids[c] = tuple(train.samples[i].source_id for i in q_idx)
    return Episode(support, query, support_ids, query_ids)
