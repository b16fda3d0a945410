import numpy as np
import pytest

from fewshot_flame.dataset import Dataset, ImageSample
from fewshot_flame.errors import CapacityError, SamplingError
from fewshot_flame.sampling import sample_episode, sample_pair_batch


@pytest.fixture(scope="module")
def train(tiny_ds):
    return tiny_ds.split("train")


def test_default_pair_batch(train, tiny_cfg, rng):
    b = sample_pair_batch(train, rng, cfg=tiny_cfg)
    assert len(b) == 30 and b.labels.sum() == 15
    assert b.first.shape == b.second.shape == (30, 24, 24, 3)


def test_single_anchor(train, tiny_cfg, rng):
    b = sample_pair_batch(train, rng, n_anchors=1, cfg=tiny_cfg)
    assert b.labels.tolist() == [1, 0]


def test_pair_labels_match_classes(train, tiny_cfg, rng):
    for _ in range(20):
        b = sample_pair_batch(train, rng, cfg=tiny_cfg)
        assert np.array_equal(b.labels, (b.first_classes == b.second_classes).astype(int))
        pos = b.labels == 1
        assert all(f != s for f, s, p in zip(b.first_ids, b.second_ids, pos) if p)


def test_every_training_sample_becomes_an_anchor(train, tiny_cfg):
    gen = np.random.default_rng(0)
    seen = set()
    for _ in range(1000):
        seen.update(sample_pair_batch(train, gen, cfg=tiny_cfg).first_ids)
    assert seen == {s.source_id for s in train.samples}


def test_pair_batch_needs_two_classes(tiny_cfg, rng):
    img = np.zeros((30, 30, 3), np.uint8)
    single = Dataset(("a",), tuple(ImageSample(img, 0, "train", f"a/{i}") for i in range(4)))
    with pytest.raises(SamplingError):
        sample_pair_batch(single, rng, cfg=tiny_cfg)


def test_pair_batch_reproducible(train, tiny_cfg):
    a = sample_pair_batch(train, np.random.default_rng(3), cfg=tiny_cfg)
    b = sample_pair_batch(train, np.random.default_rng(3), cfg=tiny_cfg)
    assert a.first_ids == b.first_ids and a.second_ids == b.second_ids
    assert a.first.tobytes() == b.first.tobytes() and a.second.tobytes() == b.second.tobytes()


def test_default_episode_sizes(train, tiny_cfg, rng):
    ep = sample_episode(train, rng, cfg=tiny_cfg)
    assert sum(len(v) for v in ep.support.values()) == 30
    assert sum(len(v) for v in ep.query.values()) == 30
    assert ep.class_ids == list(range(6))


def test_episode_capacity_error(tiny_cfg, rng):
    img = np.zeros((30, 30, 3), np.uint8)
    ds = Dataset(("a", "b"), tuple(ImageSample(img, c, "train", f"{c}/{i}")
                                   for c in range(2) for i in range(20)))
    with pytest.raises(CapacityError, match="'a'"):
        sample_episode(ds, rng, n_support=20, n_query=1, cfg=tiny_cfg)


def test_episode_support_query_disjoint(train, tiny_cfg, rng):
    for _ in range(50):
        ep = sample_episode(train, rng, 3, 4, tiny_cfg)
        for c in ep.class_ids:
            assert not set(ep.support_ids[c]) & set(ep.query_ids[c])
            assert len(set(ep.support_ids[c])) == 3 and len(set(ep.query_ids[c])) == 4


def test_episode_reproducible(train, tiny_cfg):
    a = sample_episode(train, np.random.default_rng(8), cfg=tiny_cfg)
    b = sample_episode(train, np.random.default_rng(8), cfg=tiny_cfg)
    assert a.support_ids == b.support_ids and a.query_ids == b.query_ids
    assert all(a.support[c].tobytes() == b.support[c].tobytes() for c in a.class_ids)
