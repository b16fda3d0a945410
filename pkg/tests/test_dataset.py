import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewshot_flame.dataset import (Dataset, ImageSample, SplitSpec, TransformConfig,
                                   export_dataset, generate_synthetic_dataset, load_dataset,
                                   load_prepared, transform_eval, transform_eval_batch,
                                   transform_train)
from fewshot_flame.errors import CapacityError, ConfigurationError, StructureError

from oracles import nearest_centroid_oracle


def _square(side, seed=0):
    return np.random.default_rng(seed).integers(0, 256, (side, side, 3), dtype=np.uint8)


def test_synthetic_counts_default_split():
    ds = generate_synthetic_dataset(6, SplitSpec(), "easy", 7)
    assert len(ds) == 2640
    assert ds.n_classes == 6
    assert ds.split_counts == {s: {c: n for c in range(6)}
                               for s, n in (("train", 20), ("validation", 20), ("test", 400))}


def test_synthetic_is_deterministic():
    a = generate_synthetic_dataset(3, (2, 2, 2), "hard", 11, image_size=(30, 20))
    b = generate_synthetic_dataset(3, (2, 2, 2), "hard", 11, image_size=(30, 20))
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.samples, b.samples))
    c = generate_synthetic_dataset(3, (2, 2, 2), "hard", 12, image_size=(30, 20))
    assert not np.array_equal(a.samples[0].data, c.samples[0].data)


@pytest.mark.parametrize("bad", [0, 1])
def test_synthetic_needs_two_classes(bad):
    with pytest.raises(ValueError):
        generate_synthetic_dataset(bad, (1, 1, 1), "easy", 0)


def test_hard_mode_nearest_centroid_between_chance_and_090():
    ds = generate_synthetic_dataset(6, (20, 20, 100), "hard", 7)
    cfg = TransformConfig(input_size=32)
    tr, te = ds.split("train"), ds.split("test")
    xtr = transform_eval_batch(tr.samples, cfg).reshape(len(tr), -1)
    xte = transform_eval_batch(te.samples, cfg).reshape(len(te), -1)
    acc = nearest_centroid_oracle(xtr, tr.class_ids, xte, te.class_ids)
    assert 1 / 6 < acc < 0.9


def test_pixels_in_unit_range(tiny_ds):
    for s in tiny_ds.samples[:20]:
        p = s.pixels
        assert p.dtype == np.float32 and p.min() >= 0 and p.max() <= 1


def test_image_sample_rejects_bad_arrays():
    with pytest.raises(ValueError):
        ImageSample(np.zeros((4, 4), np.uint8), 0, "train", "x")
    with pytest.raises(ValueError):
        ImageSample(np.zeros((4, 4, 3), np.float32), 0, "train", "x")
    with pytest.raises(ValueError):
        ImageSample(np.zeros((4, 4, 3), np.uint8), 0, "holdout", "x")


def test_dataset_rejects_out_of_range_class():
    with pytest.raises(ValueError):
        Dataset(("a",), (ImageSample(np.zeros((4, 4, 3), np.uint8), 1, "train", "x"),))


# ------------------------------------------------------------------ disk I/O

@pytest.fixture(scope="module")
def exported(tmp_path_factory, tiny_ds):
    root = tmp_path_factory.mktemp("exported")
    export_dataset(tiny_ds, root, overwrite=True)
    return root


def test_load_dataset_partitions_per_split_sizes(exported):
    ds = load_dataset(exported, (5, 5, 8), seed=1)
    assert ds.classes == tuple(f"class_{i}" for i in range(1, 7))
    assert ds.split_counts["train"] == {c: 5 for c in range(6)}
    assert ds.split_counts["test"] == {c: 8 for c in range(6)}
    ids = [s.source_id for s in ds.samples]
    assert len(ids) == len(set(ids)) == 6 * 18


def test_load_dataset_is_deterministic(exported):
    a = load_dataset(exported, (5, 5, 8), seed=1)
    b = load_dataset(exported, (5, 5, 8), seed=1)
    assert [(s.source_id, s.split) for s in a.samples] == [(s.source_id, s.split) for s in b.samples]
    c = load_dataset(exported, (5, 5, 8), seed=2)
    assert [(s.source_id, s.split) for s in a.samples] != [(s.source_id, s.split) for s in c.samples]


def test_load_dataset_capacity_error_names_class(exported):
    with pytest.raises(CapacityError, match="class_1.*short by"):
        load_dataset(exported, (20, 20, 400), seed=0)


def test_load_dataset_missing_class_dir(exported):
    with pytest.raises(StructureError, match="class_9"):
        load_dataset(exported, (1, 1, 1), classes=["class_1", "class_9"])


def test_load_dataset_empty_root(tmp_path):
    with pytest.raises(StructureError):
        load_dataset(tmp_path, (1, 1, 1))


def test_roundtrip_preserves_pixels_and_splits(exported, tiny_ds):
    back = load_prepared(exported)
    assert back.classes == tiny_ds.classes
    for a, b in zip(tiny_ds.samples, back.samples):
        assert (a.source_id, a.split, a.class_id) == (b.source_id, b.split, b.class_id)
        assert np.array_equal(a.data, b.data)


def test_export_refuses_non_empty_dir(exported, tiny_ds):
    with pytest.raises(FileExistsError):
        export_dataset(tiny_ds, exported)


# ---------------------------------------------------------------- transforms

def test_train_transform_output_shape_default(tiny_ds, rng):
    out = transform_train(tiny_ds.samples[0], rng)
    assert out.shape == (84, 84, 3)


def test_identity_configuration():
    img = _square(84)
    cfg = TransformConfig(84, (1.0, 1.0), 0.0)
    out = transform_train(img, np.random.default_rng(0), cfg)
    assert np.array_equal(out, img.astype(np.float32) / 255)


def test_flip_is_involution():
    img = _square(84)
    cfg = TransformConfig(84, (1.0, 1.0), 1.0)
    once = transform_train(img, np.random.default_rng(0), cfg)
    assert np.array_equal(once, img[:, ::-1].astype(np.float32) / 255)
    twice = transform_train(once, np.random.default_rng(1), cfg)
    assert np.array_equal(twice, img.astype(np.float32) / 255)


def test_flip_rate():
    img = _square(8)
    cfg = TransformConfig(8, (1.0, 1.0), 0.5)
    gen = np.random.default_rng(5)
    base = img.astype(np.float32) / 255
    flips = sum(not np.array_equal(transform_train(img, gen, cfg), base) for _ in range(10_000))
    assert abs(flips / 10_000 - 0.5) <= 0.02


def test_train_transform_deterministic_for_fixed_stream(tiny_ds):
    a = transform_train(tiny_ds.samples[3], np.random.default_rng(9))
    b = transform_train(tiny_ds.samples[3], np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_eval_transform_deterministic(tiny_ds):
    a = transform_eval(tiny_ds.samples[0])
    b = transform_eval(tiny_ds.samples[0])
    assert np.array_equal(a, b) and a.shape == (84, 84, 3)


def test_eval_transform_square_84_is_noop():
    img = _square(84, 3)
    out = transform_eval(img)
    assert np.max(np.abs(out - img.astype(np.float32) / 255)) == 0


def test_eval_transform_keeps_center_square():
    img = np.random.default_rng(0).integers(0, 256, (200, 100, 3), dtype=np.uint8)
    out = transform_eval(img, TransformConfig(input_size=100))
    assert np.array_equal(out, img[50:150].astype(np.float32) / 255)


def test_landscape_image_uses_shorter_side():
    img = np.random.default_rng(0).integers(0, 256, (60, 90, 3), dtype=np.uint8)
    out = transform_eval(img, TransformConfig(input_size=60))
    assert np.array_equal(out, img[:, 15:75].astype(np.float32) / 255)


@pytest.mark.parametrize("kwargs", [dict(scale_range=(0.9, 1.2)), dict(scale_range=(1.5, 1.1)),
                                    dict(flip_probability=1.5), dict(input_size=0)])
def test_transform_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        TransformConfig(**kwargs)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(20, 120), w=st.integers(20, 120), size=st.integers(8, 48),
       lo=st.floats(1.0, 1.6), span=st.floats(0.0, 0.5), seed=st.integers(0, 2**31))
def test_transform_shape_and_range_property(h, w, size, lo, span, seed):
    img = np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)
    cfg = TransformConfig(size, (lo, lo + span), 0.5)
    for out in (transform_train(img, np.random.default_rng(seed), cfg), transform_eval(img, cfg)):
        assert out.shape == (size, size, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0
