
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewshot_flame.dataset import Dataset
from fewshot_flame.encoder import EncoderConfig, build_encoder
from fewshot_flame.evaluation import (SpeedReport, benchmark_inference, confusion_matrix,
                                      export_embeddings, macro_metrics, per_class_metrics,
                                      read_embeddings, write_report)

from oracles import metrics_oracle


def test_perfect_predictions_diagonal():
    y = [0, 1, 2, 2, 1, 0, 0]
    cm = confusion_matrix(y, y, 3)
    assert np.array_equal(cm, np.diag([3, 2, 2]))
    assert macro_metrics(cm).macro.as_tuple() == (1.0, 1.0, 1.0, 1.0)
    for c in range(3):
        assert per_class_metrics(cm, c).as_tuple() == (1.0, 1.0, 1.0, 1.0)


def test_single_misclassification_row():
    truths = [0] * 400
    preds = [0] * 399 + [1]
    cm = confusion_matrix(preds, truths, 6)
    assert cm[0].tolist() == [399, 1, 0, 0, 0, 0]
    pc = per_class_metrics(cm, 0)
    assert pc.recall == 0.9975 and pc.precision == 1.0


def test_empty_input():
    assert not confusion_matrix([], [], 4).any()


def test_label_out_of_range():
    with pytest.raises(ValueError):
        confusion_matrix([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        confusion_matrix([0], [0, 1], 3)


def test_zero_division_conventions():
    cm = np.array([[2, 0], [2, 0]])  # class 1 never predicted, never right
    pc = per_class_metrics(cm, 1)
    assert pc.precision == 0.0 and pc.recall == 0.0 and pc.f1 == 0.0


def test_metrics_match_counting_oracle():
    gen = np.random.default_rng(0)
    for _ in range(200):
        m = int(gen.integers(2, 6))
        n = int(gen.integers(1, 60))
        t, p = gen.integers(0, m, n), gen.integers(0, m, n)
        cm = confusion_matrix(p, t, m)
        assert cm.sum() == n
        assert cm.sum(axis=1).tolist() == np.bincount(t, minlength=m).tolist()
        for c in range(m):
            got = per_class_metrics(cm, c).as_tuple()
            np.testing.assert_allclose(got, metrics_oracle(p.tolist(), t.tolist(), c), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda m: st.tuples(
    st.just(m), st.lists(st.tuples(st.integers(0, m - 1), st.integers(0, m - 1)), min_size=1,
                         max_size=80), st.permutations(range(m)))))
def test_macro_invariant_under_relabeling(args):
    m, pairs, perm = args
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    perm = np.array(perm)
    r1 = macro_metrics(confusion_matrix(p, t, m))
    r2 = macro_metrics(confusion_matrix(perm[p], perm[t], m))
    np.testing.assert_allclose(r1.macro.as_tuple(), r2.macro.as_tuple(), rtol=1e-12)
    for v in r1.macro.as_tuple():
        assert 0.0 <= v <= 1.0
    for pc in r1.per_class.values():
        if pc.precision + pc.recall > 0:
            assert pc.f1 == pytest.approx(2 * pc.precision * pc.recall / (pc.precision + pc.recall))


def test_speed_report_table_values():
    r = SpeedReport.from_total(5687.5, 120)
    assert r.per_frame_ms == pytest.approx(47.396, abs=5e-4)
    assert round(r.fps, 2) == 21.10
    assert r.fps * r.per_frame_ms == pytest.approx(1000.0, rel=1e-12)


def test_benchmark_consistency_and_order():
    seen = []
    rep = benchmark_inference(seen.append, list(range(7)))
    assert seen == list(range(7)) and rep.n_frames == 7
    assert rep.fps * rep.per_frame_ms == pytest.approx(1000.0, rel=1e-6)
    assert rep.per_frame_ms == pytest.approx(rep.total_ms / 7, rel=1e-12)


def test_benchmark_empty():
    with pytest.raises(ValueError):
        benchmark_inference(lambda f: None, [])


def test_report_file(tmp_path):
    cm = confusion_matrix([0, 1, 1], [0, 1, 0], 2)
    write_report(tmp_path / "r.json", cm, macro_metrics(cm), ["a", "b"])
    import json
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["confusion_matrix"] == [[1, 1], [0, 1]]
    assert [r["class_name"] for r in doc["per_class"]] == ["a", "b"]
    assert set(doc["macro"]) == {"accuracy", "precision", "recall", "f1"}


# ------------------------------------------------------------- embeddings

SMALL = EncoderConfig("small-conv", 16, input_size=24, channels=8)


def test_export_shape_and_order(tmp_path, tiny_ds, tiny_cfg):
    enc = build_encoder(SMALL, 0)
    path = export_embeddings(enc, tiny_ds, tmp_path / "e.csv", tiny_cfg)
    keys, emb = read_embeddings(path)
    assert emb.shape == (len(tiny_ds), 16)
    header = path.read_text().splitlines()[0].split(",")
    assert len(header) == 3 + 16
    rank = {"train": 0, "validation": 1, "test": 2}
    sort_keys = [(rank[s], c, sid) for sid, s, c in keys]
    assert sort_keys == sorted(sort_keys)


def test_export_is_bit_identical(tmp_path, tiny_ds, tiny_cfg):
    enc = build_encoder(SMALL, 0)
    a = export_embeddings(enc, tiny_ds, tmp_path / "a.csv", tiny_cfg).read_bytes()
    b = export_embeddings(build_encoder(SMALL, 0), tiny_ds, tmp_path / "b.csv", tiny_cfg).read_bytes()
    assert a == b


def test_export_duplicated_sample(tmp_path, tiny_ds, tiny_cfg):
    s = tiny_ds.samples[0]
    ds = Dataset(tiny_ds.classes, tiny_ds.samples + (s,))
    keys, emb = read_embeddings(export_embeddings(build_encoder(SMALL, 0), ds, tmp_path / "d.csv",
                                                  tiny_cfg))
    rows = [i for i, k in enumerate(keys) if k[0] == s.source_id]
    assert len(rows) == 2 and np.array_equal(emb[rows[0]], emb[rows[1]])


def test_export_unwritable_path(tmp_path, tiny_ds, tiny_cfg):
    with pytest.raises(OSError):
        export_embeddings(build_encoder(SMALL, 0), tiny_ds, tmp_path / "missing" / "e.csv", tiny_cfg)
