"""Confusion matrices, one-vs-rest metrics, latency benchmarking and embedding export."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .dataset import SPLITS, Dataset, TransformConfig, transform_eval_batch
from .encoder import Encoder, encode, inference


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.accuracy, self.precision, self.recall, self.f1)


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[int, ClassMetrics]
    macro: ClassMetrics


@dataclass(frozen=True)
class SpeedReport:
    total_ms: float
    per_frame_ms: float
    fps: float
    n_frames: int

    @classmethod
    def from_total(cls, total_ms: float, n_frames: int) -> "SpeedReport":
        if n_frames <= 0:
            raise ValueError("n_frames must be positive")
        per_frame = total_ms / n_frames
        return cls(total_ms, per_frame, 1000.0 / per_frame, n_frames)


def confusion_matrix(predictions: Sequence[int], truths: Sequence[int], m: int) -> np.ndarray:
    """``counts[t, p]`` = number of samples of true class ``t`` predicted as ``p``."""
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(truths, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ValueError(f"{len(pred)} predictions but {len(true)} truths")
    for name, arr in (("prediction", pred), ("truth", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= m):
            raise ValueError(f"{name} label outside [0, {m})")
    cm = np.zeros((m, m), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def per_class_metrics(cm: np.ndarray, c: int) -> ClassMetrics:
    """One-vs-rest accuracy, precision, recall and F1 for class ``c``.

    Empty denominators give 0 for precision, recall and F1.
    """
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    tp = int(cm[c, c])
    fn = int(cm[c].sum()) - tp
    fp = int(cm[:, c].sum()) - tp
    tn = total - tp - fn - fp
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    return ClassMetrics((tp + tn) / total, precision, recall,
                        _safe_div(2 * precision * recall, precision + recall))


def macro_metrics(cm: np.ndarray) -> MetricsReport:
    m = len(cm)
    per_class = {c: per_class_metrics(cm, c) for c in range(m)}
    cols = np.array([pc.as_tuple() for pc in per_class.values()])
    return MetricsReport(per_class, ClassMetrics(*(float(v) for v in cols.mean(axis=0))))


def write_report(path, cm: np.ndarray, report: MetricsReport, classes: Sequence[str] | None = None,
                 extra: dict | None = None) -> None:
    """Structured JSON report: confusion grid, per-class table and macro row."""
    m = len(cm)
    classes = list(classes) if classes is not None else [str(c) for c in range(m)]
    doc = {
        "classes": classes,
        "confusion_matrix": np.asarray(cm).tolist(),
        "per_class": [{"class_id": c, "class_name": classes[c], **asdict(report.per_class[c])}
                      for c in range(m)],
        "macro": asdict(report.macro),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def benchmark_inference(classify: Callable[[object], object], frames: Sequence) -> SpeedReport:
    """Time ``classify`` over ``frames`` one at a time, in order.

    ``classify`` receives a raw frame and is expected to transform it itself,
    so per-frame preprocessing counts toward the measured time. Model loading
    must happen before this call.
    """
    if len(frames) == 0:
        raise ValueError("no frames to benchmark")
    start = time.perf_counter()
    for frame in frames:
        classify(frame)
    total_ms = (time.perf_counter() - start) * 1000.0
    return SpeedReport.from_total(total_ms, len(frames))


def export_embeddings(encoder: Encoder, dataset: Dataset, path,
                      cfg: TransformConfig = TransformConfig(), batch_size: int = 128) -> Path:
    """Write one CSV row per sample: source_id, split, class_id, embedding entries.

    Rows are ordered by (split, class_id, source_id) with splits in
    train/validation/test order. Floats are written with ``repr`` so identical
    embeddings give byte-identical files.
    """
    path = Path(path)
    rank = {s: i for i, s in enumerate(SPLITS)}
    order = sorted(range(len(dataset)), key=lambda i: (rank[dataset.samples[i].split],
                                                       dataset.samples[i].class_id,
                                                       dataset.samples[i].source_id))
    samples = [dataset.samples[i] for i in order]
    chunks = []
    with inference(encoder):
        for i in range(0, len(samples), batch_size):
            chunks.append(encode(encoder, transform_eval_batch(samples[i:i + batch_size], cfg)))
    emb = torch.cat(chunks).numpy() if chunks else np.zeros((0, encoder.embedding_dim))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_id", "split", "class_id", *(f"e{j}" for j in range(emb.shape[1]))])
        for s, row in zip(samples, emb):
            w.writerow([s.source_id, s.split, s.class_id, *(repr(float(v)) for v in row)])
    return path


def read_embeddings(path) -> tuple[list[tuple[str, str, int]], np.ndarray]:
    """Inverse of :func:`export_embeddings`: (row keys, embedding matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    keys = [(r[0], r[1], int(r[2])) for r in body]
    emb = np.array([[float(v) for v in r[3:]] for r in body], dtype=np.float64)
    return keys, emb.reshape(len(body), len(rows[0]) - 3)
