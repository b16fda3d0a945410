"""End-to-end runs: dataset resolution, training, checkpoint loading and evaluation."""
from __future__ import annotations

import csv
import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .dataset import (MANIFEST_NAME, Dataset, TransformConfig, generate_synthetic_dataset,
                      load_dataset, load_prepared, transform_eval, transform_eval_batch,
                      write_manifest)
from .encoder import build_encoder, encode, inference
from .errors import ConfigurationError
from .evaluation import (MetricsReport, SpeedReport, benchmark_inference, confusion_matrix,
                         macro_metrics, write_report)
from .protonet import (PrototypeSet, build_deployment_prototypes, pn_classify,
                       predict_from_embeddings, train_protonet)
from .siamese_knn import (SiameseModel, SupportBank, build_siamese, build_support_bank,
                          knn_classify, knn_vote, train_siamese)
from .training import Checkpoint, TrainingLog

CHECKPOINT_NAME = "checkpoint.pt"
LOG_NAME = "training_log.jsonl"
CONFIG_NAME = "config.txt"
CURVES_NAME = "curves.csv"
REPORT_NAME = "report.json"
SPEED_NAME = "speed.json"


def resolve_dataset(cfg: RunConfig) -> Dataset:
    """Dataset named by ``cfg``: a prepared directory, a raw class tree, or synthetic."""
    if cfg.dataset:
        root = Path(cfg.dataset)
        if (root / MANIFEST_NAME).is_file():
            return load_prepared(root)
        return load_dataset(root, cfg.split_spec(), cfg.data_seed)
    return generate_synthetic_dataset(cfg.synthetic_classes, cfg.split_spec(),
                                      cfg.synthetic_difficulty, cfg.data_seed)


def dataset_manifest_entries(ds: Dataset) -> list[dict]:
    return [{"source_id": s.source_id, "class_id": s.class_id, "split": s.split}
            for s in ds.samples]


# ------------------------------------------------------------------ training

def train_run(cfg: RunConfig, ds: Dataset | None = None, out_dir=None, callback=None
              ) -> tuple[Checkpoint, TrainingLog]:
    """Train per ``cfg`` and return (best checkpoint, log). Writes artifacts if ``out_dir``."""
    ds = resolve_dataset(cfg) if ds is None else ds
    train, val = ds.split("train"), ds.split("validation")
    tcfg = cfg.transform_config()
    rng = np.random.default_rng(cfg.sampler_seed)
    ecfg = cfg.encoder_config()
    if cfg.algorithm == "sn-knn":
        model = build_siamese(ecfg, cfg.model_seed, cfg.head_hidden)
        result = train_siamese(model, train, val, cfg.epochs, rng, cfg.optimizer(), tcfg,
                               cfg.n_anchors, cfg.val_seed, callback)
        ckpt = Checkpoint("sn-knn", ecfg, cfg.model_seed, ds.classes, result.best_state,
                          head_hidden=cfg.head_hidden, transform=_transform_dict(tcfg))
    else:
        encoder = build_encoder(ecfg, cfg.model_seed)
        result = train_protonet(encoder, train, val, cfg.epochs, rng, cfg.optimizer(), tcfg,
                                cfg.n_support, cfg.n_query, cfg.val_seed, cfg.standard_loss,
                                callback)
        encoder.load_state_dict(result.best_state)
        protos = build_deployment_prototypes(encoder, train, tcfg)
        ckpt = Checkpoint("pn", ecfg, cfg.model_seed, ds.classes, result.best_state,
                          prototypes=protos.vectors, prototype_n=protos.n_per_class,
                          transform=_transform_dict(tcfg))
    if out_dir is not None:
        write_training_artifacts(Path(out_dir), cfg, ds, ckpt, result.log)
    return ckpt, result.log


def _transform_dict(t: TransformConfig) -> dict:
    return {"input_size": t.input_size, "scale_range": list(t.scale_range),
            "flip_probability": t.flip_probability, "seed": t.seed}


def write_training_artifacts(out: Path, cfg: RunConfig, ds: Dataset, ckpt: Checkpoint,
                             log: TrainingLog) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / CONFIG_NAME)
    if cfg.dataset and (Path(cfg.dataset) / MANIFEST_NAME).is_file():
        shutil.copyfile(Path(cfg.dataset) / MANIFEST_NAME, out / MANIFEST_NAME)
    else:
        write_manifest(out, ds.classes, dataset_manifest_entries(ds))
    ckpt.save(out / CHECKPOINT_NAME)
    log.write(out / LOG_NAME)
    write_curves(out / CURVES_NAME, log)
    if cfg.plot:
        plot_curves(out / "curves.png", log, cfg.algorithm)


def write_curves(path, log: TrainingLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_acc", "val_acc", "loss"])
        for r in log.records:
            w.writerow([r.epoch, repr(r.train_acc), repr(r.val_acc), repr(r.loss)])


def plot_curves(path, log: TrainingLog, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = [r.epoch for r in log.records]
    ax.plot(epochs, [r.train_acc for r in log.records], label="train")
    ax.plot(epochs, [r.val_acc for r in log.records], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------- inference

@dataclass
class SiameseKNNClassifier:
    model: SiameseModel
    bank: SupportBank
    k: int
    cfg: TransformConfig

    def classify_frame(self, frame) -> int:
        """Raw frame in, class out; re-encodes the whole support bank."""
        return knn_classify(self.model, transform_eval(frame, self.cfg), self.bank, self.k, self.cfg)[0]

    def predict(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Classify transformed images; bank embeddings are computed once."""
        bank = self.bank.with_embeddings(self.model.encoder)
        out = []
        with inference(self.model):
            for i in range(0, len(images), batch_size):
                e = encode(self.model.encoder, images[i:i + batch_size])
                scores = self.model.score_embeddings(e[:, None, :], bank.embeddings[None])
                for row in scores.double().numpy():
                    out.append(knn_vote(row, bank.class_ids, self.k, bank.source_ids)[0])
        return np.array(out, dtype=np.int64)


@dataclass
class PrototypeClassifier:
    encoder: torch.nn.Module
    prototypes: PrototypeSet
    cfg: TransformConfig

    def classify_frame(self, frame) -> int:
        return pn_classify(self.encoder, self.prototypes, transform_eval(frame, self.cfg))[0]

    def predict(self, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
        out = []
        with inference(self.encoder):
            for i in range(0, len(images), batch_size):
                out.append(predict_from_embeddings(encode(self.encoder, images[i:i + batch_size]),
                                                   self.prototypes))
        return np.concatenate(out) if out else np.zeros(0, np.int64)


def checkpoint_transform(ckpt: Checkpoint) -> TransformConfig:
    t = ckpt.transform or {}
    return TransformConfig(t.get("input_size", ckpt.encoder_config.input_size),
                           tuple(t.get("scale_range", (1.1, 1.5))),
                           t.get("flip_probability", 0.5), t.get("seed", 0))


def load_classifier(ckpt: Checkpoint, train: Dataset | None = None, k: int = 5):
    """Rebuild the frozen classifier stored in ``ckpt``.

    An sn-knn classifier needs the training split as its support bank; a pn
    classifier uses the stored prototypes and needs no training data.
    """
    tcfg = checkpoint_transform(ckpt)
    if ckpt.algorithm == "sn-knn":
        if train is None:
            raise ConfigurationError("sn-knn inference needs the training split")
        model = SiameseModel(build_encoder(ckpt.encoder_config, ckpt.seed), ckpt.head_hidden)
        model.load_state_dict(ckpt.state)
        model.eval()
        return SiameseKNNClassifier(model, build_support_bank(train, tcfg), k, tcfg)
    encoder = build_encoder(ckpt.encoder_config, ckpt.seed)
    encoder.load_state_dict(ckpt.state)
    encoder.eval()
    m = len(ckpt.classes)
    protos = PrototypeSet(tuple(range(m)), ckpt.prototypes, ckpt.prototype_n or 0)
    return PrototypeClassifier(encoder, protos, tcfg)


def _check_classes(ckpt: Checkpoint, ds: Dataset) -> None:
    if len(ckpt.classes) != ds.n_classes:
        raise ConfigurationError(f"checkpoint has {len(ckpt.classes)} classes, dataset has "
                                 f"{ds.n_classes}")


def evaluate_run(ckpt: Checkpoint, ds: Dataset, k: int = 5, out_path=None
                 ) -> tuple[np.ndarray, MetricsReport]:
    """Classify the test split; returns (confusion matrix, metrics)."""
    _check_classes(ckpt, ds)
    clf = load_classifier(ckpt, ds.split("train"), k)
    test = ds.split("test")
    pred = clf.predict(transform_eval_batch(test.samples, clf.cfg))
    cm = confusion_matrix(pred, test.class_ids, ds.n_classes)
    report = macro_metrics(cm)
    if out_path is not None:
        write_report(out_path, cm, report, ds.classes, {"algorithm": ckpt.algorithm})
    return cm, report


def benchmark_run(ckpt: Checkpoint, ds: Dataset, n_frames: int = 120, seed: int = 0,
                  k: int = 5, out_path=None) -> SpeedReport:
    """Frame-by-frame timing over validation images in a random order."""
    _check_classes(ckpt, ds)
    clf = load_classifier(ckpt, ds.split("train"), k)
    val = ds.split("validation").samples
    rng = np.random.default_rng(seed)
    order = rng.choice(len(val), size=n_frames, replace=n_frames > len(val))
    frames = [val[i] for i in order]
    report = benchmark_inference(clf.classify_frame, frames)
    if out_path is not None:
        Path(out_path).write_text(json.dumps({"algorithm": ckpt.algorithm, **report.__dict__},
                                             indent=1, sort_keys=True) + "\n")
    return report


def load_encoder(ckpt: Checkpoint):
    enc = build_encoder(ckpt.encoder_config, ckpt.seed)
    prefix = "encoder." if ckpt.algorithm == "sn-knn" else ""
    enc.load_state_dict({k[len(prefix):]: v for k, v in ckpt.state.items() if k.startswith(prefix)})
    enc.eval()
    return enc
