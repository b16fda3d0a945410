"""
Training and evaluating a prototypical network
==============================================

A short run on reduced 32-pixel inputs so it finishes in about a minute.
The run directory holds the checkpoint, the per-epoch log and the
test-split report.
"""
import json
from pathlib import Path

from fewshot_flame.config import RunConfig
from fewshot_flame.pipeline import evaluate_run, load_classifier, resolve_dataset, train_run

cfg = RunConfig(algorithm="pn", input_size=32, epochs=10, split_test=100,
                data_seed=7, model_seed=1, sampler_seed=2, output_dir="demo_out/pn")
out = Path(cfg.output_dir)
ds = resolve_dataset(cfg)

ckpt, log = train_run(cfg, ds, out_dir=out,
                      callback=lambda r: print(f"epoch {r.epoch:2d}  train {r.train_acc:.3f}  "
                                               f"val {r.val_acc:.3f}  loss {r.loss:.4f}"
                                               + ("  *" if r.improved else "")))
print("first epoch at 0.95 train accuracy:", log.epochs_to_reach(0.95))

# prototypes travel inside the checkpoint, so no training images are needed here
print(ckpt.prototypes.shape, ckpt.prototype_n)

cm, report = evaluate_run(ckpt, ds, out_path=out / "report.json")
print(cm)
print("macro", [round(v, 4) for v in report.macro.as_tuple()])

# single frames go straight from raw pixels to a class id
clf = load_classifier(ckpt)
frame = ds.split("test").samples[0]
print("predicted", clf.classify_frame(frame), "true", frame.class_id)

print(sorted(p.name for p in out.iterdir()))
print(json.loads((out / "report.json").read_text())["macro"])
