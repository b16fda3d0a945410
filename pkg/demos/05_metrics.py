"""
Confusion matrix and one-vs-rest metrics
========================================

Hand-made predictions, so every number can be worked out by hand.
"""
import json
from pathlib import Path

from fewshot_flame.evaluation import confusion_matrix, macro_metrics, per_class_metrics, write_report

truth = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
pred  = [0, 0, 0, 1, 1, 1, 0, 1, 2, 2, 2, 2]

cm = confusion_matrix(pred, truth, 3)
print(cm)  # rows are true classes

# class 0: tp 3, fn 1, fp 1, tn 7
print(per_class_metrics(cm, 0))

report = macro_metrics(cm)
for c, m in report.per_class.items():
    print(c, [round(v, 4) for v in m.as_tuple()])
print("macro", [round(v, 4) for v in report.macro.as_tuple()])

# a class never predicted gets precision 0 rather than a division error
print(per_class_metrics(confusion_matrix([0, 0], [0, 1], 2), 1))

Path("demo_out").mkdir(exist_ok=True)
write_report("demo_out/metrics.json", cm, report, ["red", "blue", "green"])
print(json.loads(Path("demo_out/metrics.json").read_text())["per_class"][0])
