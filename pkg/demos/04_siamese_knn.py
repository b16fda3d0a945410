"""
Siamese similarity with a k-nearest-neighbour vote
==================================================

Trains the pair scorer briefly, then shows the ranked decision set
behind one prediction.
"""
import numpy as np

from fewshot_flame.dataset import SplitSpec, TransformConfig, generate_synthetic_dataset, transform_eval
from fewshot_flame.encoder import EncoderConfig
from fewshot_flame.siamese_knn import (build_siamese, build_support_bank, knn_classify, knn_vote,
                                       similarity, train_siamese)
from fewshot_flame.training import OptimizerSettings

ds = generate_synthetic_dataset(6, SplitSpec(20, 20, 20), seed=7)
train, val, test = ds.split("train"), ds.split("validation"), ds.split("test")
cfg = TransformConfig(input_size=32)

model = build_siamese(EncoderConfig(input_size=32), seed=1)
result = train_siamese(model, train, val, epochs=15, rng=np.random.default_rng(2),
                       optimizer=OptimizerSettings(1e-3), cfg=cfg)
for r in result.log.records[::3]:
    print(r)
model.load_state_dict(result.best_state)

# similarity of a same-class and a different-class pair
a, b, c = (transform_eval(test.samples[i], cfg) for i in (0, 1, -1))
print(test.samples[0].class_id, test.samples[1].class_id, test.samples[-1].class_id)
print(round(similarity(model, a, b), 4), round(similarity(model, a, c), 4))

# caching bank embeddings makes repeated queries cheap
bank = build_support_bank(train, cfg).with_embeddings(model.encoder)
label, decision = knn_classify(model, a, bank, k=5, cfg=cfg)
print("predicted", label)
for source_id, class_id, score in decision.entries:
    print(f"  {source_id:>14}  class {class_id}  score {score:.4f}")

# the vote itself: classes 1 and 3 tie on count and on summed score, so the lower id wins
label, decision = knn_vote([0.9, 0.9, 0.8, 0.8, 0.7, 0.1], [3, 1, 1, 3, 0, 2], k=5)
print(label, decision.class_ids)
