"""
Pair batches and episodes
=========================

The two training samplers side by side: labelled image pairs for the
siamese model and support/query episodes for the prototypical network.
"""
import numpy as np

from fewshot_flame.dataset import SplitSpec, TransformConfig, generate_synthetic_dataset
from fewshot_flame.sampling import sample_episode, sample_pair_batch

train = generate_synthetic_dataset(6, SplitSpec(20, 20, 1), seed=7).split("train")
cfg = TransformConfig(input_size=32)
rng = np.random.default_rng(2)

# 15 anchors, each paired once with its own class and once with another
batch = sample_pair_batch(train, rng, n_anchors=15, cfg=cfg)
print(len(batch), batch.first.shape, batch.labels[:6])
for a, b, c1, c2, y in list(zip(batch.first_ids, batch.second_ids, batch.first_classes,
                                batch.second_classes, batch.labels))[:4]:
    print(f"{a:>18} ({c1})  {b:>18} ({c2})  same={int(y)}")

# every class contributes 5 support and 5 query images, disjoint
ep = sample_episode(train, rng, n_support=5, n_query=5, cfg=cfg)
print(ep.class_ids)
print(ep.support_ids[0], ep.query_ids[0])
support, support_y, query, query_y = ep.stacked()
print(support.shape, query.shape, np.bincount(query_y))
