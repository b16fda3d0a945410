"""
Inference speed and embedding export
====================================

Times both classifiers frame by frame on one shared encoder, then
writes the embeddings of every image to CSV.
"""
import numpy as np

from fewshot_flame.dataset import SplitSpec, TransformConfig, generate_synthetic_dataset
from fewshot_flame.encoder import EncoderConfig
from fewshot_flame.evaluation import benchmark_inference, export_embeddings, read_embeddings
from fewshot_flame.pipeline import PrototypeClassifier, SiameseKNNClassifier
from fewshot_flame.protonet import build_deployment_prototypes
from fewshot_flame.siamese_knn import build_siamese, build_support_bank

ds = generate_synthetic_dataset(6, SplitSpec(20, 20, 5), seed=7)
train = ds.split("train")
cfg = TransformConfig()

# untrained weights are fine for timing; both classifiers share one encoder
model = build_siamese(EncoderConfig(), seed=0).eval()
knn = SiameseKNNClassifier(model, build_support_bank(train, cfg), k=5, cfg=cfg)
proto = PrototypeClassifier(model.encoder, build_deployment_prototypes(model.encoder, train, cfg), cfg)

frames = list(ds.split("validation").samples[:30])
for name, clf in (("prototypes", proto), ("siamese kNN", knn)):
    clf.classify_frame(frames[0])  # warm-up
    rep = benchmark_inference(clf.classify_frame, frames)
    print(f"{name:>12}: {rep.per_frame_ms:8.2f} ms/frame  {rep.fps:7.2f} fps")
print("support bank size", len(knn.bank))

path = export_embeddings(model.encoder, ds, "demo_out/embeddings.csv", cfg)
keys, emb = read_embeddings(path)
print(keys[:3], emb.shape)
print(np.round(emb[0, :6], 4))
