"""Few-shot flame-state classification: Siamese kNN and prototypical networks."""
