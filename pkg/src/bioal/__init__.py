"""Pool-based active learning for multi-label sound event detection.

The library operates on pools of precomputed temporal embeddings (one
``[T, D]`` matrix per audio sample plus ``[T, C]`` binary labels) and
simulates an annotation process under a fixed labeling budget.  Four
selection policies are provided: uniform random sampling, committee
mismatch priority, greedy farthest traversal, and mismatch-first
farthest-traversal.  A harness trains a small MLP classifier after every
annotation round and tracks segment-level mAP, F1, and the number of
rare-class samples discovered.
"""

__version__ = "0.1.0"
