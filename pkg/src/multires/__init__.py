"""Multi-resolution spectral front-end for binary speech classification.

The pipeline: multi-window/multi-hop STFT feature extraction, adaptive-pooling
alignment into a channel stack, a learnable per-resolution weighting block, a
small SE-residual classifier trained from scratch with Adam, a weight-gap
pruning/refinement workflow, and EER / min t-DCF scoring.  Everything runs on
plain numpy; no GPU or deep-learning framework is required.
"""

__version__ = "0.1.0"
