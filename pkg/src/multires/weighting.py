"""Learnable per-resolution weighting of the aligned feature stack.

Each channel is condensed to its global mean, a two-layer bottleneck
regressor (shared kernel with the backend SE blocks, see
:mod:`multires.excitation`) predicts one weight per resolution through a
sigmoid, and the stack is scaled channel-wise by those weights.  The mean of
the predicted weights over a data split is the per-resolution importance
summary consumed by pruning.
"""

from __future__ import annotations

import numpy as np

from .alignment import FeatureStack
from .cache import FeatureCache
from .excitation import (
    ExcitationParams,
    ExciteCache,
    bottleneck_weights,
    excite_backward,
    excite_forward,
    init_excitation,
)

# Same bottleneck parameterization as an SE block, applied at M = number of
# resolutions instead of conv channels.
WeightPredictorParams = ExcitationParams


def hidden_width(n_resolutions: int) -> int:
    """Bottleneck width for the weight predictor: max(2, M // 2)."""
    return max(2, n_resolutions // 2)


def init_weight_predictor(
    n_resolutions: int, rng: np.random.Generator, dtype: np.dtype = np.float64
) -> WeightPredictorParams:
    return init_excitation(n_resolutions, hidden_width(n_resolutions), rng, dtype)


def global_pool(stack: FeatureStack) -> np.ndarray:
    """Mean over each channel's W x H entries -> vector of length M."""
    return stack.data.mean(axis=(1, 2))


def predict_weights(pooled: np.ndarray, params: WeightPredictorParams) -> np.ndarray:
    """Sigmoid-bounded weights s in (0, 1)^M from pooled channel means."""
    pooled = np.asarray(pooled)
    if pooled.shape != (params.n_channels,):
        raise ValueError(f"expected pooled vector of length {params.n_channels}, got shape {pooled.shape}")
    scales, _, _ = bottleneck_weights(pooled[None, :], params)
    return scales[0]


def scale_stack(stack: FeatureStack, weights: np.ndarray) -> FeatureStack:
    weights = np.asarray(weights)
    if weights.shape != (stack.n_channels,):
        raise ValueError(f"expected {stack.n_channels} weights, got shape {weights.shape}")
    return FeatureStack(stack.data * weights[:, None, None], stack.resolutions)


def forward(stack: FeatureStack, params: WeightPredictorParams) -> tuple[FeatureStack, ExciteCache]:
    """Weighted stack plus the cache needed for :func:`backward`."""
    y, cache = excite_forward(stack.data[None, ...], params)
    return FeatureStack(y[0], stack.resolutions), cache


def backward(cache: ExciteCache, upstream: np.ndarray) -> tuple[np.ndarray, WeightPredictorParams]:
    """Exact gradients of the pool -> FCs -> sigmoid -> scale path.

    ``upstream`` is the loss gradient w.r.t. the weighted stack (M, W, H);
    returns the gradient w.r.t. the input stack and the parameter gradients.
    """
    dx, grads = excite_backward(cache, np.asarray(upstream)[None, ...])
    return dx[0], grads


def batch_weights(stacks: np.ndarray, params: WeightPredictorParams) -> np.ndarray:
    """Predicted weights for a batch of stacks (N, M, W, H) -> (N, M)."""
    pooled = stacks.mean(axis=(2, 3), dtype=params.fc1_weight.dtype)
    scales, _, _ = bottleneck_weights(pooled, params)
    return scales


def mean_weights_over_set(
    cache: FeatureCache, params: WeightPredictorParams, batch_size: int = 64
) -> np.ndarray:
    """Arithmetic mean of per-utterance predicted weights over a cached split.

    This is the per-resolution summary used for pruning and the
    ``inspect-weights`` report.
    """
    if cache.n_utterances == 0:
        raise ValueError("cannot average weights over an empty split")
    total = np.zeros(params.n_channels, dtype=np.float64)
    for start in range(0, cache.n_utterances, batch_size):
        chunk = cache.stacks[start : start + batch_size]
        total += batch_weights(chunk, params).astype(np.float64).sum(axis=0)
    return total / cache.n_utterances
