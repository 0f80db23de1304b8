"""Scaled-down SE-residual convolutional classifier with exact gradients.

The network is a stem conv, a configurable grid of residual blocks with
squeeze-excite recalibration, global average pooling, and a linear head.
Everything is plain numpy with hand-written reverse-mode passes; there is no
batch norm, and ReLU's derivative at exactly 0 is taken as 0.

Conventions fixed for testability: cross-correlation (no kernel flip),
"same" zero padding, output dims ceil(W / stride) for stride in {1, 2}.
Stage s >= 2 opens with a stride-2 block that doubles the channel count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .excitation import (
    ExcitationParams,
    ExciteCache,
    excite_backward,
    excite_forward,
    init_excitation,
)


@dataclass(frozen=True)
class BackendConfig:
    stem_channels: int = 16
    stages: int = 3
    blocks_per_stage: int = 2
    se_reduction: int = 4
    n_classes: int = 2

    def __post_init__(self) -> None:
        for name in ("stem_channels", "stages", "blocks_per_stage", "se_reduction", "n_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.se_reduction > self.stem_channels:
            raise ValueError("se_reduction must not exceed stem_channels (the narrowest stage)")

    def stage_channels(self, stage: int) -> int:
        """Channel count of 1-based stage: stem doubled at each later stage."""
        return self.stem_channels * (2 ** (stage - 1))

    @property
    def final_channels(self) -> int:
        return self.stage_channels(self.stages)


@dataclass
class ConvParams:
    """Cross-correlation kernel (C_out, C_in, k, k) plus per-channel bias."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ValueError(f"conv weight must be (C_out, C_in, k, k), got {self.weight.shape}")
        if self.weight.shape[2] % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError("conv bias shape does not match output channels")


@dataclass
class BlockParams:
    conv1: ConvParams
    conv2: ConvParams
    proj: Optional[ConvParams]  # 1x1 skip conv when stride 2 or channels change
    se: ExcitationParams
    stride: int = 1

    def __post_init__(self) -> None:
        if self.stride not in (1, 2):
            raise ValueError("block stride must be 1 or 2")


@dataclass
class BackendParams:
    stem: ConvParams
    blocks: list[BlockParams]
    fc_weight: np.ndarray  # (n_classes, final_channels)
    fc_bias: np.ndarray


def _uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _init_conv(c_out: int, c_in: int, k: int, rng: np.random.Generator, dtype) -> ConvParams:
    w = _uniform((c_out, c_in, k, k), c_in * k * k, rng, dtype)
    return ConvParams(w, np.zeros(c_out, dtype=dtype))


def init_backend(
    in_channels: int,
    config: BackendConfig,
    rng: np.random.Generator,
    dtype: np.dtype = np.float64,
) -> BackendParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, in traversal order."""
    if in_channels < 1:
        raise ValueError("in_channels must be >= 1")
    stem = _init_conv(config.stem_channels, in_channels, 3, rng, dtype)
    blocks = []
    prev = config.stem_channels
    for stage in range(1, config.stages + 1):
        ch = config.stage_channels(stage)
        for b in range(config.blocks_per_stage):
            stride = 2 if (stage >= 2 and b == 0) else 1
            conv1 = _init_conv(ch, prev, 3, rng, dtype)
            conv2 = _init_conv(ch, ch, 3, rng, dtype)
            proj = _init_conv(ch, prev, 1, rng, dtype) if (stride != 1 or prev != ch) else None
            se = init_excitation(ch, max(1, ch // config.se_reduction), rng, dtype)
            blocks.append(BlockParams(conv1, conv2, proj, se, stride))
            prev = ch
    fc_w = _uniform((config.n_classes, prev), prev, rng, dtype)
    fc_b = np.zeros(config.n_classes, dtype=dtype)
    return BackendParams(stem, blocks, fc_w, fc_b)


# ---------------------------------------------------------------------------
# conv2d


def _out_dims(x: np.ndarray, stride: int) -> tuple[int, int]:
    return -(-x.shape[2] // stride), -(-x.shape[3] // stride)


def _im2col(xp: np.ndarray, k: int, stride: int, wo: int, ho: int) -> np.ndarray:
    """Gather kernel taps into (N, C*k*k, W'*H') for one GEMM per example.

    The (N, C, k, k, W', H') layout keeps both sides of every copy in long
    contiguous runs, which is what makes this faster than contracting a
    sliding-window view directly.
    """
    n, c = xp.shape[:2]
    cols = np.empty((n, c, k, k, wo, ho), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i : i + stride * wo : stride, j : j + stride * ho : stride]
    return cols.reshape(n, c * k * k, wo * ho)


def conv2d_forward(x: np.ndarray, p: ConvParams, stride: int = 1) -> np.ndarray:
    """Same-padded cross-correlation on (N, C_in, W, H) -> (N, C_out, W', H')."""
    if x.ndim != 4:
        raise ValueError(f"conv input must be (N, C, W, H), got {x.shape}")
    if x.shape[1] != p.weight.shape[1]:
        raise ValueError(f"conv expects {p.weight.shape[1]} input channels, got {x.shape[1]}")
    c_out, _, k, _ = p.weight.shape
    pad = (k - 1) // 2
    wo, ho = _out_dims(x, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, wo, ho)
    y = np.matmul(p.weight.reshape(c_out, -1)[None], cols)
    return y.reshape(x.shape[0], c_out, wo, ho) + p.bias[None, :, None, None]


def conv2d_backward(
    x: np.ndarray, p: ConvParams, dy: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, ConvParams]:
    """Gradients w.r.t. input and parameters; recomputes the tap gather."""
    c_out, c_in, k, _ = p.weight.shape
    pad = (k - 1) // 2
    n, _, wo, ho = dy.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, wo, ho)
    dyf = dy.reshape(n, c_out, wo * ho)
    d_bias = dy.sum(axis=(0, 2, 3)).astype(p.bias.dtype, copy=False)
    d_weight = np.matmul(dyf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(p.weight.shape)
    d_cols = np.matmul(p.weight.reshape(c_out, -1).T[None], dyf)
    d_cols = d_cols.reshape(n, c_in, k, k, wo, ho)
    # Scatter each tap's contribution back onto the padded input grid.
    dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * wo : stride, j : j + stride * ho : stride] += d_cols[:, :, i, j]
    dx = dxp[:, :, pad : pad + x.shape[2], pad : pad + x.shape[3]]
    return np.ascontiguousarray(dx), ConvParams(d_weight, d_bias)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


# ---------------------------------------------------------------------------
# residual SE block


@dataclass
class BlockCache:
    x: np.ndarray
    pre1: np.ndarray  # conv1 output, pre-ReLU
    act1: np.ndarray
    se_cache: ExciteCache
    pre_out: np.ndarray  # se(conv2) + skip, pre-ReLU
    params: BlockParams


def block_forward(x: np.ndarray, p: BlockParams) -> tuple[np.ndarray, BlockCache]:
    """out = relu(se(conv2(relu(conv1(x)))) + skip(x))."""
    pre1 = conv2d_forward(x, p.conv1, p.stride)
    act1 = relu(pre1)
    pre2 = conv2d_forward(act1, p.conv2, 1)
    se_out, se_cache = excite_forward(pre2, p.se)
    skip = x if p.proj is None else conv2d_forward(x, p.proj, p.stride)
    pre_out = se_out + skip
    return relu(pre_out), BlockCache(x, pre1, act1, se_cache, pre_out, p)


def block_backward(cache: BlockCache, dout: np.ndarray) -> tuple[np.ndarray, BlockParams]:
    p = cache.params
    d_pre = dout * (cache.pre_out > 0)
    d_pre2, d_se = excite_backward(cache.se_cache, d_pre)
    d_act1, d_conv2 = conv2d_backward(cache.act1, p.conv2, d_pre2, 1)
    d_pre1 = d_act1 * (cache.pre1 > 0)
    dx, d_conv1 = conv2d_backward(cache.x, p.conv1, d_pre1, p.stride)
    if p.proj is None:
        dx = dx + d_pre
        d_proj = None
    else:
        dx_skip, d_proj = conv2d_backward(cache.x, p.proj, d_pre, p.stride)
        dx = dx + dx_skip
    return dx, BlockParams(d_conv1, d_conv2, d_proj, d_se, p.stride)


# ---------------------------------------------------------------------------
# full network


@dataclass
class BackendCache:
    x: np.ndarray
    stem_pre: np.ndarray
    blocks: list[BlockCache] = field(default_factory=list)
    features: np.ndarray = None  # final block output (N, C, W, H)
    pooled: np.ndarray = None
    params: BackendParams = None


def backend_forward(x: np.ndarray, params: BackendParams) -> tuple[np.ndarray, BackendCache]:
    """Stack batch (N, M, W, H) -> logits (N, n_classes) plus backward cache."""
    stem_pre = conv2d_forward(x, params.stem, 1)
    h = relu(stem_pre)
    cache = BackendCache(x, stem_pre, [], None, None, params)
    for bp in params.blocks:
        h, bc = block_forward(h, bp)
        cache.blocks.append(bc)
    pooled = h.mean(axis=(2, 3))
    logits = pooled @ params.fc_weight.T + params.fc_bias
    cache.features = h
    cache.pooled = pooled
    return logits, cache


def backend_backward(cache: BackendCache, d_logits: np.ndarray) -> tuple[np.ndarray, BackendParams]:
    """d_logits (N, n_classes) -> input-stack gradient plus parameter gradients."""
    params = cache.params
    d_fc_w = d_logits.T @ cache.pooled
    d_fc_b = d_logits.sum(axis=0)
    d_pooled = d_logits @ params.fc_weight
    spatial = cache.features.shape[2] * cache.features.shape[3]
    dh = np.broadcast_to(d_pooled[:, :, None, None] / spatial, cache.features.shape).copy()
    d_blocks: list[BlockParams] = []
    for bc in reversed(cache.blocks):
        dh, bg = block_backward(bc, dh)
        d_blocks.append(bg)
    d_blocks.reverse()
    d_stem_in = dh * (cache.stem_pre > 0)
    dx, d_stem = conv2d_backward(cache.x, params.stem, d_stem_in, 1)
    return dx, BackendParams(d_stem, d_blocks, d_fc_w, d_fc_b)
