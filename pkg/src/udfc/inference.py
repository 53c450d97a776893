"""Reference forward pass with feature-map capture.

Direct zero-padded convolution (window extraction + tensordot), channel-wise
BN using running statistics, ReLU, 2x2/stride-2 max pool, global average
pool, linear head.  All arithmetic in float32; forward is pure and safe to
call concurrently on the same network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import DTYPE, LayerBlock, Network, ValidationError, NonFiniteError


@dataclass
class ForwardResult:
    output: np.ndarray
    # taps keyed by (block_index, kind) with kind "z" (pre-BN map) or
    # "x" (post-activation, pre-pool map)
    taps: dict[tuple[int, str], np.ndarray] = field(default_factory=dict)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
           stride: int = 1, pad: int = 0) -> np.ndarray:
    """NCHW direct convolution with symmetric zero padding."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    k = weight.shape[2]
    win = sliding_window_view(x, (k, k), axis=(2, 3))   # (N, C, Ho', Wo', k, k)
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    out = np.tensordot(win, weight, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, O)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def batch_norm(z: np.ndarray, bn) -> np.ndarray:
    sigma = bn.sigma
    scale = (bn.gamma / sigma).astype(DTYPE)
    shift = (bn.beta - bn.gamma * bn.mu / sigma).astype(DTYPE)
    return z * scale[None, :, None, None] + shift[None, :, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, DTYPE(0))


def max_pool_2x2(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    x = x[:, :, :h2 * 2, :w2 * 2]
    return x.reshape(n, c, h2, 2, w2, 2).max(axis=(3, 5))


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3))


def _run_block(blk: LayerBlock, x: np.ndarray):
    z = conv2d(x, blk.weight, blk.bias, blk.stride, blk.pad)
    a = batch_norm(z, blk.bn) if blk.bn is not None else z
    if blk.activation == "relu":
        a = relu(a)
    return z, a


def forward(net: Network, x: np.ndarray,
            capture: set | None = None) -> ForwardResult:
    """Run the network on a batch, optionally capturing intermediate maps.

    capture holds (block_index, kind) pairs; kind "z" is the raw conv output
    before BN, kind "x" the post-activation map before any pool.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 4 or x.shape[0] < 1:
        raise ValidationError(f"input must be NCHW with batch >= 1, got {x.shape}")
    if tuple(x.shape[1:]) != tuple(net.input_shape):
        raise ValidationError(
            f"input shape {tuple(x.shape[1:])} != network input_shape {net.input_shape}")
    capture = capture or set()
    taps: dict[tuple[int, str], np.ndarray] = {}
    for li, blk in enumerate(net.blocks):
        z, x = _run_block(blk, x)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"non-finite activation at block {li}")
        if (li, "z") in capture:
            taps[(li, "z")] = z
        if (li, "x") in capture:
            taps[(li, "x")] = x
        if blk.pool == "max":
            x = max_pool_2x2(x)
        elif blk.pool == "gap":
            x = global_avg_pool(x)
    if net.head is not None:
        x = x @ net.head.weight.T
        if net.head.bias is not None:
            x = x + net.head.bias
    return ForwardResult(output=x, taps=taps)
