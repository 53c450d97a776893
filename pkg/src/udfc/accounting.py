"""Size and compute accounting.

Sizes are exact byte counts from parameter counts and stored bit-widths.
Weights are charged at their layer's bit-width; biases and BN parameters
are never quantized and stay at 32 bits.  MB means 2**20 bytes.  FLOPs are
counted as multiply-accumulates.
"""

from __future__ import annotations

from .model import Network, conv_out_hw, infer_shapes

BYTES_PER_MB = float(1 << 20)


def layer_size_bits(net: Network) -> list[int]:
    """Stored bits per weight layer (blocks, then head)."""
    wbits = net.wbits or [32] * net.n_weight_layers
    out = []
    for i, blk in enumerate(net.blocks):
        bits = blk.weight.size * wbits[i]
        if blk.bias is not None:
            bits += blk.bias.size * 32
        if blk.bn is not None:
            bits += 4 * blk.bn.channels * 32
        out.append(bits)
    if net.head is not None:
        bits = net.head.weight.size * wbits[-1]
        if net.head.bias is not None:
            bits += net.head.bias.size * 32
        out.append(bits)
    return out


def layer_size_bytes(net: Network) -> list[int]:
    return [bits // 8 for bits in layer_size_bits(net)]


def model_size_bytes(net: Network) -> int:
    return sum(layer_size_bits(net)) // 8


def model_size_mb(net: Network) -> float:
    return model_size_bytes(net) / BYTES_PER_MB


def layer_flops(net: Network) -> list[int]:
    """Multiply-accumulates per weight layer for one input."""
    shapes = infer_shapes(net)
    _, h, w = net.input_shape
    out = []
    for blk, post in zip(net.blocks, shapes):
        ho, wo = conv_out_hw(h, w, blk.kernel, blk.stride, blk.pad)
        out.append(blk.out_channels * blk.in_channels * blk.kernel ** 2 * ho * wo)
        _, h, w = post
    if net.head is not None:
        out.append(net.head.out_features * net.head.in_features)
    return out


def model_flops(net: Network) -> int:
    return sum(layer_flops(net))


def compression_summary(original: Network, compressed: Network) -> dict:
    so, sc = model_size_bytes(original), model_size_bytes(compressed)
    fo, fc = model_flops(original), model_flops(compressed)
    return {
        "orig_size_bytes": so,
        "size_bytes": sc,
        "size_ratio": sc / so if so else float("nan"),
        "orig_flops": fo,
        "flops": fc,
        "flops_ratio": fc / fo if fo else float("nan"),
        "orig_size_mb": so / BYTES_PER_MB,
        "size_mb": sc / BYTES_PER_MB,
    }
