"""In-memory CNN representation and validation.

The supported topology is a sequential chain of conv->BN->activation blocks
with optional 2x2 max pools between blocks, an optional global average pool,
and an optional linear head directly after the global pool.  Activations are
NCHW, convolution weights OIHW, everything float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DTYPE = np.float32


class UdfcError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(UdfcError):
    """A network, tensor, or configuration violates an invariant."""


class NonFiniteError(ValidationError):
    """A weight or intermediate value is NaN or infinite."""


class ManifestError(UdfcError):
    """Manifest and weight blob are inconsistent or malformed."""


class UnsupportedLayerError(ManifestError):
    """Manifest declares a layer kind this engine does not implement."""


class DeadChannelError(UdfcError):
    """BN scale of a pruned channel is ~0; its output carries no weight signal."""


class SingularSystemError(UdfcError):
    """Normal equations are singular; retry with ridge > 0."""


ACTIVATIONS = ("relu", "identity")
POOLS = (None, "max", "gap")


def as_f32(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=DTYPE)


def check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values in {what}")


@dataclass
class BatchNormParams:
    """Per-channel inference-time BN statistics.

    Stores running variance plus eps; the effective standard deviation is
    sigma = sqrt(var + eps), guaranteed positive.
    """

    gamma: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        self.gamma = as_f32(self.gamma)
        self.beta = as_f32(self.beta)
        self.mu = as_f32(self.mu)
        self.var = as_f32(self.var)
        self.eps = float(self.eps)

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.var + DTYPE(self.eps))

    def validate(self, channels: int, where: str) -> None:
        for name, arr in (("gamma", self.gamma), ("beta", self.beta),
                          ("mu", self.mu), ("var", self.var)):
            if arr.shape != (channels,):
                raise ValidationError(
                    f"{where}: bn {name} has shape {arr.shape}, expected ({channels},)")
            check_finite(arr, f"{where} bn {name}")
        if self.eps <= 0:
            raise ValidationError(f"{where}: bn eps must be > 0, got {self.eps}")
        if np.any(self.var < 0):
            raise ValidationError(f"{where}: bn var must be >= 0")

    def select(self, idx: np.ndarray) -> "BatchNormParams":
        return BatchNormParams(self.gamma[idx], self.beta[idx],
                               self.mu[idx], self.var[idx], self.eps)

    def copy(self) -> "BatchNormParams":
        return BatchNormParams(self.gamma.copy(), self.beta.copy(),
                               self.mu.copy(), self.var.copy(), self.eps)


@dataclass
class LayerBlock:
    """conv -> optional BN -> activation, with an optional trailing pool."""

    weight: np.ndarray            # OIHW
    bias: np.ndarray | None = None
    stride: int = 1
    pad: int = 0
    bn: BatchNormParams | None = None
    activation: str = "relu"
    pool: str | None = None       # None | "max" | "gap"

    def __post_init__(self):
        self.weight = as_f32(self.weight)
        if self.bias is not None:
            self.bias = as_f32(self.bias)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    def validate(self, where: str) -> None:
        if self.weight.ndim != 4:
            raise ValidationError(f"{where}: conv weight must be 4-d OIHW")
        o, i, kh, kw = self.weight.shape
        if kh != kw:
            raise ValidationError(f"{where}: only square kernels supported, got {kh}x{kw}")
        if min(o, i, kh) < 1:
            raise ValidationError(f"{where}: degenerate conv shape {self.weight.shape}")
        if self.stride < 1:
            raise ValidationError(f"{where}: stride must be >= 1")
        if self.pad < 0:
            raise ValidationError(f"{where}: pad must be >= 0")
        check_finite(self.weight, f"{where} conv weight")
        if self.bias is not None:
            if self.bias.shape != (o,):
                raise ValidationError(f"{where}: bias shape {self.bias.shape} != ({o},)")
            check_finite(self.bias, f"{where} conv bias")
        if self.bn is not None:
            self.bn.validate(o, where)
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"{where}: unknown activation {self.activation!r}")
        if self.pool not in POOLS:
            raise ValidationError(f"{where}: unknown pool {self.pool!r}")

    def copy(self) -> "LayerBlock":
        return LayerBlock(self.weight.copy(),
                          None if self.bias is None else self.bias.copy(),
                          self.stride, self.pad,
                          None if self.bn is None else self.bn.copy(),
                          self.activation, self.pool)


@dataclass
class LinearHead:
    weight: np.ndarray            # (out_features, in_features)
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weight = as_f32(self.weight)
        if self.bias is not None:
            self.bias = as_f32(self.bias)

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    def validate(self, where: str) -> None:
        if self.weight.ndim != 2:
            raise ValidationError(f"{where}: linear weight must be 2-d")
        check_finite(self.weight, f"{where} linear weight")
        if self.bias is not None:
            if self.bias.shape != (self.out_features,):
                raise ValidationError(f"{where}: linear bias shape mismatch")
            check_finite(self.bias, f"{where} linear bias")

    def copy(self) -> "LinearHead":
        return LinearHead(self.weight.copy(),
                          None if self.bias is None else self.bias.copy())


@dataclass
class Network:
    """Ordered conv blocks plus an optional linear head.

    Immutable by convention once loaded; the compression pipeline works on
    copies.  input_shape is (C, H, W) without the batch dimension.
    """

    blocks: list[LayerBlock]
    head: LinearHead | None = None
    input_shape: tuple[int, int, int] = (3, 32, 32)
    # Stored bit-width per weight layer (blocks, then head), 32 = full precision.
    # Metadata only: weights are always held dequantized in float32.
    wbits: list[int] | None = None

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)

    @property
    def n_weight_layers(self) -> int:
        return len(self.blocks) + (1 if self.head is not None else 0)

    def copy(self) -> "Network":
        return Network([b.copy() for b in self.blocks],
                       None if self.head is None else self.head.copy(),
                       self.input_shape,
                       None if self.wbits is None else list(self.wbits))

    def validate(self) -> None:
        if not self.blocks:
            raise ValidationError("network has no blocks")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ValidationError(f"bad input_shape {self.input_shape}")
        shapes = infer_shapes(self)
        del shapes  # raises on any chain mismatch
        for li, blk in enumerate(self.blocks):
            blk.validate(f"block {li}")
        if self.head is not None:
            self.head.validate("head")
            if self.blocks[-1].pool != "gap":
                raise ValidationError("linear head requires a gap pool on the last block")
            if self.head.in_features != self.blocks[-1].out_channels:
                raise ValidationError(
                    f"head in_features {self.head.in_features} != "
                    f"last block channels {self.blocks[-1].out_channels}")
        if self.wbits is not None:
            if len(self.wbits) != self.n_weight_layers:
                raise ValidationError(
                    f"wbits has {len(self.wbits)} entries for "
                    f"{self.n_weight_layers} weight layers")
            for w in self.wbits:
                if not 2 <= w <= 32:
                    raise ValidationError(f"wbits entry {w} outside [2, 32]")


def conv_out_hw(h: int, w: int, kernel: int, stride: int, pad: int) -> tuple[int, int]:
    oh = (h + 2 * pad - kernel) // stride + 1
    ow = (w + 2 * pad - kernel) // stride + 1
    return oh, ow


def infer_shapes(net: Network) -> list[tuple[int, int, int]]:
    """Per-block output shapes (C, H, W) after the block's pool, if any."""
    c, h, w = net.input_shape
    out = []
    for li, blk in enumerate(net.blocks):
        if blk.in_channels != c:
            raise ValidationError(
                f"block {li}: expects {blk.in_channels} input channels, gets {c}")
        h, w = conv_out_hw(h, w, blk.kernel, blk.stride, blk.pad)
        if h < 1 or w < 1:
            raise ValidationError(f"block {li}: feature map collapsed to {h}x{w}")
        c = blk.out_channels
        if blk.pool == "max":
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ValidationError(f"block {li}: max pool collapsed the map")
        elif blk.pool == "gap":
            h, w = 1, 1
        out.append((c, h, w))
    return out


def param_count(net: Network) -> int:
    n = 0
    for blk in net.blocks:
        n += blk.weight.size
        if blk.bias is not None:
            n += blk.bias.size
        if blk.bn is not None:
            n += 4 * blk.bn.channels
    if net.head is not None:
        n += net.head.weight.size
        if net.head.bias is not None:
            n += net.head.bias.size
    return n
