"""Symmetric uniform weight quantization.

Each channel (or whole tensor) maps to unsigned integer codes on a grid of
2**k levels spanning [-scale, scale] with scale = max|W|:

    code = round((2**k - 1) * (w / (2 * scale) + 1/2))
    dequant = (2 * code / (2**k - 1) - 1) * scale

Rounding is half away from zero.  The grid includes -scale and +scale as
exact points, and the dequantized value is always within half a step,
|w - dequant(w)| <= scale / (2**k - 1).  An all-zero channel dequantizes
to zeros.  Quantization is idempotent: requantizing a dequantized tensor
reproduces it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ValidationError

GRANULARITIES = ("per_channel", "per_tensor")


def quantize_array(w: np.ndarray, bits: int) -> tuple[np.ndarray, float]:
    """Codes (uint32) and scale for one quantization group.

    The mapped value is nonnegative, so floor(x + 0.5) rounds half away
    from zero.
    """
    if not 2 <= bits <= 8:
        raise ValidationError(f"bit-width {bits} outside [2, 8]")
    levels = (1 << bits) - 1
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale == 0.0:
        return np.zeros(w.shape, dtype=np.uint32), 0.0
    t = w.astype(np.float64) / (2.0 * scale) + 0.5
    codes = np.floor(levels * t + 0.5)
    np.clip(codes, 0, levels, out=codes)
    return codes.astype(np.uint32), scale


def dequantize_array(codes: np.ndarray, scale: float, bits: int) -> np.ndarray:
    levels = (1 << bits) - 1
    if scale == 0.0:
        return np.zeros(codes.shape, dtype=np.float32)
    w = (2.0 * codes.astype(np.float64) / levels - 1.0) * scale
    return w.astype(np.float32)


@dataclass
class QuantizedTensor:
    """Quantized weight tensor: integer codes plus per-group scales."""

    codes: np.ndarray       # uint32, same shape as the source tensor
    scales: np.ndarray      # one scale per channel, or a single scale
    bits: int
    granularity: str

    def dequantize(self) -> np.ndarray:
        if self.granularity == "per_tensor":
            return dequantize_array(self.codes, float(self.scales), self.bits)
        out = np.empty(self.codes.shape, dtype=np.float32)
        for c in range(self.codes.shape[0]):
            out[c] = dequantize_array(self.codes[c], float(self.scales[c]), self.bits)
        return out


def quantize_tensor(w: np.ndarray, bits: int,
                    granularity: str = "per_channel") -> QuantizedTensor:
    """Quantize an OIHW conv weight or (out, in) linear weight.

    Per-channel granularity groups along axis 0.
    """
    if granularity not in GRANULARITIES:
        raise ValidationError(
            f"unknown granularity {granularity!r}, expected one of {GRANULARITIES}")
    if granularity == "per_tensor":
        codes, scale = quantize_array(w, bits)
        return QuantizedTensor(codes, np.float64(scale), bits, granularity)
    codes = np.empty(w.shape, dtype=np.uint32)
    scales = np.empty(w.shape[0], dtype=np.float64)
    for c in range(w.shape[0]):
        codes[c], scales[c] = quantize_array(w[c], bits)
    return QuantizedTensor(codes, scales, bits, granularity)


def fake_quantize(w: np.ndarray, bits: int,
                  granularity: str = "per_channel") -> np.ndarray:
    """Quantize then dequantize, returning a float32 tensor on the grid."""
    return quantize_tensor(w, bits, granularity).dequantize()
