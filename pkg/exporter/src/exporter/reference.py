"""Plain numpy forward pass over an exported model directory.

Independent of both torch and the compression engine, so it can arbitrate
when the two disagree about what the exported files mean.
"""

import numpy as np

from .neutral import read_model


def _conv2d(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    n, _, h_in, w_in = x.shape
    o, _, k, _ = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    h_out = (h_in + 2 * pad - k) // stride + 1
    w_out = (w_in + 2 * pad - k) // stride + 1
    out = np.empty((n, o, h_out, w_out), dtype=np.float32)
    for r in range(h_out):
        for c in range(w_out):
            patch = x[:, :, r * stride:r * stride + k, c * stride:c * stride + k]
            out[:, :, r, c] = np.einsum("ncij,ocij->no", patch, w,
                                        dtype=np.float32)
    return out


def _maxpool2(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).max(axis=(3, 5))


def reference_logits(model_dir: str, x: np.ndarray) -> np.ndarray:
    """Run `x` (NCHW float32) through the exported model, return logits."""
    _, blocks, head = read_model(model_dir)
    x = np.asarray(x, dtype=np.float32)
    for blk in blocks:
        x = _conv2d(x, blk["weight"], blk["stride"], blk["pad"])
        if blk["bias"] is not None:
            x = x + blk["bias"][None, :, None, None]
        scale = blk["gamma"] / np.sqrt(blk["var"] + blk["eps"])
        x = (x - blk["mean"][None, :, None, None]) * scale[None, :, None, None]
        x = x + blk["beta"][None, :, None, None]
        if blk["activation"] == "relu":
            x = np.maximum(x, 0.0)
        if blk["pool"] == "max":
            x = _maxpool2(x)
        elif blk["pool"] == "gap":
            x = x.mean(axis=(2, 3))
    if head is not None:
        x = x @ head["weight"].T
        if head["bias"] is not None:
            x = x + head["bias"]
    return x.astype(np.float32)
