"""Measurement and baselines.

Feature-map reconstruction error is measured at a block's raw conv output
(the quantity the compensation losses model), on standard-normal inputs as
the data-free stand-in.  Two reference compressors bracket the engine:
plain slice deletion, and one-to-one merge where each pruned channel is
folded into its single most-similar kept channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .inference import forward
from .model import Network, ValidationError
from .reconstruct import (DEAD_CHANNEL_EPS, build_pruning_system,
                          fold_pruned_batch)


@dataclass
class EvalResult:
    top1: float | None = None
    feature_mse: dict = field(default_factory=dict)
    trials: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        d = {"trials": self.trials, "seed": self.seed}
        if self.top1 is not None:
            d["top1"] = self.top1
        if self.feature_mse:
            d["feature_mse"] = {str(k): v for k, v in self.feature_mse.items()}
        return d


def random_inputs(input_shape, count: int, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal evaluation batch (data-free stand-in for images)."""
    return rng.standard_normal((count,) + tuple(input_shape)).astype(np.float32)


def feature_maps(net: Network, tap: int, inputs: np.ndarray,
                 kind: str = "z") -> np.ndarray:
    return forward(net, inputs, capture={(tap, kind)}).taps[(tap, kind)]


def feature_mse(a: Network, b: Network, tap: int, inputs: np.ndarray,
                kind: str = "z") -> float:
    """Mean squared difference of the two networks' maps at one tap."""
    za = feature_maps(a, tap, inputs, kind).astype(np.float64)
    zb = feature_maps(b, tap, inputs, kind).astype(np.float64)
    if za.shape != zb.shape:
        raise ValidationError(
            f"tap {tap} shapes differ: {za.shape} vs {zb.shape}")
    return float(np.mean((za - zb) ** 2))


def feature_mse_per_sample(a: Network, b: Network, tap: int,
                           inputs: np.ndarray, kind: str = "z") -> np.ndarray:
    """Per-input mean squared difference, for trial-level win counting."""
    za = feature_maps(a, tap, inputs, kind).astype(np.float64)
    zb = feature_maps(b, tap, inputs, kind).astype(np.float64)
    if za.shape != zb.shape:
        raise ValidationError(
            f"tap {tap} shapes differ: {za.shape} vs {zb.shape}")
    return ((za - zb) ** 2).mean(axis=tuple(range(1, za.ndim)))


def matching_taps_mse(a: Network, b: Network, inputs: np.ndarray) -> dict:
    """Per-block conv-output MSE at every tap where shapes agree.

    Networks of different widths (original vs compressed) still share the
    unpruned taps; mismatched taps are skipped.  Logits are compared under
    the key "logits" when both networks have heads.
    """
    n = min(len(a.blocks), len(b.blocks))
    want = {(i, "z") for i in range(n)}
    ra = forward(a, inputs, capture=want)
    rb = forward(b, inputs, capture=want)
    out = {}
    for i in range(n):
        za, zb = ra.taps[(i, "z")], rb.taps[(i, "z")]
        if za.shape == zb.shape:
            out[i] = float(np.mean((za.astype(np.float64) - zb) ** 2))
    if a.head is not None and b.head is not None \
            and ra.output.shape == rb.output.shape:
        out["logits"] = float(np.mean((ra.output.astype(np.float64) - rb.output) ** 2))
    return out


def _delete_channels(work: Network, layer_index: int,
                     pruned: np.ndarray) -> tuple:
    """Kept-index array and the consumer layer for a deletion at one block."""
    blk = work.blocks[layer_index]
    n = blk.out_channels
    if np.any(pruned < 0) or np.any(pruned >= n):
        raise ValidationError(f"layer {layer_index}: pruned index out of range")
    if layer_index + 1 < len(work.blocks):
        consumer = work.blocks[layer_index + 1]
    elif work.head is not None:
        consumer = work.head
    else:
        raise ValidationError(
            f"layer {layer_index} has no consumer, cannot delete its channels")
    kept = np.setdiff1d(np.arange(n), pruned)
    if kept.size == 0:
        raise ValidationError(f"layer {layer_index}: cannot delete all channels")
    return kept, consumer


def _shrink_block(blk, kept: np.ndarray) -> None:
    blk.weight = blk.weight[kept].copy()
    if blk.bias is not None:
        blk.bias = blk.bias[kept].copy()
    if blk.bn is not None:
        blk.bn = blk.bn.select(kept)


def baseline_prune_only(net: Network, decisions: dict) -> Network:
    """Delete the given channels and consumer slices, no compensation.

    decisions maps block index to an iterable of pruned channel indices
    (as produced by Report.pruned_sets).
    """
    work = net.copy()
    for li in sorted(decisions):
        pruned = np.asarray(sorted(decisions[li]), dtype=np.intp)
        if pruned.size == 0:
            continue
        kept, consumer = _delete_channels(work, li, pruned)
        _shrink_block(work.blocks[li], kept)
        consumer.weight = np.delete(consumer.weight, pruned, axis=1)
    work.validate()
    return work


def baseline_one_to_one(net: Network, decisions: dict) -> Network:
    """Fold each pruned channel into its single most-similar kept channel.

    Similarity is cosine between the pruned channel's filter and each kept
    channel's filter rescaled into the pruned channel's BN frame; the fold
    coefficient comes from 1-d least squares on that pair.
    """
    work = net.copy()
    for li in sorted(decisions):
        pruned = np.asarray(sorted(decisions[li]), dtype=np.intp)
        if pruned.size == 0:
            continue
        blk = work.blocks[li]
        if blk.bn is None:
            raise ValidationError(f"layer {li}: one-to-one merge requires BN")
        kept, consumer = _delete_channels(work, li, pruned)
        scales = np.zeros((kept.size, pruned.size))
        gamma = blk.bn.gamma.astype(np.float64)
        for pos, j in enumerate(pruned):
            if abs(gamma[j]) < DEAD_CHANNEL_EPS:
                continue
            system = build_pruning_system(blk, int(j), kept)
            col_sq = (system.basis * system.basis).sum(axis=0)
            target_norm = float(np.linalg.norm(system.target))
            if target_norm == 0.0 or not np.any(col_sq > 0.0):
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                cos = (system.basis.T @ system.target) / (
                    np.sqrt(col_sq) * target_norm)
            cos = np.where(col_sq > 0.0, cos, -np.inf)
            best = int(np.argmax(cos))
            scales[best, pos] = float(
                (system.basis[:, best] @ system.target) / col_sq[best])
        consumer.weight = fold_pruned_batch(consumer.weight, pruned, kept, scales)
        _shrink_block(blk, kept)
    work.validate()
    return work


def evaluate_accuracy(net: Network, data: np.ndarray, labels: np.ndarray,
                      batch_size: int = 512) -> EvalResult:
    """Top-1 fraction over all samples, deterministic."""
    if net.head is None:
        raise ValidationError("accuracy evaluation requires a classifier head")
    if data.shape[0] != labels.shape[0]:
        raise ValidationError(
            f"{data.shape[0]} samples but {labels.shape[0]} labels")
    correct = 0
    for i in range(0, data.shape[0], batch_size):
        logits = forward(net, data[i:i + batch_size]).output
        correct += int((logits.argmax(axis=1) == labels[i:i + batch_size]).sum())
    return EvalResult(top1=correct / data.shape[0], trials=int(data.shape[0]))
