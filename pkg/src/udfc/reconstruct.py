"""Closed-form loss reconstruction for pruning and quantization.

Removing an output channel j of a BN conv layer deletes one input slice of
the next layer.  That loss is repaired by representing the folded filter of
channel j as a linear combination of the kept channels' folded filters and
adding the combination, weighted by solved scales, onto the next layer's
kept input slices.  Quantizing a channel is repaired the same way with a
single rescale of the next layer's matching input slice.

All systems are assembled and solved in float64; network weights stay
float32.  Filter vectorization is IHW row-major, so results are exactly
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (BatchNormParams, DeadChannelError, LayerBlock,
                    SingularSystemError, ValidationError)

DEAD_CHANNEL_EPS = 1e-12
RIDGE_SCALE = 1e-8


def flatten_filters(weight: np.ndarray) -> np.ndarray:
    """Filters of an OIHW tensor as float64 rows, IHW row-major."""
    return weight.reshape(weight.shape[0], -1).astype(np.float64)


def fold_bn(weight: np.ndarray, bn: BatchNormParams,
            bias: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fold BN into per-channel filter rows and affine shifts.

    Returns (folded, shifts): folded[i] is filter i scaled by gamma_i /
    sigma_i, and shifts[i] = beta_i - gamma_i * mu_i / sigma_i is the
    input-independent part of the channel's BN output.  A conv bias enters
    the shift (it lands ahead of the BN, so it offsets mu).
    """
    flat = flatten_filters(weight)
    gamma = bn.gamma.astype(np.float64)
    sigma = bn.sigma.astype(np.float64)
    folded = flat * (gamma / sigma)[:, None]
    mu = bn.mu.astype(np.float64)
    if bias is not None:
        mu = mu - bias.astype(np.float64)
    shifts = bn.beta.astype(np.float64) - gamma * mu / sigma
    return folded, shifts


@dataclass
class PruningSystem:
    """Least-squares system for one pruned channel of one layer.

    basis columns are the kept channels' folded filters rescaled into the
    pruned channel's BN frame; target is the pruned channel's raw filter.
    Minimizing ||target - basis @ s||^2 + alpha1 * (target_shift -
    kept_shifts @ s)^2 over s gives the compensation scales.
    """

    basis: np.ndarray        # (D, n_kept) float64
    target: np.ndarray       # (D,) float64
    kept_shifts: np.ndarray  # (n_kept,) float64
    target_shift: float
    kept: np.ndarray         # kept channel indices, ascending
    pruned_index: int


@dataclass
class ScaleSolution:
    """Solved compensation scales and their reconstruction losses."""

    prune_scales: np.ndarray | None = None
    quant_scale: float | None = None
    prune_loss: float = 0.0
    quant_loss: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    degenerate: bool = False

    @property
    def total_loss(self) -> float:
        return self.prune_loss + self.quant_loss


def build_pruning_system(layer: LayerBlock, pruned_index: int,
                         kept: np.ndarray) -> PruningSystem:
    """Assemble the compensation system for one pruned channel."""
    if layer.bn is None:
        raise ValidationError("pruning compensation requires BN statistics")
    kept = np.asarray(kept, dtype=np.intp)
    if kept.size == 0:
        raise ValidationError("kept set is empty")
    gamma_j = float(layer.bn.gamma[pruned_index])
    if abs(gamma_j) < DEAD_CHANNEL_EPS:
        raise DeadChannelError(
            f"channel {pruned_index} has |gamma| < {DEAD_CHANNEL_EPS}; "
            "its output is constant, prune without compensation")
    folded, shifts = fold_bn(layer.weight, layer.bn, layer.bias)
    sigma_j = float(layer.bn.sigma[pruned_index])
    frame = sigma_j / gamma_j
    return PruningSystem(
        basis=(frame * folded[kept]).T.copy(),
        target=flatten_filters(layer.weight)[pruned_index],
        kept_shifts=shifts[kept],
        target_shift=float(shifts[pruned_index]),
        kept=kept,
        pruned_index=pruned_index,
    )


def default_ridge(gram: np.ndarray) -> float:
    """Tikhonov term guarding rank deficiency, scaled to the system."""
    n = gram.shape[0]
    return RIDGE_SCALE * float(np.trace(gram)) / n if n else 0.0


def solve_scaled_system(gram: np.ndarray, corr: np.ndarray,
                        kept_shifts: np.ndarray, target_shift: float,
                        alpha1: float, ridge: float | None) -> tuple[np.ndarray, float]:
    """Solve (gram + a1*shift*shift' + ridge*I) s = corr + a1*shift*k.

    Shared by the per-channel path and the per-layer Gram fast path.
    Returns (scales, ridge actually used).
    """
    if ridge is None:
        ridge = default_ridge(gram)
    lhs = gram + alpha1 * np.outer(kept_shifts, kept_shifts)
    if ridge:
        lhs = lhs + ridge * np.eye(lhs.shape[0])
    rhs = corr + alpha1 * target_shift * kept_shifts
    try:
        scales = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(
            f"compensation system is singular ({e}); pass ridge > 0") from e
    if not np.all(np.isfinite(scales)):
        raise SingularSystemError(
            "compensation solve produced non-finite scales; pass ridge > 0")
    return scales, ridge


def solve_pruning_scales(system: PruningSystem, alpha1: float,
                         ridge: float | None = None) -> np.ndarray:
    """Closed-form minimizer of the pruning reconstruction loss."""
    if alpha1 < 0:
        raise ValidationError(f"alpha1 must be nonnegative, got {alpha1}")
    gram = system.basis.T @ system.basis
    corr = system.basis.T @ system.target
    scales, _ = solve_scaled_system(gram, corr, system.kept_shifts,
                                    system.target_shift, alpha1, ridge)
    return scales


def pruning_loss(system: PruningSystem, scales: np.ndarray, alpha1: float) -> float:
    resid = system.target - system.basis @ scales
    shift_resid = system.target_shift - system.kept_shifts @ scales
    return float(resid @ resid + alpha1 * shift_resid * shift_resid)


def loss_gradient(system: PruningSystem, scales: np.ndarray, alpha1: float) -> np.ndarray:
    """Gradient of the pruning loss at the given scales."""
    bt = system.basis.T
    grad = 2.0 * (bt @ (system.basis @ scales) - bt @ system.target)
    grad += 2.0 * alpha1 * system.kept_shifts * (
        system.kept_shifts @ scales - system.target_shift)
    return grad


def solve_quant_scale(folded: np.ndarray, folded_quant: np.ndarray,
                      shift: float, alpha2: float) -> tuple[float, bool]:
    """Optimal rescale pulling a quantized channel back toward the original.

    Minimizes ||folded - s*folded_quant||^2 + alpha2*(shift - s*shift)^2,
    a scalar quadratic.  Returns (scale, degenerate); degenerate means the
    quantized channel and shift are both zero, where any scale is optimal
    and 1 is used.
    """
    if alpha2 < 0:
        raise ValidationError(f"alpha2 must be nonnegative, got {alpha2}")
    f = np.asarray(folded, dtype=np.float64).ravel()
    fq = np.asarray(folded_quant, dtype=np.float64).ravel()
    shift_sq = alpha2 * shift * shift
    denom = fq @ fq + shift_sq
    if denom == 0.0:
        return 1.0, True
    return float((fq @ f + shift_sq) / denom), False


def quant_loss(folded: np.ndarray, folded_quant: np.ndarray, shift: float,
               scale: float, alpha2: float) -> float:
    f = np.asarray(folded, dtype=np.float64).ravel()
    fq = np.asarray(folded_quant, dtype=np.float64).ravel()
    resid = f - scale * fq
    shift_resid = shift - scale * shift
    return float(resid @ resid + alpha2 * shift_resid * shift_resid)


def total_loss(prune_part: float, quant_part: float) -> float:
    """Combined reconstruction loss of a jointly compressed layer."""
    return prune_part + quant_part


def apply_prune_reconstruction(layer: LayerBlock, next_layer, pruned_index: int,
                               kept: np.ndarray, scales: np.ndarray) -> None:
    """Fold one pruned channel into the kept ones and delete it.

    next_layer is the consumer of this layer's channels: a LayerBlock or a
    LinearHead fed through global average pooling (axis 1 is the input
    channel axis for both).  Mutates both layers in place.
    """
    kept = np.asarray(kept, dtype=np.intp)
    w_next = next_layer.weight.astype(np.float64)
    source = w_next[:, pruned_index].copy()
    for pos, i in enumerate(kept):
        w_next[:, i] += float(scales[pos]) * source
    next_layer.weight = np.delete(w_next, pruned_index, axis=1).astype(np.float32)
    layer.weight = np.delete(layer.weight, pruned_index, axis=0)
    if layer.bias is not None:
        layer.bias = np.delete(layer.bias, pruned_index)
    if layer.bn is not None:
        keep_mask = np.arange(layer.bn.gamma.size) != pruned_index
        layer.bn = layer.bn.select(np.nonzero(keep_mask)[0])


def fold_pruned_batch(next_weight: np.ndarray, pruned: np.ndarray,
                      kept: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Fold all pruned input slices of a weight tensor at once.

    scales has shape (n_kept, n_pruned); column p holds the compensation
    scales of pruned channel pruned[p] over the kept set.  Equivalent to
    applying apply_prune_reconstruction per channel, since compensation
    never modifies a pruned slice.
    """
    w = next_weight.astype(np.float64)
    src = w[:, pruned]
    if next_weight.ndim == 4:
        delta = np.einsum("ophw,kp->okhw", src, scales)
    else:
        delta = src @ scales.T
    w[:, kept] += delta
    return np.delete(w, pruned, axis=1).astype(np.float32)


def apply_quant_reconstruction(layer: LayerBlock, next_layer, channel: int,
                               scale: float, quant_weight: np.ndarray) -> None:
    """Swap in a quantized channel and rescale its slice downstream.

    BN of the quantized layer is left untouched; the rescale lands on the
    next layer's matching input slice.  Mutates both layers in place.
    """
    layer.weight[channel] = np.asarray(quant_weight, dtype=np.float32)
    next_layer.weight[:, channel] *= np.float32(scale)


@dataclass
class ActivationErrorTerms:
    """Channel-combination error before and after the ReLU."""

    preact_diff: np.ndarray
    postact_diff: np.ndarray


def activation_error_terms(pruned_map: np.ndarray, kept_maps: np.ndarray,
                           scales: np.ndarray) -> ActivationErrorTerms:
    """Errors of replacing a channel's map by a scaled kept combination.

    pruned_map is the BN output of the pruned channel; kept_maps stacks the
    kept channels' BN outputs along axis 0.
    """
    combo_pre = np.tensordot(scales, kept_maps, axes=(0, 0))
    combo_post = np.tensordot(scales, np.maximum(kept_maps, 0.0), axes=(0, 0))
    return ActivationErrorTerms(
        preact_diff=pruned_map - combo_pre,
        postact_diff=np.maximum(pruned_map, 0.0) - combo_post,
    )


def relu_bound_check(preact_diff: np.ndarray, postact_diff: np.ndarray,
                     tol: float = 1e-9) -> np.ndarray:
    """Elementwise check postact_diff <= max(preact_diff, 0).

    Holds whenever the combination scales are all nonnegative (ReLU is
    subadditive and positively homogeneous); not guaranteed otherwise.
    """
    return postact_diff <= np.maximum(preact_diff, 0.0) + tol
