"""Channel selection for structured pruning.

Channels are ranked by filter norm; the lowest-norm floor(ratio * N)
channels of a layer are pruned.  Ties keep the lower index first in the
pruned set (stable sort).  A tiny epsilon guards the floor against
representation error, so ratio=1/3 of 3 channels prunes exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ValidationError

NORMS = ("l1", "l2")
_FLOOR_EPS = 1e-9


def channel_norms(weight: np.ndarray, norm: str = "l1") -> np.ndarray:
    """Per-output-channel filter norm of an OIHW weight tensor."""
    if norm not in NORMS:
        raise ValidationError(f"unknown norm {norm!r}, expected one of {NORMS}")
    flat = weight.reshape(weight.shape[0], -1).astype(np.float64)
    if norm == "l1":
        return np.abs(flat).sum(axis=1)
    return np.sqrt((flat * flat).sum(axis=1))


def prune_count(n_channels: int, ratio: float) -> int:
    if not 0.0 <= ratio < 1.0:
        raise ValidationError(f"prune ratio {ratio} outside [0, 1)")
    return int(np.floor(ratio * n_channels + _FLOOR_EPS))


@dataclass
class PruneDecision:
    """Partition of a layer's output channels into pruned and kept sets."""

    pruned: np.ndarray  # indices, ascending
    kept: np.ndarray    # indices, ascending
    norms: np.ndarray   # per-channel norm used for the ranking

    @property
    def n_pruned(self) -> int:
        return len(self.pruned)


def select_pruned(weight: np.ndarray, ratio: float, norm: str = "l1") -> PruneDecision:
    n = weight.shape[0]
    norms = channel_norms(weight, norm)
    count = prune_count(n, ratio)
    if count >= n:
        raise ValidationError(f"pruning all {n} channels of a layer is not allowed")
    order = np.argsort(norms, kind="stable")
    pruned = np.sort(order[:count])
    kept = np.sort(order[count:])
    return PruneDecision(pruned, kept, norms)
