"""Whole-network compression: select, solve, reconstruct, quantize.

Blocks are traversed in order; each block first prunes (compensating its
consumer), then quantizes surviving channels (rescaling the consumer's
matching input slices).  A block's consumer is the next conv block, or the
linear head for the final block.  The final block is never pruned; it and
the head are still quantized.  Blocks without BN statistics cannot be
reconstructed and are skipped with a warning.

Per-channel systems share one Gram matrix per layer: with folded filter
rows F (row i scaled by gamma_i/sigma_i), every pruned channel j's normal
equations are submatrices of F F' rescaled by (sigma_j/gamma_j)^2, so the
expensive product is computed once per layer.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .accounting import compression_summary, layer_flops, layer_size_bytes
from .model import Network, ValidationError
from .prune import NORMS, select_pruned
from .quantize import quantize_tensor
from .reconstruct import (DEAD_CHANNEL_EPS, RIDGE_SCALE, fold_bn,
                          fold_pruned_batch, solve_quant_scale,
                          solve_scaled_system)

CSV_COLUMNS = ("layer", "pruned_count", "l_p", "l_q", "l_re",
               "s_hat_norm", "wbits", "size_bytes", "flops")


@dataclass
class CompressionConfig:
    prune_ratio: float = 0.0
    criterion: str = "l1"
    wbits: int = 32            # 32 = keep full precision
    alpha1: float = 0.01
    alpha2: float = 0.008
    skip_layers: frozenset = frozenset()
    ridge: float | None = None  # None = per-system default
    seed: int = 0

    def __post_init__(self):
        self.skip_layers = frozenset(int(i) for i in self.skip_layers)

    def validate(self) -> None:
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ValidationError(f"prune_ratio {self.prune_ratio} outside [0, 1)")
        if self.criterion not in NORMS:
            raise ValidationError(
                f"unknown criterion {self.criterion!r}, expected one of {NORMS}")
        if self.wbits != 32 and not 2 <= self.wbits <= 8:
            raise ValidationError(
                f"wbits {self.wbits} unsupported: use 2..8, or 32 for full precision")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValidationError("alpha1 and alpha2 must be nonnegative")
        if self.ridge is not None and self.ridge < 0:
            raise ValidationError(f"ridge {self.ridge} must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "prune_ratio": self.prune_ratio,
            "criterion": self.criterion,
            "wbits": self.wbits,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "skip_layers": sorted(self.skip_layers),
            "ridge": self.ridge,
            "seed": self.seed,
        }


@dataclass
class LayerRow:
    """Per-weight-layer compression record (blocks first, head last)."""

    layer: int
    kind: str                 # "conv" | "linear"
    pruned_count: int = 0
    l_p: float = 0.0
    l_q: float = 0.0
    s_hat_norm: float = 0.0
    wbits: int = 32
    size_bytes: int = 0
    flops: int = 0
    pruned: list = field(default_factory=list)
    ridge: float = 0.0
    degenerate_scales: int = 0
    notes: list = field(default_factory=list)

    @property
    def l_re(self) -> float:
        return self.l_p + self.l_q

    def to_dict(self) -> dict:
        d = {c: getattr(self, c) for c in CSV_COLUMNS}
        d.update(kind=self.kind, pruned=list(self.pruned), ridge=self.ridge,
                 degenerate_scales=self.degenerate_scales, notes=list(self.notes))
        return d


@dataclass
class Report:
    layers: list
    config: dict
    totals: dict
    warnings: list
    elapsed_seconds: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "layers": [row.to_dict() for row in self.layers],
            "config": self.config,
            "totals": self.totals,
            "warnings": list(self.warnings),
        }
        if include_timing:
            d["timing"] = {"elapsed_seconds": self.elapsed_seconds}
        return d

    def write_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_COLUMNS)
            for row in self.layers:
                w.writerow([getattr(row, c) for c in CSV_COLUMNS])

    def pruned_sets(self) -> dict:
        """Block index -> pruned channel indices, for baseline replays."""
        return {row.layer: list(row.pruned) for row in self.layers
                if row.kind == "conv" and row.pruned}


def solver_thread_cap() -> int:
    """Worker cap for per-channel solves, from UDFC_THREADS (default 1)."""
    raw = os.environ.get("UDFC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_solves(fn, count: int) -> list:
    workers = solver_thread_cap()
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(workers, count)) as pool:
        return list(pool.map(fn, range(count)))


def _prune_layer(blk, consumer, cfg: CompressionConfig,
                 row: LayerRow) -> None:
    """Prune one block in place, folding compensation into its consumer."""
    decision = select_pruned(blk.weight, cfg.prune_ratio, cfg.criterion)
    if decision.n_pruned == 0:
        return
    kept, pruned = decision.kept, decision.pruned
    folded, shifts = fold_bn(blk.weight, blk.bn, blk.bias)
    gram_full = folded @ folded.T
    gram_kept = gram_full[np.ix_(kept, kept)]
    kept_shifts = shifts[kept]
    gamma = blk.bn.gamma.astype(np.float64)
    sigma = blk.bn.sigma.astype(np.float64)
    scales = np.zeros((kept.size, pruned.size))
    losses = np.zeros(pruned.size)
    ridges = np.zeros(pruned.size)
    dead = np.zeros(pruned.size, dtype=bool)

    def solve_one(pos: int):
        j = int(pruned[pos])
        if abs(gamma[j]) < DEAD_CHANNEL_EPS:
            dead[pos] = True
            return
        frame_sq = (sigma[j] / gamma[j]) ** 2
        gram = frame_sq * gram_kept
        corr = frame_sq * gram_full[kept, j]
        ridge = cfg.ridge
        if ridge is None:
            ridge = RIDGE_SCALE * frame_sq * float(np.trace(gram_kept)) / kept.size
        s, ridges[pos] = solve_scaled_system(gram, corr, kept_shifts,
                                             float(shifts[j]), cfg.alpha1, ridge)
        scales[:, pos] = s
        fit = frame_sq * gram_full[j, j] - 2.0 * (s @ corr) + s @ (gram @ s)
        shift_resid = shifts[j] - kept_shifts @ s
        losses[pos] = max(fit, 0.0) + cfg.alpha1 * shift_resid * shift_resid

    _map_solves(solve_one, pruned.size)

    consumer.weight = fold_pruned_batch(consumer.weight, pruned, kept, scales)
    blk.weight = blk.weight[kept].copy()
    if blk.bias is not None:
        blk.bias = blk.bias[kept].copy()
    blk.bn = blk.bn.select(kept)

    row.pruned_count = int(pruned.size)
    row.pruned = [int(j) for j in pruned]
    row.l_p = float(losses.sum())
    row.s_hat_norm = float(np.sqrt((scales * scales).sum()))
    solved = ~dead
    row.ridge = float(ridges[solved].mean()) if solved.any() else 0.0
    if dead.any():
        row.notes.append(
            f"{int(dead.sum())} dead channel(s) pruned without compensation")


def _quantize_conv_layer(blk, consumer, cfg: CompressionConfig,
                         row: LayerRow) -> None:
    """Quantize one block's surviving channels, rescaling the consumer."""
    wq = quantize_tensor(blk.weight, cfg.wbits).dequantize()
    folded, shifts = fold_bn(blk.weight, blk.bn, blk.bias)
    folded_q, _ = fold_bn(wq, blk.bn, blk.bias)
    n = blk.out_channels
    rescales = np.ones(n)
    lq = 0.0
    degenerate = 0
    for m in range(n):
        scale, degen = solve_quant_scale(folded[m], folded_q[m],
                                         float(shifts[m]), cfg.alpha2)
        if degen:
            degenerate += 1
        if consumer is None:
            scale = 1.0
        resid = folded[m] - scale * folded_q[m]
        shift_resid = (1.0 - scale) * shifts[m]
        lq += float(resid @ resid + cfg.alpha2 * shift_resid * shift_resid)
        rescales[m] = scale
    blk.weight = wq
    if consumer is not None:
        r32 = rescales.astype(np.float32)
        if consumer.weight.ndim == 4:
            consumer.weight = consumer.weight * r32[None, :, None, None]
        else:
            consumer.weight = consumer.weight * r32[None, :]
    row.l_q = lq
    row.wbits = cfg.wbits
    row.degenerate_scales = degenerate
    if consumer is None:
        row.notes.append("no consumer: quantized without rescale")


def compress(net: Network, cfg: CompressionConfig) -> tuple[Network, Report]:
    """Compress a network, returning the new network and its report."""
    cfg.validate()
    net.validate()
    t0 = time.perf_counter()
    work = net.copy()
    n_blocks = len(work.blocks)
    quantizing = cfg.wbits < 32
    warnings: list[str] = []
    rows: list[LayerRow] = []
    wbits_out: list[int] = []

    for li in range(n_blocks):
        blk = work.blocks[li]
        row = LayerRow(layer=li, kind="conv")
        if li + 1 < n_blocks:
            consumer = work.blocks[li + 1]
        else:
            consumer = work.head  # may be None
        if li in cfg.skip_layers:
            row.notes.append("skipped by config")
        elif blk.bn is None:
            row.notes.append("no BN statistics, skipped")
            warnings.append(f"layer {li}: no BN statistics, skipped")
        else:
            prunable = cfg.prune_ratio > 0 and li + 1 < n_blocks
            if prunable:
                _prune_layer(blk, consumer, cfg, row)
            if quantizing:
                _quantize_conv_layer(blk, consumer, cfg, row)
        rows.append(row)
        wbits_out.append(row.wbits)

    if work.head is not None:
        row = LayerRow(layer=n_blocks, kind="linear")
        if quantizing:
            work.head.weight = quantize_tensor(work.head.weight,
                                               cfg.wbits).dequantize()
            row.wbits = cfg.wbits
        rows.append(row)
        wbits_out.append(row.wbits)

    work.wbits = wbits_out if any(b != 32 for b in wbits_out) else None
    work.validate()

    for row, size, flops in zip(rows, layer_size_bytes(work), layer_flops(work)):
        row.size_bytes = size
        row.flops = flops
    report = Report(
        layers=rows,
        config=cfg.to_dict(),
        totals=compression_summary(net, work),
        warnings=warnings,
        elapsed_seconds=time.perf_counter() - t0,
    )
    return work, report


def sweep(net: Network, ratios, wbits_list,
          base_cfg: CompressionConfig | None = None) -> list[Report]:
    """One compress per (ratio, wbits) cell, ratios outer, row-major."""
    base = base_cfg or CompressionConfig()
    reports = []
    for ratio in ratios:
        for wb in wbits_list:
            _, rep = compress(net, replace(base, prune_ratio=ratio, wbits=wb))
            reports.append(rep)
    return reports
