"""Seeded random fixture networks from a compact topology string.

Grammar, tokens joined by "-":
    cN[kK][sS]  conv block, N output channels, kernel K (default 3),
                stride S (default 1), padding K // 2, BN + ReLU
    mp          2x2/stride-2 max pool on the preceding conv block
    gap         global average pool on the preceding conv block
    fcN         linear head with N classes (requires a preceding gap)

Example: "c16-c32-mp-c64-gap-fc10".  All randomness flows from the seed;
BN statistics are drawn from plausible post-training ranges.
"""

from __future__ import annotations

import re

import numpy as np

from .model import BatchNormParams, LayerBlock, LinearHead, Network, ValidationError

_CONV_RE = re.compile(r"^c(\d+)(?:k(\d+))?(?:s(\d+))?$")
_FC_RE = re.compile(r"^fc(\d+)$")


def parse_topology(text: str) -> list[tuple]:
    """Token list [("conv", n, k, s) | ("mp",) | ("gap",) | ("fc", n)]."""
    out: list[tuple] = []
    tokens = [t for t in text.strip().split("-") if t]
    if not tokens:
        raise ValidationError("empty topology string")
    for tok in tokens:
        m = _CONV_RE.match(tok)
        if m:
            n = int(m.group(1))
            k = int(m.group(2)) if m.group(2) else 3
            s = int(m.group(3)) if m.group(3) else 1
            if n < 1 or k < 1 or s < 1:
                raise ValidationError(f"bad conv token {tok!r}")
            out.append(("conv", n, k, s))
        elif tok == "mp":
            out.append(("mp",))
        elif tok == "gap":
            out.append(("gap",))
        else:
            m = _FC_RE.match(tok)
            if not m:
                raise ValidationError(f"unknown topology token {tok!r}")
            out.append(("fc", int(m.group(1))))
    return out


def random_bn(channels: int, rng: np.random.Generator) -> BatchNormParams:
    """BN statistics in plausible post-training ranges."""
    return BatchNormParams(
        gamma=rng.uniform(0.5, 1.5, channels).astype(np.float32),
        beta=rng.uniform(-0.5, 0.5, channels).astype(np.float32),
        mu=rng.uniform(-1.0, 1.0, channels).astype(np.float32),
        var=rng.uniform(0.25, 4.0, channels).astype(np.float32),
    )


def _build(topology: str, input_shape: tuple[int, int, int], activation: str,
           make_conv, rng: np.random.Generator) -> Network:
    blocks: list[LayerBlock] = []
    head = None
    channels = input_shape[0]
    for tok in parse_topology(topology):
        if tok[0] == "conv":
            if head is not None:
                raise ValidationError("conv token after fc head")
            _, n, k, s = tok
            blocks.append(LayerBlock(make_conv(n, channels, k), None, s, k // 2,
                                     random_bn(n, rng), activation))
            channels = n
        elif tok[0] in ("mp", "gap"):
            if not blocks or blocks[-1].pool is not None:
                raise ValidationError(f"{tok[0]!r} needs a preceding conv block")
            blocks[-1].pool = "max" if tok[0] == "mp" else "gap"
        else:
            if head is not None:
                raise ValidationError("multiple fc heads")
            if not blocks or blocks[-1].pool != "gap":
                raise ValidationError("fc head requires a preceding gap")
            _, n = tok
            weight = (rng.standard_normal((n, channels))
                      * np.sqrt(1.0 / channels)).astype(np.float32)
            head = LinearHead(weight, np.zeros(n, dtype=np.float32))
    if not blocks:
        raise ValidationError("topology has no conv blocks")
    net = Network(blocks, head, tuple(input_shape))
    net.validate()
    return net


def random_network(topology: str, seed: int,
                   input_shape: tuple[int, int, int] = (3, 32, 32),
                   activation: str = "relu") -> Network:
    """Build a random-weight network matching the topology string."""
    rng = np.random.default_rng(seed)

    def make_conv(n: int, channels: int, k: int) -> np.ndarray:
        fan_in = channels * k * k
        return (rng.standard_normal((n, channels, k, k))
                * np.sqrt(2.0 / fan_in)).astype(np.float32)

    return _build(topology, input_shape, activation, make_conv, rng)


def redundant_network(topology: str, seed: int,
                      input_shape: tuple[int, int, int] = (3, 32, 32),
                      activation: str = "relu",
                      latent_fraction: float = 0.5,
                      noise_scale: float = 0.1) -> Network:
    """Random network whose channels share latent filters.

    Each conv layer mixes latent_fraction * N latent filters with
    nonnegative coefficients plus a small independent residue, so most
    channels are approximate combinations of the others.  Trained networks
    exhibit this redundancy; iid random filters do not, and channel
    compensation has nothing to exploit on them.
    """
    if not 0.0 < latent_fraction <= 1.0:
        raise ValidationError(f"latent_fraction {latent_fraction} outside (0, 1]")
    rng = np.random.default_rng(seed)

    def make_conv(n: int, channels: int, k: int) -> np.ndarray:
        n_latent = max(1, round(latent_fraction * n))
        latent = rng.standard_normal((n_latent, channels, k, k))
        mix = np.abs(rng.standard_normal((n, n_latent)))
        w = np.tensordot(mix, latent, axes=(1, 0))
        rms = np.sqrt((w * w).mean())
        w += noise_scale * rms * rng.standard_normal(w.shape)
        w *= np.sqrt(2.0 / (channels * k * k)) / np.sqrt((w * w).mean())
        return w.astype(np.float32)

    return _build(topology, input_shape, activation, make_conv, rng)
