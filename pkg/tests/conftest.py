"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from udfc import BatchNormParams, LayerBlock, LinearHead, Network


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def make_bn(rng: np.random.Generator, channels: int) -> BatchNormParams:
    return BatchNormParams(
        gamma=rng.uniform(0.5, 1.5, channels).astype(np.float32),
        beta=rng.uniform(-0.5, 0.5, channels).astype(np.float32),
        mu=rng.uniform(-1.0, 1.0, channels).astype(np.float32),
        var=rng.uniform(0.25, 4.0, channels).astype(np.float32),
    )


def identity_bn(channels: int, eps: float = 1e-12) -> BatchNormParams:
    """BN that is numerically the identity map (sigma = 1 up to eps)."""
    one = np.ones(channels, dtype=np.float32)
    zero = np.zeros(channels, dtype=np.float32)
    return BatchNormParams(gamma=one, beta=zero, mu=zero, var=one - np.float32(eps),
                           eps=eps)


def make_block(rng: np.random.Generator, out_ch: int, in_ch: int, k: int = 3,
               pool: str | None = None, activation: str = "relu",
               with_bias: bool = False, with_bn: bool = True) -> LayerBlock:
    weight = (rng.standard_normal((out_ch, in_ch, k, k)) * 0.3).astype(np.float32)
    bias = (0.1 * rng.standard_normal(out_ch)).astype(np.float32) if with_bias else None
    bn = make_bn(rng, out_ch) if with_bn else None
    return LayerBlock(weight, bias, 1, k // 2, bn, activation, pool)


def make_pair_net(rng: np.random.Generator, c0: int = 6, c1: int = 8,
                  in_ch: int = 3, hw: int = 8, **kwargs) -> Network:
    """Two conv blocks; the second consumes the first's channels."""
    blocks = [make_block(rng, c0, in_ch, **kwargs), make_block(rng, c1, c0, **kwargs)]
    net = Network(blocks, None, (in_ch, hw, hw))
    net.validate()
    return net


def make_headed_net(rng: np.random.Generator, c0: int = 6, c1: int = 8,
                    classes: int = 5, in_ch: int = 3, hw: int = 8) -> Network:
    blocks = [make_block(rng, c0, in_ch), make_block(rng, c1, c0, pool="gap")]
    head = LinearHead((rng.standard_normal((classes, c1)) * 0.3).astype(np.float32),
                      np.zeros(classes, dtype=np.float32))
    net = Network(blocks, head, (in_ch, hw, hw))
    net.validate()
    return net
