"""Topology parsing and seeded fixture network generation."""

import numpy as np
import pytest

from udfc import (ValidationError, parse_topology, random_bn, random_network,
                  redundant_network)


class TestParseTopology:
    def test_full_grammar(self):
        tokens = parse_topology("c16-c32k5s2-mp-c64-gap-fc10")
        assert tokens == [("conv", 16, 3, 1), ("conv", 32, 5, 2), ("mp",),
                          ("conv", 64, 3, 1), ("gap",), ("fc", 10)]

    def test_kernel_without_stride(self):
        assert parse_topology("c8k1") == [("conv", 8, 1, 1)]

    @pytest.mark.parametrize("text", ["", "-", "c16-conv32", "c0", "bn16",
                                      "c16-fc10-c8"])
    def test_malformed_rejected(self, text):
        with pytest.raises(ValidationError):
            if text == "c16-fc10-c8":
                random_network(text, seed=0)
            else:
                parse_topology(text)

    def test_pool_without_conv_rejected(self):
        with pytest.raises(ValidationError):
            random_network("mp-c16", seed=0)

    def test_double_pool_rejected(self):
        with pytest.raises(ValidationError):
            random_network("c16-mp-gap", seed=0)

    def test_fc_without_gap_rejected(self):
        with pytest.raises(ValidationError):
            random_network("c16-fc10", seed=0)


class TestRandomBn:
    def test_ranges(self):
        rng = np.random.default_rng(0)
        bn = random_bn(500, rng)
        bn.validate(500, "bn")
        assert np.all((bn.gamma >= 0.5) & (bn.gamma <= 1.5))
        assert np.all((bn.beta >= -0.5) & (bn.beta <= 0.5))
        assert np.all((bn.mu >= -1.0) & (bn.mu <= 1.0))
        assert np.all((bn.var >= 0.25) & (bn.var <= 4.0))


class TestRandomNetwork:
    def test_structure(self):
        net = random_network("c16-c32-gap-fc10", seed=1, input_shape=(3, 16, 16))
        assert len(net.blocks) == 2
        assert net.blocks[0].out_channels == 16
        assert net.blocks[1].out_channels == 32
        assert net.blocks[1].pool == "gap"
        assert net.head.out_features == 10
        np.testing.assert_array_equal(net.head.bias, np.zeros(10))
        net.validate()

    def test_seed_determinism(self):
        a = random_network("c8-mp-c12-gap-fc5", seed=42)
        b = random_network("c8-mp-c12-gap-fc5", seed=42)
        np.testing.assert_array_equal(a.blocks[0].weight, b.blocks[0].weight)
        np.testing.assert_array_equal(a.blocks[1].bn.var, b.blocks[1].bn.var)
        np.testing.assert_array_equal(a.head.weight, b.head.weight)

    def test_seeds_differ(self):
        a = random_network("c8-gap-fc5", seed=1)
        b = random_network("c8-gap-fc5", seed=2)
        assert not np.array_equal(a.blocks[0].weight, b.blocks[0].weight)

    def test_stride_and_pool_reach_head(self):
        net = random_network("c8s2-c16-mp-c16-gap-fc10", seed=0,
                             input_shape=(3, 32, 32))
        from udfc import infer_shapes
        assert infer_shapes(net)[-1] == (16, 1, 1)


class TestRedundantNetwork:
    def test_validates_and_runs(self, rng):
        net = redundant_network("c12-c16-gap-fc10", seed=3, input_shape=(3, 8, 8))
        net.validate()
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        from udfc import forward
        assert forward(net, x).output.shape == (2, 10)

    def test_seed_determinism(self):
        a = redundant_network("c12-c16-gap-fc10", seed=9)
        b = redundant_network("c12-c16-gap-fc10", seed=9)
        np.testing.assert_array_equal(a.blocks[0].weight, b.blocks[0].weight)

    def test_channels_nearly_dependent(self):
        """Half the channels are latent mixtures, so the filter matrix has
        most of its energy in a low-dimensional subspace."""
        net = redundant_network("c16-gap-fc2", seed=5, latent_fraction=0.25,
                                noise_scale=0.01)
        flat = net.blocks[0].weight.reshape(16, -1).astype(np.float64)
        s = np.linalg.svd(flat, compute_uv=False)
        energy = (s ** 2).cumsum() / (s ** 2).sum()
        assert energy[3] > 0.95  # 4 latents carry nearly everything

    def test_latent_fraction_bounds(self):
        with pytest.raises(ValidationError):
            redundant_network("c8-gap-fc2", seed=0, latent_fraction=0.0)
        with pytest.raises(ValidationError):
            redundant_network("c8-gap-fc2", seed=0, latent_fraction=1.5)
