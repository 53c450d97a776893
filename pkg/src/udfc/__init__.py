"""Data-free CNN compression.

Prunes channels and quantizes weights simultaneously, restoring the induced
loss with closed-form next-layer reconstruction driven only by weights and
BN statistics.  No training data, labels, or fine-tuning involved.
"""

from .accounting import (BYTES_PER_MB, compression_summary, layer_flops,
                         layer_size_bytes, model_flops, model_size_bytes,
                         model_size_mb)
from .generate import parse_topology, random_bn, random_network, redundant_network
from .harness import (EvalResult, baseline_one_to_one, baseline_prune_only,
                      evaluate_accuracy, feature_maps, feature_mse,
                      feature_mse_per_sample, matching_taps_mse, random_inputs)
from .inference import ForwardResult, forward
from .model import (ACTIVATIONS, DTYPE, BatchNormParams, DeadChannelError,
                    LayerBlock, LinearHead, ManifestError, Network,
                    NonFiniteError, SingularSystemError, UdfcError,
                    UnsupportedLayerError, ValidationError, infer_shapes,
                    param_count)
from .pipeline import (CompressionConfig, LayerRow, Report, compress,
                       solver_thread_cap, sweep)
from .prune import PruneDecision, channel_norms, prune_count, select_pruned
from .quantize import (QuantizedTensor, dequantize_array, fake_quantize,
                       quantize_array, quantize_tensor)
from .reconstruct import (ActivationErrorTerms, PruningSystem, ScaleSolution,
                          activation_error_terms, apply_prune_reconstruction,
                          apply_quant_reconstruction, build_pruning_system,
                          default_ridge, flatten_filters, fold_bn,
                          fold_pruned_batch, loss_gradient, pruning_loss,
                          quant_loss, relu_bound_check, solve_pruning_scales,
                          solve_quant_scale, total_loss)
from .serialize import load_dataset, load_model, save_dataset, save_model

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS", "BYTES_PER_MB", "DTYPE",
    "ActivationErrorTerms", "BatchNormParams", "CompressionConfig",
    "DeadChannelError", "EvalResult", "ForwardResult", "LayerBlock",
    "LayerRow", "LinearHead", "ManifestError", "Network", "NonFiniteError",
    "PruneDecision", "PruningSystem", "QuantizedTensor", "Report",
    "ScaleSolution", "SingularSystemError", "UdfcError",
    "UnsupportedLayerError", "ValidationError",
    "activation_error_terms", "apply_prune_reconstruction",
    "apply_quant_reconstruction", "baseline_one_to_one",
    "baseline_prune_only", "build_pruning_system", "channel_norms",
    "compress", "compression_summary", "default_ridge", "dequantize_array",
    "evaluate_accuracy", "fake_quantize", "feature_maps", "feature_mse",
    "feature_mse_per_sample", "flatten_filters", "fold_bn",
    "fold_pruned_batch", "forward", "infer_shapes", "layer_flops",
    "layer_size_bytes", "load_dataset", "load_model", "loss_gradient",
    "matching_taps_mse", "model_flops", "model_size_bytes", "model_size_mb",
    "param_count", "parse_topology", "prune_count", "pruning_loss",
    "quant_loss", "quantize_array", "quantize_tensor", "random_bn",
    "random_inputs", "random_network", "redundant_network",
    "relu_bound_check", "save_dataset",
    "save_model", "select_pruned", "solve_pruning_scales",
    "solve_quant_scale", "solver_thread_cap", "sweep", "total_loss",
]
