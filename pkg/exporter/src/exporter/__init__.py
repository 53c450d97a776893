"""Realistic fixtures for the compressor: a trained tiny CNN plus data.

This package talks to the compressor only through its on-disk formats;
nothing here imports udfc.
"""

from .data import (CLASS_COUNT, EVAL_COUNT, MEAN, STD, export_batches,
                   split_arrays)
from .export import export, export_probe_batch
from .model import TinyCnn
from .neutral import read_dataset, read_model, write_dataset, write_model
from .reference import reference_logits
from .train import accuracy, train_tiny

__all__ = [
    "CLASS_COUNT",
    "EVAL_COUNT",
    "MEAN",
    "STD",
    "TinyCnn",
    "accuracy",
    "export",
    "export_batches",
    "export_probe_batch",
    "read_dataset",
    "read_model",
    "reference_logits",
    "split_arrays",
    "train_tiny",
    "write_dataset",
    "write_model",
]
