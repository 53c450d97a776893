"""The digits corpus split and exported as evaluation batches.

The 1797 8x8 grayscale digits are shuffled once with a fixed constant
seed, independent of any training seed, then split into a 1000-sample
evaluation set and a 797-sample training set. Pixels (0..16) are
normalized with fixed constants recorded in every emitted data.json.
"""

import numpy as np
from sklearn.datasets import load_digits

from .neutral import write_dataset

MEAN = 5.0
STD = 5.0
SPLIT_SEED = 971
EVAL_COUNT = 1000
CLASS_COUNT = 10


def normalized_digits() -> tuple[np.ndarray, np.ndarray]:
    """All 1797 samples as normalized NCHW float32, in split order."""
    raw = load_digits()
    data = ((raw.images.astype(np.float32) - MEAN) / STD)[:, None]
    labels = raw.target.astype(np.uint32)
    order = np.random.default_rng(SPLIT_SEED).permutation(labels.size)
    return data[order], labels[order]


def split_arrays(split: str) -> tuple[np.ndarray, np.ndarray]:
    data, labels = normalized_digits()
    if split == "eval":
        return data[:EVAL_COUNT], labels[:EVAL_COUNT]
    if split == "train":
        return data[EVAL_COUNT:], labels[EVAL_COUNT:]
    raise ValueError(f"unknown split {split!r}, expected 'train' or 'eval'")


def export_batches(split: str, n: int, out_dir: str) -> None:
    """Write the split's first n samples as a dataset directory."""
    data, labels = split_arrays(split)
    if not 0 <= n <= labels.size:
        raise ValueError(f"requested {n} samples, split holds {labels.size}")
    data, labels = data[:n], labels[:n]
    balance = np.bincount(labels.astype(np.int64), minlength=CLASS_COUNT)
    write_dataset(out_dir, data, labels, CLASS_COUNT, extra={
        "split": split,
        "normalization": {"mean": MEAN, "std": STD},
        "class_balance": [int(c) for c in balance],
    })
