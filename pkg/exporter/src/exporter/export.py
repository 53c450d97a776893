"""Convert a trained TinyCnn checkpoint into the neutral on-disk format."""

import numpy as np
import torch

from .data import CLASS_COUNT, split_arrays
from .model import TinyCnn
from .neutral import write_dataset, write_model


def _block(conv, bn, pool):
    # Running statistics, not batch statistics: the exported network must
    # reproduce inference-mode behaviour.
    return {
        "weight": conv.weight.detach().numpy(),
        "bias": None,
        "gamma": bn.weight.detach().numpy(),
        "beta": bn.bias.detach().numpy(),
        "mean": bn.running_mean.detach().numpy(),
        "var": bn.running_var.detach().numpy(),
        "eps": float(bn.eps),
        "stride": 1,
        "pad": 1,
        "activation": "relu",
        "pool": pool,
    }


def export(model: TinyCnn, out_dir: str) -> None:
    """Write the model to `out_dir` as model.json plus weights.bin."""
    model.eval()
    blocks = [
        _block(model.conv1, model.bn1, None),
        _block(model.conv2, model.bn2, "max"),
        _block(model.conv3, model.bn3, "gap"),
    ]
    head = {
        "weight": model.fc.weight.detach().numpy(),
        "bias": model.fc.bias.detach().numpy(),
    }
    write_model(out_dir, (1, 8, 8), blocks, head)


def export_probe_batch(model: TinyCnn, n: int, out_dir: str) -> None:
    """Write `n` held-out samples labeled with the model's own predictions.

    A consumer that reproduces this model exactly scores 100% on the
    probe batch, so it doubles as a parity check for other engines.
    """
    data, _ = split_arrays("eval")
    if not 0 <= n <= data.shape[0]:
        raise ValueError(f"probe count {n} outside [0, {data.shape[0]}]")
    data = data[:n]
    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(data))
    preds = logits.argmax(dim=1).numpy().astype(np.uint32)
    write_dataset(out_dir, data, preds, CLASS_COUNT,
                  extra={"labels": "model-argmax"})
