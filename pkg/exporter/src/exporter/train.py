"""Seeded training of the fixture network on the digits training split.

Training runs in three phases. A dense phase fits the task. A
sparsification phase zeroes the lowest-norm filters of the first two conv
layers and keeps them at zero, which leaves the running statistics of the
dead channels to decay while the survivors recover. A final phase
fine-tunes with frozen BN statistics, so the per-channel affine offsets of
the dead channels act as plain constants and the rest of the network can
learn to rely on them. The result is a checkpoint with genuinely unused
filter slots whose BN offsets still carry signal, which is the shape of
network that channel-level compression tools expect to meet.
"""

import numpy as np
import torch
from torch import nn

from .data import split_arrays
from .model import TinyCnn

# Filters zeroed in conv1/conv2 during the sparsification phase.
ZEROED_FILTERS = (10, 20)
SPARSIFY_EPOCHS = 8
FROZEN_BN_EPOCHS = 16
DENSE_LR = 3e-3
FROZEN_BN_LR = 1e-3
BATCH = 64


def _run_epochs(model, opt, order_rng, x, y, epochs, masks=()):
    loss_fn = nn.CrossEntropyLoss()
    for _ in range(epochs):
        order = order_rng.permutation(y.numel())
        for start in range(0, y.numel(), BATCH):
            idx = torch.as_tensor(order[start:start + BATCH])
            opt.zero_grad()
            loss_fn(model(x[idx]), y[idx]).backward()
            opt.step()
            with torch.no_grad():
                for conv, mask in masks:
                    conv.weight[mask] = 0.0


def train_tiny(epochs: int, seed: int, samples: int | None = None) -> TinyCnn:
    """Train for `epochs` dense passes; `samples` caps the training subset.

    All randomness (init and batch order) flows from the seed, so equal
    seeds give equal checkpoints on a given platform. `epochs=0` returns
    the untouched initialization. Returns the model in eval mode.
    """
    torch.manual_seed(seed)
    model = TinyCnn()
    data, labels = split_arrays("train")
    if samples is not None:
        data, labels = data[:samples], labels[:samples]
    x = torch.from_numpy(data)
    y = torch.from_numpy(labels.astype(np.int64))
    order_rng = np.random.default_rng(seed)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=DENSE_LR)
    _run_epochs(model, opt, order_rng, x, y, epochs)
    if epochs == 0:
        model.eval()
        return model

    masks = []
    with torch.no_grad():
        for conv, count in zip((model.conv1, model.conv2), ZEROED_FILTERS):
            order = conv.weight.flatten(1).norm(dim=1).argsort()
            mask = torch.zeros(conv.weight.shape[0], dtype=torch.bool)
            mask[order[:count]] = True
            conv.weight[mask] = 0.0
            masks.append((conv, mask))
    _run_epochs(model, opt, order_rng, x, y, SPARSIFY_EPOCHS, masks)

    # eval mode freezes the running statistics, so this phase optimizes
    # exactly the function the exported checkpoint will compute.
    model.eval()
    opt = torch.optim.Adam(model.parameters(), lr=FROZEN_BN_LR)
    _run_epochs(model, opt, order_rng, x, y, FROZEN_BN_EPOCHS, masks)
    model.eval()
    return model


def accuracy(model: TinyCnn, data: np.ndarray, labels: np.ndarray) -> float:
    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(data))
    return float((logits.argmax(dim=1).numpy() == labels).mean())
