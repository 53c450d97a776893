"""Writer and reader for the compressor's on-disk directory formats.

A model directory holds `model.json` (manifest, version "udfc-1") and
`weights.bin`, one little-endian float32 blob. Each conv record stores its
weight, optional bias, then BN gamma/beta/mean/var; pool records carry no
payload; a final linear record stores weight and optional bias. All blob
offsets and lengths count floats, not bytes.

Blocks are plain dicts here so callers can build or edit them freely:
conv: {weight (O,I,K,K), bias or None, gamma, beta, mean, var, eps,
       stride, pad, activation, pool (None|"max"|"gap")}
head: {weight (out,in), bias or None}
"""

import json
import os

import numpy as np

VERSION = "udfc-1"
MODEL_MANIFEST = "model.json"
MODEL_WEIGHTS = "weights.bin"
DATA_MANIFEST = "data.json"
DATA_BIN = "data.bin"
LABELS_BIN = "labels.bin"


def _dump_json(obj, path: str) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


class _BlobWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.floats = 0

    def put(self, arr: np.ndarray) -> tuple[int, int]:
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        off = self.floats
        self.chunks.append(flat.tobytes())
        self.floats += flat.size
        return off, int(flat.size)


def write_model(path: str, input_shape: tuple, blocks: list, head: dict | None,
                wbits: list | None = None) -> None:
    os.makedirs(path, exist_ok=True)
    blob = _BlobWriter()
    n_layers = len(blocks) + (1 if head is not None else 0)
    bits = wbits if wbits is not None else [32] * n_layers
    layers = []
    for li, blk in enumerate(blocks):
        weight = np.asarray(blk["weight"], dtype=np.float32)
        rec = {
            "kind": "conv",
            "out_channels": int(weight.shape[0]),
            "in_channels": int(weight.shape[1]),
            "kernel": int(weight.shape[2]),
            "stride": int(blk.get("stride", 1)),
            "pad": int(blk.get("pad", 0)),
            "has_bias": blk.get("bias") is not None,
            "has_bn": True,
            "activation": blk.get("activation", "relu"),
            "wbits": int(bits[li]),
        }
        rec["weight_offset"], rec["weight_len"] = blob.put(weight)
        if blk.get("bias") is not None:
            rec["bias_offset"], rec["bias_len"] = blob.put(blk["bias"])
        rec["bn_gamma_offset"], rec["bn_len"] = blob.put(blk["gamma"])
        rec["bn_beta_offset"], _ = blob.put(blk["beta"])
        rec["bn_mean_offset"], _ = blob.put(blk["mean"])
        rec["bn_var_offset"], _ = blob.put(blk["var"])
        rec["bn_eps"] = float(blk["eps"])
        layers.append(rec)
        if blk.get("pool") == "max":
            layers.append({"kind": "maxpool", "kernel": 2, "stride": 2})
        elif blk.get("pool") == "gap":
            layers.append({"kind": "gap"})
    if head is not None:
        weight = np.asarray(head["weight"], dtype=np.float32)
        rec = {
            "kind": "linear",
            "out_features": int(weight.shape[0]),
            "in_features": int(weight.shape[1]),
            "has_bias": head.get("bias") is not None,
            "wbits": int(bits[-1]),
        }
        rec["weight_offset"], rec["weight_len"] = blob.put(weight)
        if head.get("bias") is not None:
            rec["bias_offset"], rec["bias_len"] = blob.put(head["bias"])
        layers.append(rec)
    manifest = {
        "version": VERSION,
        "input_shape": [int(d) for d in input_shape],
        "layers": layers,
    }
    _dump_json(manifest, os.path.join(path, MODEL_MANIFEST))
    with open(os.path.join(path, MODEL_WEIGHTS), "wb") as f:
        f.write(b"".join(blob.chunks))


def _take(blob: np.ndarray, rec: dict, key: str, n: int) -> np.ndarray:
    off = int(rec[key])
    return blob[off:off + n].copy()


def read_model(path: str) -> tuple[tuple, list, dict | None]:
    """Inverse of write_model, returning the same dict structure."""
    with open(os.path.join(path, MODEL_MANIFEST)) as f:
        manifest = json.load(f)
    if manifest.get("version") != VERSION:
        raise ValueError(f"unexpected format version {manifest.get('version')!r}")
    blob = np.fromfile(os.path.join(path, MODEL_WEIGHTS), dtype="<f4")
    blocks: list = []
    head = None
    for rec in manifest["layers"]:
        kind = rec["kind"]
        if kind == "conv":
            o, i, k = rec["out_channels"], rec["in_channels"], rec["kernel"]
            blk = {
                "weight": _take(blob, rec, "weight_offset",
                                o * i * k * k).reshape(o, i, k, k),
                "bias": (_take(blob, rec, "bias_offset", o)
                         if rec["has_bias"] else None),
                "gamma": _take(blob, rec, "bn_gamma_offset", o),
                "beta": _take(blob, rec, "bn_beta_offset", o),
                "mean": _take(blob, rec, "bn_mean_offset", o),
                "var": _take(blob, rec, "bn_var_offset", o),
                "eps": float(rec["bn_eps"]),
                "stride": rec["stride"],
                "pad": rec["pad"],
                "activation": rec["activation"],
                "pool": None,
            }
            blocks.append(blk)
        elif kind == "maxpool":
            blocks[-1]["pool"] = "max"
        elif kind == "gap":
            blocks[-1]["pool"] = "gap"
        elif kind == "linear":
            o, i = rec["out_features"], rec["in_features"]
            head = {
                "weight": _take(blob, rec, "weight_offset", o * i).reshape(o, i),
                "bias": (_take(blob, rec, "bias_offset", o)
                         if rec["has_bias"] else None),
            }
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return tuple(manifest["input_shape"]), blocks, head


def read_dataset(path: str) -> tuple[np.ndarray, np.ndarray, dict]:
    """Load a dataset directory back as (data NCHW, labels, manifest)."""
    with open(os.path.join(path, DATA_MANIFEST)) as f:
        meta = json.load(f)
    shape = (meta["count"], *meta["shape"])
    data = np.fromfile(os.path.join(path, DATA_BIN), dtype="<f4").reshape(shape)
    labels = np.fromfile(os.path.join(path, LABELS_BIN), dtype="<u4")
    if labels.shape[0] != meta["count"]:
        raise ValueError(
            f"labels.bin holds {labels.shape[0]} entries, manifest says {meta['count']}")
    return data, labels, meta


def write_dataset(path: str, data: np.ndarray, labels: np.ndarray,
                  class_count: int, extra: dict | None = None) -> None:
    os.makedirs(path, exist_ok=True)
    data = np.ascontiguousarray(data, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    if data.ndim != 4 or data.shape[0] != labels.shape[0]:
        raise ValueError(
            f"data {data.shape} and labels {labels.shape} disagree on count")
    meta = {
        "count": int(data.shape[0]),
        "shape": [int(d) for d in data.shape[1:]],
        "class_count": int(class_count),
    }
    if extra:
        meta.update(extra)
    _dump_json(meta, os.path.join(path, DATA_MANIFEST))
    with open(os.path.join(path, DATA_BIN), "wb") as f:
        f.write(data.tobytes())
    with open(os.path.join(path, LABELS_BIN), "wb") as f:
        f.write(labels.tobytes())
