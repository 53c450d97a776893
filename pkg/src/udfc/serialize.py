"""On-disk model and dataset formats.

A model directory holds `model.json` (manifest, version "udfc-1") and
`weights.bin` (raw little-endian float32, concatenated in manifest order:
per conv layer weight, bias, BN gamma/beta/mean/var; linear weight, bias).
Offsets and lengths are in float32 elements.  Saving is deterministic, so
save -> load -> save reproduces identical bytes.

A dataset directory holds `data.bin` (NCHW float32 LE), `labels.bin`
(uint32 LE) and `data.json` with at least {count, shape, class_count}.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .model import (DTYPE, BatchNormParams, LayerBlock, LinearHead,
                    ManifestError, Network, UnsupportedLayerError)

FORMAT_VERSION = "udfc-1"
MODEL_MANIFEST = "model.json"
MODEL_WEIGHTS = "weights.bin"


class _BlobWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def put(self, arr: np.ndarray) -> tuple[int, int]:
        a = np.ascontiguousarray(arr, dtype=DTYPE)
        off, n = self.offset, a.size
        self.chunks.append(a.astype("<f4", copy=False).tobytes())
        self.offset += n
        return off, n

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


def _dump_json(obj, path: str) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def save_model(net: Network, path: str) -> None:
    """Write model.json + weights.bin under the directory `path`."""
    net.validate()
    os.makedirs(path, exist_ok=True)
    blob = _BlobWriter()
    layers = []
    wbits = net.wbits or [32] * net.n_weight_layers
    for li, blk in enumerate(net.blocks):
        rec = {
            "kind": "conv",
            "out_channels": blk.out_channels,
            "in_channels": blk.in_channels,
            "kernel": blk.kernel,
            "stride": blk.stride,
            "pad": blk.pad,
            "has_bias": blk.bias is not None,
            "has_bn": blk.bn is not None,
            "activation": blk.activation,
            "wbits": int(wbits[li]),
        }
        rec["weight_offset"], rec["weight_len"] = blob.put(blk.weight)
        if blk.bias is not None:
            rec["bias_offset"], rec["bias_len"] = blob.put(blk.bias)
        if blk.bn is not None:
            rec["bn_gamma_offset"], rec["bn_len"] = blob.put(blk.bn.gamma)
            rec["bn_beta_offset"], _ = blob.put(blk.bn.beta)
            rec["bn_mean_offset"], _ = blob.put(blk.bn.mu)
            rec["bn_var_offset"], _ = blob.put(blk.bn.var)
            rec["bn_eps"] = blk.bn.eps
        layers.append(rec)
        if blk.pool == "max":
            layers.append({"kind": "maxpool", "kernel": 2, "stride": 2})
        elif blk.pool == "gap":
            layers.append({"kind": "gap"})
    if net.head is not None:
        rec = {
            "kind": "linear",
            "out_features": net.head.out_features,
            "in_features": net.head.in_features,
            "has_bias": net.head.bias is not None,
            "wbits": int(wbits[-1]),
        }
        rec["weight_offset"], rec["weight_len"] = blob.put(net.head.weight)
        if net.head.bias is not None:
            rec["bias_offset"], rec["bias_len"] = blob.put(net.head.bias)
        layers.append(rec)
    manifest = {
        "version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "layers": layers,
    }
    _dump_json(manifest, os.path.join(path, MODEL_MANIFEST))
    with open(os.path.join(path, MODEL_WEIGHTS), "wb") as f:
        f.write(blob.bytes())


def _take(blob: np.ndarray, rec: dict, off_key: str, n: int, what: str) -> np.ndarray:
    off = int(rec[off_key])
    if off < 0 or off + n > blob.size:
        raise ManifestError(f"{what}: offset {off}+{n} exceeds blob of {blob.size} floats")
    return blob[off:off + n].copy()


def load_model(path: str) -> Network:
    """Load and validate a model directory written by save_model."""
    mpath = os.path.join(path, MODEL_MANIFEST)
    wpath = os.path.join(path, MODEL_WEIGHTS)
    if not os.path.exists(mpath):
        raise FileNotFoundError(f"missing manifest {mpath}")
    if not os.path.exists(wpath):
        raise FileNotFoundError(f"missing weight blob {wpath}")
    with open(mpath) as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestError(f"manifest is not valid JSON: {e}") from e
    if manifest.get("version") != FORMAT_VERSION:
        raise ManifestError(
            f"unsupported format version {manifest.get('version')!r}, "
            f"expected {FORMAT_VERSION!r}")
    blob = np.fromfile(wpath, dtype="<f4")

    blocks: list[LayerBlock] = []
    head = None
    wbits: list[int] = []
    consumed = 0
    for idx, rec in enumerate(manifest.get("layers", [])):
        kind = rec.get("kind")
        where = f"layer record {idx}"
        if kind == "conv":
            if head is not None:
                raise ManifestError(f"{where}: conv after linear head")
            o, i, k = int(rec["out_channels"]), int(rec["in_channels"]), int(rec["kernel"])
            n = o * i * k * k
            if int(rec["weight_len"]) != n:
                raise ManifestError(
                    f"{where}: weight_len {rec['weight_len']} != {o}x{i}x{k}x{k}={n}")
            w = _take(blob, rec, "weight_offset", n, where).reshape(o, i, k, k)
            consumed += n
            bias = None
            if rec.get("has_bias"):
                if int(rec["bias_len"]) != o:
                    raise ManifestError(f"{where}: bias_len != out_channels")
                bias = _take(blob, rec, "bias_offset", o, where)
                consumed += o
            bn = None
            if rec.get("has_bn"):
                if int(rec["bn_len"]) != o:
                    raise ManifestError(f"{where}: bn_len {rec['bn_len']} != out_channels {o}")
                bn = BatchNormParams(
                    _take(blob, rec, "bn_gamma_offset", o, where),
                    _take(blob, rec, "bn_beta_offset", o, where),
                    _take(blob, rec, "bn_mean_offset", o, where),
                    _take(blob, rec, "bn_var_offset", o, where),
                    float(rec["bn_eps"]))
                consumed += 4 * o
            blocks.append(LayerBlock(w, bias, int(rec["stride"]), int(rec["pad"]),
                                     bn, rec["activation"]))
            wbits.append(int(rec.get("wbits", 32)))
        elif kind == "maxpool":
            if not blocks or blocks[-1].pool is not None:
                raise ManifestError(f"{where}: maxpool must follow a conv record")
            blocks[-1].pool = "max"
        elif kind == "gap":
            if not blocks or blocks[-1].pool is not None:
                raise ManifestError(f"{where}: gap must follow a conv record")
            blocks[-1].pool = "gap"
        elif kind == "linear":
            if head is not None:
                raise ManifestError(f"{where}: duplicate linear head")
            o, i = int(rec["out_features"]), int(rec["in_features"])
            n = o * i
            if int(rec["weight_len"]) != n:
                raise ManifestError(f"{where}: weight_len {rec['weight_len']} != {o}x{i}={n}")
            w = _take(blob, rec, "weight_offset", n, where).reshape(o, i)
            consumed += n
            bias = None
            if rec.get("has_bias"):
                bias = _take(blob, rec, "bias_offset", o, where)
                consumed += o
            head = LinearHead(w, bias)
            wbits.append(int(rec.get("wbits", 32)))
        else:
            raise UnsupportedLayerError(f"{where}: unknown layer kind {kind!r}")
    if consumed != blob.size:
        raise ManifestError(
            f"weight blob holds {blob.size} floats but manifest consumes {consumed}")

    net = Network(blocks, head, tuple(manifest["input_shape"]),
                  wbits if any(b != 32 for b in wbits) else None)
    net.validate()
    return net


DATA_MANIFEST = "data.json"
DATA_BIN = "data.bin"
LABELS_BIN = "labels.bin"


def save_dataset(path: str, data: np.ndarray, labels: np.ndarray,
                 class_count: int, extra: dict | None = None) -> None:
    os.makedirs(path, exist_ok=True)
    data = np.ascontiguousarray(data, dtype=DTYPE)
    labels = np.ascontiguousarray(labels, dtype=np.uint32)
    if data.ndim != 4 or data.shape[0] != labels.shape[0]:
        raise ManifestError(
            f"data {data.shape} and labels {labels.shape} disagree on sample count")
    meta = {
        "count": int(data.shape[0]),
        "shape": [int(d) for d in data.shape[1:]],
        "class_count": int(class_count),
    }
    if extra:
        meta.update(extra)
    _dump_json(meta, os.path.join(path, DATA_MANIFEST))
    with open(os.path.join(path, DATA_BIN), "wb") as f:
        f.write(data.astype("<f4", copy=False).tobytes())
    with open(os.path.join(path, LABELS_BIN), "wb") as f:
        f.write(labels.astype("<u4", copy=False).tobytes())


def load_dataset(path: str) -> tuple[np.ndarray, np.ndarray, dict]:
    mpath = os.path.join(path, DATA_MANIFEST)
    if not os.path.exists(mpath):
        raise FileNotFoundError(f"missing dataset manifest {mpath}")
    with open(mpath) as f:
        meta = json.load(f)
    count = int(meta["count"])
    shape = tuple(int(d) for d in meta["shape"])
    data = np.fromfile(os.path.join(path, DATA_BIN), dtype="<f4")
    expected = count * int(np.prod(shape)) if count else 0
    if data.size != expected:
        raise ManifestError(f"data.bin holds {data.size} floats, expected {expected}")
    data = data.reshape((count,) + shape) if count else data.reshape((0,) + shape)
    labels = np.fromfile(os.path.join(path, LABELS_BIN), dtype="<u4")
    if labels.size != count:
        raise ManifestError(f"labels.bin holds {labels.size} labels, expected {count}")
    return data, labels, meta
