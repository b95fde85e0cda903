"""Binary container formats for features and model checkpoints.

Feature container (.ssnf), little-endian:

    magic "SSNF" | version u32 | n_samples u32 | C u32 | F u32 | T u32
    then per sample: label_id u32 followed by C*F*T float32, row-major

Normalizer sidecar, little-endian:

    C u32 | F u32 | mean C*F float64 | std C*F float64   (row-major)

Checkpoint (.ssnw), little-endian:

    magic "SSNW" | header_len u32 | header JSON (utf-8)
    then raw float32 tensor data in header["tensors"] order

The checkpoint header carries the model description (layer list, split
configuration, head flags) plus tensor names/shapes/dtypes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .features import BinNormalizer

FEATURE_MAGIC = b"SSNF"
CHECKPOINT_MAGIC = b"SSNW"
FEATURE_VERSION = 1
CHECKPOINT_VERSION = 1


class ContainerError(ValueError):
    """Raised for malformed feature/checkpoint containers."""


def write_features(path, features: np.ndarray, labels) -> None:
    """Write an (N, C, F, T) float32 feature tensor with u32 labels."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.uint32)
    if features.ndim != 4:
        raise ValueError(f"features must be (N, C, F, T), got {features.shape}")
    if labels.shape != (features.shape[0],):
        raise ValueError(f"{labels.shape[0]} labels for {features.shape[0]} samples")
    n, c, f, t = features.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<5I", FEATURE_VERSION, n, c, f, t))
        for i in range(n):
            fh.write(struct.pack("<I", int(labels[i])))
            fh.write(np.ascontiguousarray(features[i], dtype="<f4").tobytes())


def read_features(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a feature container; returns (features (N,C,F,T) f32, labels u32)."""
    blob = Path(path).read_bytes()
    if blob[:4] != FEATURE_MAGIC:
        raise ContainerError(f"{path}: bad magic {blob[:4]!r}")
    version, n, c, f, t = struct.unpack("<5I", blob[4:24])
    if version != FEATURE_VERSION:
        raise ContainerError(f"{path}: unsupported feature container version {version}")
    sample_bytes = 4 + c * f * t * 4
    if len(blob) != 24 + n * sample_bytes:
        raise ContainerError(f"{path}: size {len(blob)} does not match header")
    labels = np.empty(n, dtype=np.uint32)
    features = np.empty((n, c, f, t), dtype=np.float32)
    pos = 24
    for i in range(n):
        labels[i] = struct.unpack("<I", blob[pos : pos + 4])[0]
        pos += 4
        features[i] = np.frombuffer(blob, dtype="<f4", count=c * f * t, offset=pos).reshape(c, f, t)
        pos += c * f * t * 4
    return features, labels


def write_normalizer(path, norm: BinNormalizer) -> None:
    c, f = norm.mean.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<2I", c, f))
        fh.write(np.ascontiguousarray(norm.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(norm.std, dtype="<f8").tobytes())


def read_normalizer(path) -> BinNormalizer:
    blob = Path(path).read_bytes()
    c, f = struct.unpack("<2I", blob[:8])
    if len(blob) != 8 + 2 * c * f * 8:
        raise ContainerError(f"{path}: normalizer size does not match header ({c}x{f})")
    mean = np.frombuffer(blob, dtype="<f8", count=c * f, offset=8).reshape(c, f)
    std = np.frombuffer(blob, dtype="<f8", count=c * f, offset=8 + c * f * 8).reshape(c, f)
    return BinNormalizer(mean=mean.copy(), std=std.copy())


def write_class_names(path, names) -> None:
    with open(path, "w") as fh:
        for i, name in enumerate(names):
            fh.write(f"{i}\t{name}\n")


def read_class_names(path) -> list[str]:
    names = []
    with open(path) as fh:
        for line in fh:
            idx, name = line.rstrip("\n").split("\t")
            if int(idx) != len(names):
                raise ContainerError(f"{path}: class ids not contiguous")
            names.append(name)
    return names


def write_checkpoint(path, model_desc: dict, tensors, meta: dict | None = None) -> None:
    """Write named tensors after a JSON header.

    tensors: iterable of (name, kind, array) with kind in {param, buffer}.
    All tensor data is stored as little-endian float32.
    """
    entries = []
    blobs = []
    for name, kind, array in tensors:
        array = np.asarray(array, dtype="<f4")
        entries.append({"name": name, "kind": kind, "shape": list(array.shape), "dtype": "float32"})
        blobs.append(np.ascontiguousarray(array).tobytes())
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model": model_desc,
        "tensors": entries,
    }
    if meta:
        header["meta"] = meta
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def read_checkpoint(path) -> tuple[dict, dict, dict]:
    """Read a checkpoint; returns (model_desc, {name: array}, meta)."""
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ContainerError(f"{path}: bad magic {blob[:4]!r}")
    header_len = struct.unpack("<I", blob[4:8])[0]
    header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ContainerError(f"{path}: unsupported checkpoint version")
    pos = 8 + header_len
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
        pos += count * 4
    if pos != len(blob):
        raise ContainerError(f"{path}: trailing bytes after tensor data")
    return header["model"], tensors, header.get("meta", {})
