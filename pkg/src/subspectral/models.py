"""Model builders: band-split network, its global head, and the baseline CNN.

The band-split model crops the input spectrogram into overlapping
horizontal bands, runs one small CNN ("sub-classifier") per band, and
feeds the concatenated 32-unit band features into a dense global head.
Every sub-classifier keeps its own softmax output so each band learns to
classify on its own; all heads are trained simultaneously by summing
their cross-entropies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import storage
from .nn import functional as F
from .nn.layers import (
    BatchNorm2d,
    Conv2dSame,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    Parameter,
    ReLU,
    Sequential,
    Softmax,
)
from .nn.optim import ParamStore
from .seeding import STREAM_INIT, philox_rng

N_CLASSES = 10
FEATURE_WIDTH = 32  # per-band feature size feeding the global head
DEFAULT_TIME_POOL = 100


@dataclass(frozen=True)
class SubSpectralConfig:
    """Band-splitting geometry.

    mel_bins: input height F; sub_size: crop height X; hop_size: vertical
    hop Y. The derived crop_count is floor(1 + (F - X) / Y). sub_size must
    be a multiple of 10 because the first pooling stage is (X/10, 5).
    """

    mel_bins: int
    sub_size: int
    hop_size: int

    def __post_init__(self):
        if not 1 <= self.sub_size <= self.mel_bins:
            raise ValueError(f"sub_size {self.sub_size} must lie in [1, {self.mel_bins}]")
        if self.hop_size < 1:
            raise ValueError("hop_size must be >= 1")
        if self.sub_size % 10 != 0:
            raise ValueError(f"sub_size {self.sub_size} must be divisible by 10 (first pool is sub_size/10)")
        if self.crop_count < 1:
            raise ValueError("configuration yields zero crops")

    @property
    def crop_count(self) -> int:
        return int(math.floor(1 + (self.mel_bins - self.sub_size) / self.hop_size))

    def crop_ranges(self) -> list[tuple[int, int]]:
        return [(m * self.hop_size, m * self.hop_size + self.sub_size) for m in range(self.crop_count)]


def split_subspectrograms(x: np.ndarray, cfg: SubSpectralConfig) -> list[np.ndarray]:
    """Horizontal crops of a (N, C, F, T) batch, one per band."""
    if x.shape[2] != cfg.mel_bins:
        raise ValueError(f"input has {x.shape[2]} mel bins, config expects {cfg.mel_bins}")
    return [x[:, :, lo:hi, :] for lo, hi in cfg.crop_ranges()]


def global_head_widths(crop_count: int, head_compat: bool = False) -> list[int]:
    """Hidden-layer widths for the global head.

    Printed sizing rule: H = max(floor(log2(M)) - 1, 0) hidden layers of
    width 2^(6 + H - i). head_compat bumps H to at least 1 for M >= 2,
    which is the sizing that matches the published 331K parameter total
    for M = 3 (the printed rule gives H = 0 there).
    """
    if crop_count < 1:
        raise ValueError("crop_count must be >= 1")
    hidden = max(int(math.floor(math.log2(crop_count))) - 1, 0)
    if head_compat and crop_count >= 2:
        hidden = max(hidden, 1)
    return [2 ** (6 + hidden - i) for i in range(1, hidden + 1)]


@dataclass
class GlobalHeadSpec:
    hidden_widths: list[int] = field(default_factory=list)

    @classmethod
    def from_crop_count(cls, crop_count: int, head_compat: bool = False) -> "GlobalHeadSpec":
        return cls(hidden_widths=global_head_widths(crop_count, head_compat))


def _check_pool(name: str, value: int, available: int, what: str):
    if value > available:
        raise ValueError(f"{name}: pool size {value} exceeds available {what} extent {available}")


def build_subclassifier(
    sub_size: int,
    frames: int,
    channels: int,
    *,
    n_classes: int = N_CLASSES,
    time_pool: int = DEFAULT_TIME_POOL,
    dropout: float = 0.3,
    rng=None,
    dtype=np.float32,
    prefix: str = "sub",
) -> tuple[Sequential, Sequential]:
    """One band CNN: trunk ending at the 32-unit band features, plus its
    softmax head.

    Stack: conv(32, 7x7, same) -> BN -> ReLU -> pool(sub_size/10, 5) ->
    dropout -> conv(64, 7x7, same) -> BN -> ReLU -> pool(4, time_pool) ->
    dropout -> flatten -> dense(32) -> ReLU -> dropout, then
    dense(n_classes) -> softmax as the head.
    """
    if sub_size % 10 != 0:
        raise ValueError(f"{prefix}: sub_size {sub_size} not divisible by 10")
    rng = rng or philox_rng(0, STREAM_INIT)
    pool1 = (sub_size // 10, 5)
    _check_pool(prefix, pool1[1], frames, "time")
    freq1, time1 = sub_size // pool1[0], frames // pool1[1]
    pool2 = (4, time_pool)
    _check_pool(prefix, pool2[0], freq1, "frequency")
    _check_pool(prefix, pool2[1], time1, "time")
    freq2, time2 = freq1 // pool2[0], time1 // pool2[1]
    flat = 64 * freq2 * time2

    trunk = Sequential(
        [
            Conv2dSame(channels, 32, 7, 7, rng=rng, dtype=dtype, name=f"{prefix}.conv1"),
            BatchNorm2d(32, dtype=dtype, name=f"{prefix}.bn1"),
            ReLU(name=f"{prefix}.relu1"),
            MaxPool2d(*pool1, name=f"{prefix}.pool1"),
            Dropout(dropout, name=f"{prefix}.drop1"),
            Conv2dSame(32, 64, 7, 7, rng=rng, dtype=dtype, name=f"{prefix}.conv2"),
            BatchNorm2d(64, dtype=dtype, name=f"{prefix}.bn2"),
            ReLU(name=f"{prefix}.relu2"),
            MaxPool2d(*pool2, name=f"{prefix}.pool2"),
            Dropout(dropout, name=f"{prefix}.drop2"),
            Flatten(name=f"{prefix}.flatten"),
            Dense(flat, FEATURE_WIDTH, rng=rng, dtype=dtype, name=f"{prefix}.dense1"),
            ReLU(name=f"{prefix}.relu3"),
            Dropout(dropout, name=f"{prefix}.drop3"),
        ]
    )
    head = Sequential(
        [
            Dense(FEATURE_WIDTH, n_classes, rng=rng, dtype=dtype, name=f"{prefix}.head"),
            Softmax(name=f"{prefix}.softmax"),
        ]
    )
    return trunk, head


def build_global_head(
    crop_count: int,
    *,
    n_classes: int = N_CLASSES,
    head_compat: bool = False,
    rng=None,
    dtype=np.float32,
    prefix: str = "global",
) -> Sequential:
    """Dense stack over the concatenated band features (width 32*M)."""
    rng = rng or philox_rng(0, STREAM_INIT)
    width = FEATURE_WIDTH * crop_count
    layers = []
    for i, hidden in enumerate(global_head_widths(crop_count, head_compat), start=1):
        layers.append(Dense(width, hidden, rng=rng, dtype=dtype, name=f"{prefix}.dense{i}"))
        layers.append(ReLU(name=f"{prefix}.relu{i}"))
        width = hidden
    layers.append(Dense(width, n_classes, rng=rng, dtype=dtype, name=f"{prefix}.out"))
    layers.append(Softmax(name=f"{prefix}.softmax"))
    return Sequential(layers)


class ModelGraph:
    """Built network with one or more softmax heads.

    kind is "baseline" (single stack, head "global") or "subspectralnet"
    (M band trunks with optional per-band heads "sub0".."subM-1" plus the
    concatenated "global" head).
    """

    def __init__(self, kind: str, desc: dict):
        self.kind = kind
        self.desc = desc
        self.stack: Sequential | None = None
        self.cfg: SubSpectralConfig | None = None
        self.trunks: list[Sequential] = []
        self.sub_heads: list[Sequential] = []
        self.global_head: Sequential | None = None
        self._features: list[np.ndarray] | None = None
        self._input_shape = None

    # -- structure ----------------------------------------------------

    def head_names(self) -> list[str]:
        if self.kind == "baseline":
            return ["global"]
        names = ["global"]
        if self.sub_heads:
            names += [f"sub{i}" for i in range(len(self.trunks))]
        return names

    def band_ranges(self) -> dict[str, tuple[int, int]]:
        if self.kind == "baseline" or self.cfg is None:
            return {}
        return {f"sub{i}": r for i, r in enumerate(self.cfg.crop_ranges())}

    def _sequentials(self) -> list[Sequential]:
        if self.kind == "baseline":
            return [self.stack]
        return self.trunks + self.sub_heads + ([self.global_head] if self.global_head else [])

    def parameters(self) -> list[Parameter]:
        return [p for seq in self._sequentials() for p in seq.params()]

    def buffers(self):
        return [b for seq in self._sequentials() for b in seq.buffers()]

    def param_store(self) -> ParamStore:
        return ParamStore(self.parameters())

    def set_dropout_rng(self, rng) -> None:
        for seq in self._sequentials():
            for layer in seq.layers:
                if isinstance(layer, Dropout):
                    layer.rng = rng

    # -- compute ------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False) -> dict[str, np.ndarray]:
        self._input_shape = x.shape
        if self.kind == "baseline":
            return {"global": self.stack.forward(x, train)}
        crops = split_subspectrograms(x, self.cfg)
        self._features = [trunk.forward(crop, train) for trunk, crop in zip(self.trunks, crops)]
        out = {"global": self.global_head.forward(F.concat(self._features), train)}
        for i, head in enumerate(self.sub_heads):
            out[f"sub{i}"] = head.forward(self._features[i], train)
        return out

    def backward(self, dprobs: dict[str, np.ndarray], input_grad: bool = False):
        """Backpropagate head gradients into parameter .grad fields.

        Heads absent from dprobs contribute nothing, so their private
        parameters keep whatever is already in .grad (zero after
        zero_grad). Band trunks accumulate from both their own head and
        the global head. The gradient w.r.t. the input spectrogram is
        only materialized (and returned) when input_grad is True; training
        never needs it.
        """
        if self.kind == "baseline":
            return self.stack.backward(dprobs["global"], input_grad=input_grad)
        widths = [f.shape[1] for f in self._features]
        if "global" in dprobs:
            dfeats = [np.array(d) for d in F.split_widths(self.global_head.backward(dprobs["global"]), widths)]
        else:
            dfeats = [np.zeros_like(f) for f in self._features]
        for i, head in enumerate(self.sub_heads):
            key = f"sub{i}"
            if key in dprobs:
                dfeats[i] += head.backward(dprobs[key])
        dx = np.zeros(self._input_shape, dtype=dfeats[0].dtype) if input_grad else None
        for trunk, (lo, hi), dfeat in zip(self.trunks, self.cfg.crop_ranges(), dfeats):
            dcrop = trunk.backward(dfeat, input_grad=input_grad)
            if input_grad:
                dx[:, :, lo:hi, :] += dcrop
        return dx

    # -- reporting ----------------------------------------------------

    def layer_table(self) -> list[dict]:
        rows = []
        for seq in self._sequentials():
            for layer in seq.layers:
                n = sum(p.size for p in layer.params())
                if n or layer.params():
                    rows.append({"name": layer.name, "kind": layer.kind, "params": n})
        return rows

    def describe(self) -> dict:
        layers = [layer.spec() for seq in self._sequentials() for layer in seq.layers]
        return dict(self.desc, layers=layers)

    # -- persistence ----------------------------------------------------

    def save(self, path, meta: dict | None = None) -> None:
        tensors = [(p.name, "param", p.data) for p in self.parameters()]
        tensors += [(name, "buffer", value) for name, value in self.buffers()]
        storage.write_checkpoint(path, self.describe(), tensors, meta=meta)


def count_params(graph: ModelGraph) -> int:
    """Trainable parameter total (BN gamma/beta included, running stats not)."""
    return sum(p.size for p in graph.parameters())


def multi_head_loss(head_probs: dict[str, np.ndarray], labels: np.ndarray, heads=None):
    """Unweighted sum of per-head cross-entropies and its head gradients.

    heads selects which outputs contribute (default: all), so sub-head
    losses can be switched off while the heads stay in the graph.
    """
    if heads is None:
        heads = list(head_probs)
    loss = 0.0
    dprobs = {}
    for name in heads:
        probs = head_probs[name]
        loss += F.cross_entropy(probs, labels)
        dprobs[name] = F.cross_entropy_backward(probs, labels)
    return loss, dprobs


def build_subspectralnet(
    cfg: SubSpectralConfig,
    frames: int,
    channels: int,
    *,
    n_classes: int = N_CLASSES,
    head_compat: bool = False,
    include_sub_heads: bool = True,
    time_pool: int | None = None,
    dropout: float = 0.3,
    seed: int = 0,
    dtype=np.float32,
    class_names=None,
) -> ModelGraph:
    """Band-split network: M sub-classifiers plus the global head.

    include_sub_heads=False drops the per-band softmax layers from the
    graph entirely (the "global head only" variant, ~990 fewer parameters
    for M = 3).
    """
    if time_pool is None:
        time_pool = min(DEFAULT_TIME_POOL, frames // 5)
    desc = {
        "kind": "subspectralnet",
        "n_classes": n_classes,
        "channels": channels,
        "frames": frames,
        "mel_bins": cfg.mel_bins,
        "sub_size": cfg.sub_size,
        "hop_size": cfg.hop_size,
        "head_compat": head_compat,
        "include_sub_heads": include_sub_heads,
        "time_pool": time_pool,
        "dropout": dropout,
        "class_names": list(class_names) if class_names else None,
    }
    graph = ModelGraph("subspectralnet", desc)
    graph.cfg = cfg
    rng = philox_rng(seed, STREAM_INIT)
    for m in range(cfg.crop_count):
        trunk, head = build_subclassifier(
            cfg.sub_size,
            frames,
            channels,
            n_classes=n_classes,
            time_pool=time_pool,
            dropout=dropout,
            rng=rng,
            dtype=dtype,
            prefix=f"sub{m}",
        )
        graph.trunks.append(trunk)
        if include_sub_heads:
            graph.sub_heads.append(head)
    graph.global_head = build_global_head(
        cfg.crop_count, n_classes=n_classes, head_compat=head_compat, rng=rng, dtype=dtype
    )
    return graph


def build_baseline(
    mel_bins: int,
    frames: int,
    channels: int,
    *,
    n_classes: int = N_CLASSES,
    width_multiplier: int = 1,
    time_pool: int | None = None,
    dropout: float = 0.3,
    seed: int = 0,
    dtype=np.float32,
    class_names=None,
) -> ModelGraph:
    """Reference CNN: two 7x7 conv blocks with (5,5) and (4,time_pool)
    pooling, a 100-unit dense layer, and one softmax output.

    width_multiplier scales both conv widths (2 doubles them to 64/128).
    """
    if time_pool is None:
        time_pool = min(DEFAULT_TIME_POOL, frames // 5)
    if mel_bins % 5 != 0 or (mel_bins // 5) % 4 != 0:
        raise ValueError(f"mel_bins {mel_bins} must divide by 5 and then by 4 for the pooling stack")
    w1, w2 = 32 * width_multiplier, 64 * width_multiplier
    freq1, time1 = mel_bins // 5, frames // 5
    _check_pool("baseline", 5, frames, "time")
    _check_pool("baseline", time_pool, time1, "time")
    freq2, time2 = freq1 // 4, time1 // time_pool
    flat = w2 * freq2 * time2

    rng = philox_rng(seed, STREAM_INIT)
    desc = {
        "kind": "baseline",
        "n_classes": n_classes,
        "channels": channels,
        "frames": frames,
        "mel_bins": mel_bins,
        "width_multiplier": width_multiplier,
        "time_pool": time_pool,
        "dropout": dropout,
        "class_names": list(class_names) if class_names else None,
    }
    graph = ModelGraph("baseline", desc)
    graph.stack = Sequential(
        [
            Conv2dSame(channels, w1, 7, 7, rng=rng, dtype=dtype, name="base.conv1"),
            BatchNorm2d(w1, dtype=dtype, name="base.bn1"),
            ReLU(name="base.relu1"),
            MaxPool2d(5, 5, name="base.pool1"),
            Dropout(dropout, name="base.drop1"),
            Conv2dSame(w1, w2, 7, 7, rng=rng, dtype=dtype, name="base.conv2"),
            BatchNorm2d(w2, dtype=dtype, name="base.bn2"),
            ReLU(name="base.relu2"),
            MaxPool2d(4, time_pool, name="base.pool2"),
            Dropout(dropout, name="base.drop2"),
            Flatten(name="base.flatten"),
            Dense(flat, 100, rng=rng, dtype=dtype, name="base.dense1"),
            ReLU(name="base.relu3"),
            Dropout(dropout, name="base.drop3"),
            Dense(100, n_classes, rng=rng, dtype=dtype, name="base.dense2"),
            Softmax(name="base.softmax"),
        ]
    )
    return graph


def build_from_description(desc: dict, dtype=np.float32) -> ModelGraph:
    """Reconstruct an untrained graph matching a checkpoint header."""
    if desc["kind"] == "baseline":
        return build_baseline(
            desc["mel_bins"],
            desc["frames"],
            desc["channels"],
            n_classes=desc["n_classes"],
            width_multiplier=desc["width_multiplier"],
            time_pool=desc["time_pool"],
            dropout=desc.get("dropout", 0.3),
            dtype=dtype,
            class_names=desc.get("class_names"),
        )
    if desc["kind"] == "subspectralnet":
        cfg = SubSpectralConfig(desc["mel_bins"], desc["sub_size"], desc["hop_size"])
        return build_subspectralnet(
            cfg,
            desc["frames"],
            desc["channels"],
            n_classes=desc["n_classes"],
            head_compat=desc["head_compat"],
            include_sub_heads=desc["include_sub_heads"],
            time_pool=desc["time_pool"],
            dropout=desc.get("dropout", 0.3),
            dtype=dtype,
            class_names=desc.get("class_names"),
        )
    raise ValueError(f"unknown model kind {desc['kind']!r}")


def load_model(path, dtype=np.float32) -> tuple[ModelGraph, dict]:
    """Rebuild a graph from a checkpoint and load its tensors. Returns
    (graph, meta)."""
    desc, tensors, meta = storage.read_checkpoint(path)
    graph = build_from_description(desc, dtype=dtype)
    by_name = {p.name: p for p in graph.parameters()}
    buffer_layers = {name: None for name, _ in graph.buffers()}
    for seq in graph._sequentials():
        for layer in seq.layers:
            for name, _ in layer.buffers():
                buffer_layers[name] = layer
    for name, value in tensors.items():
        if name in by_name:
            param = by_name[name]
            if tuple(value.shape) != param.data.shape:
                raise ValueError(f"checkpoint tensor {name} has shape {value.shape}, expected {param.data.shape}")
            param.data[...] = value.astype(param.data.dtype)
        elif name in buffer_layers and buffer_layers[name] is not None:
            buffer_layers[name].load_buffer(name, value)
        else:
            raise ValueError(f"checkpoint tensor {name} not present in rebuilt model")
    return graph, meta
