"""The three classifier architectures, built from declarative configs.

All models emit a single logit; the condition-class probability is its
sigmoid. Time-domain models consume [batch, 17, length] arrays, the
frequency-domain MLP consumes flattened [batch, 442] band-power rows.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .seeding import substream

CHECKPOINT_MAGIC = b"MDL1"


@dataclass(frozen=True)
class MlpConfig:
    """Feed-forward net on flattened spectral features."""

    hidden: tuple[int, ...] = (256, 256, 128, 128)
    input_dim: int = 442

    kind = "mlp"

    def validate(self):
        if any(w < 1 for w in self.hidden):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden}")

    def to_dict(self):
        return {"kind": self.kind, "hidden": list(self.hidden),
                "input_dim": self.input_dim}


@dataclass(frozen=True)
class CnnConfig:
    """1-D convolutional stack on raw contigs.

    Each conv layer is (filters, kernel, relu, batchnorm, maxpool) with 0/1
    switches; the flatten dimension is computed from the actual shapes.
    """

    conv_layers: tuple[tuple[int, int, int, int, int], ...] = (
        (32, 50, 1, 1, 1), (64, 50, 1, 1, 1), (128, 50, 1, 1, 1), (4, 8, 1, 1, 0),
    )
    hidden: int = 24
    input_channels: int = 17
    input_len: int = 200

    kind = "cnn"

    def validate(self):
        if not self.conv_layers:
            raise ValueError("need at least one conv layer")
        length = self.input_len
        for i, (filters, kernel, _, _, pool) in enumerate(self.conv_layers):
            if filters < 1 or kernel < 1:
                raise ValueError(f"conv layer {i}: bad (filters, kernel)")
            if kernel > length:
                raise ValueError(
                    f"conv layer {i}: kernel {kernel} exceeds remaining "
                    f"sequence length {length}"
                )
            if pool:
                length //= 2
        if length < 1:
            raise ValueError("sequence fully pooled away")

    def flatten_dim(self) -> int:
        length = self.input_len
        channels = self.input_channels
        for filters, _, _, _, pool in self.conv_layers:
            channels = filters
            if pool:
                length //= 2
        return channels * length

    def to_dict(self):
        return {"kind": self.kind,
                "conv_layers": [list(l) for l in self.conv_layers],
                "hidden": self.hidden, "input_channels": self.input_channels,
                "input_len": self.input_len}


@dataclass(frozen=True)
class TransformerConfig:
    """Encoder stack on raw contigs, mean-pooled over time."""

    heads: int = 4
    layers: int = 4
    ff_dim: int = 256
    d_model: int = 24
    input_channels: int = 17

    kind = "transformer"

    def validate(self):
        if self.d_model % self.heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by {self.heads} heads"
            )
        if min(self.heads, self.layers, self.ff_dim, self.d_model) < 1:
            raise ValueError("all transformer dimensions must be >= 1")

    def to_dict(self):
        return {"kind": self.kind, "heads": self.heads, "layers": self.layers,
                "ff_dim": self.ff_dim, "d_model": self.d_model,
                "input_channels": self.input_channels}


ModelConfig = MlpConfig | CnnConfig | TransformerConfig


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "mlp":
        return MlpConfig(hidden=tuple(d["hidden"]), input_dim=d["input_dim"])
    if kind == "cnn":
        return CnnConfig(conv_layers=tuple(tuple(l) for l in d["conv_layers"]),
                         hidden=d["hidden"], input_channels=d["input_channels"],
                         input_len=d["input_len"])
    if kind == "transformer":
        return TransformerConfig(heads=d["heads"], layers=d["layers"],
                                 ff_dim=d["ff_dim"], d_model=d["d_model"],
                                 input_channels=d["input_channels"])
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(eq=False)
class Model:
    """A built network plus its config and free-form metadata (e.g. the
    training normalization statistics embedded at checkpoint time).
    """

    config: ModelConfig
    net: ad.Sequential
    dtype: np.dtype
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def domain(self) -> str:
        return "frequency" if self.kind == "mlp" else "time"

    def params(self) -> list[ad.Tensor]:
        return self.net.params()

    def buffers(self) -> list[ad.Tensor]:
        return self.net.buffers()

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Logits [batch] for a batch of model-domain inputs."""
        x = np.ascontiguousarray(x, dtype=self.dtype)
        return self.net.forward(x, train)[:, 0]

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        return self.net.backward(np.asarray(dlogits, dtype=self.dtype)[:, None])

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Deterministically construct and initialize a model."""
    config.validate()
    rng = substream(seed, "init", config.kind)
    if isinstance(config, MlpConfig):
        net = _build_mlp(config, rng, dtype)
    elif isinstance(config, CnnConfig):
        net = _build_cnn(config, rng, dtype)
    elif isinstance(config, TransformerConfig):
        net = _build_transformer(config, rng, dtype)
    else:
        raise TypeError(f"unsupported config type {type(config)}")
    return Model(config=config, net=net, dtype=np.dtype(dtype))


def _build_mlp(cfg: MlpConfig, rng, dtype) -> ad.Sequential:
    layers: list[ad.Layer] = []
    width = cfg.input_dim
    for h in cfg.hidden:
        layers.append(ad.Dense(width, h, rng, dtype))
        layers.append(ad.Relu())
        width = h
    layers.append(ad.Dense(width, 1, rng, dtype))
    return ad.Sequential(layers)


def _build_cnn(cfg: CnnConfig, rng, dtype) -> ad.Sequential:
    layers: list[ad.Layer] = []
    channels = cfg.input_channels
    for filters, kernel, relu, batchnorm, pool in cfg.conv_layers:
        layers.append(ad.Conv1d(channels, filters, kernel, rng, dtype))
        if relu:
            layers.append(ad.Relu())
        if batchnorm:
            layers.append(ad.BatchNorm1d(filters, dtype))
        if pool:
            layers.append(ad.MaxPool1d())
        channels = filters
    layers.append(ad.Flatten())
    layers.append(ad.Dense(cfg.flatten_dim(), cfg.hidden, rng, dtype))
    layers.append(ad.Relu())
    layers.append(ad.Dense(cfg.hidden, 1, rng, dtype))
    return ad.Sequential(layers)


def _build_transformer(cfg: TransformerConfig, rng, dtype) -> ad.Sequential:
    layers: list[ad.Layer] = [
        ad.TransposeToTimeMajor(),
        ad.TimeDistributedDense(cfg.input_channels, cfg.d_model, rng, dtype),
        ad.PositionalEncoding(cfg.d_model, dtype=dtype),
    ]
    for _ in range(cfg.layers):
        layers.append(ad.TransformerEncoderBlock(
            cfg.d_model, cfg.heads, cfg.ff_dim, rng, dtype
        ))
    layers.append(ad.MeanPoolTime())
    layers.append(ad.Dense(cfg.d_model, 1, rng, dtype))
    return ad.Sequential(layers)


def param_count(model: Model) -> int:
    """Exact number of trainable scalars."""
    return sum(p.size for p in model.params())


def predict_proba(model: Model, batch: np.ndarray) -> np.ndarray:
    """Condition-class probabilities, batchnorm in inference mode.

    Probabilities are clipped away from exactly 0 and 1.
    """
    logits = model.forward(batch, train=False).astype(np.float64)
    p = ad.sigmoid(logits)
    return np.clip(p, 1e-7, 1.0 - 1e-7)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_model(model: Model, path) -> None:
    """Write an ``MDL1`` checkpoint: JSON header (architecture tag, config
    echo, metadata) followed by shape-prefixed float32 parameter and buffer
    blocks.
    """
    params = [p.data for p in model.params()]
    buffers = [b.data for b in model.buffers()]
    header = {
        "arch": model.kind,
        "config": model.config.to_dict(),
        "meta": model.meta,
        "n_params": len(params),
        "n_buffers": len(buffers),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        ad.write_tensor_blocks(fh, params)
        ad.write_tensor_blocks(fh, buffers)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        model = build_model(config_from_dict(header["config"]))
        model.meta = header.get("meta", {})
        params = ad.read_tensor_blocks(fh, header["n_params"])
        buffers = ad.read_tensor_blocks(fh, header["n_buffers"])
    for tensor, arr in zip(model.params(), params):
        if tensor.data.shape != arr.shape:
            raise ValueError(
                f"{path}: checkpoint param {arr.shape} vs model {tensor.data.shape}"
            )
        tensor.data = arr.astype(model.dtype)
    for tensor, arr in zip(model.buffers(), buffers):
        tensor.data = arr.astype(model.dtype)
    return model
