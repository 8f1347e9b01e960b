"""Minimal reverse-mode differentiation core.

Each layer implements ``forward(x, train)`` and ``backward(dy)``; backward
consumes the activations cached by the immediately preceding forward and
returns the input gradient while accumulating parameter gradients on its
:class:`Tensor` objects. Everything is plain numpy; dtype is chosen at
construction (float32 for training/inference, float64 for gradient checks).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np


class ShapeError(Exception):
    pass


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise ShapeError(message)


class Tensor:
    """A parameter: value array plus an optional accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def accumulate(self, g: np.ndarray) -> None:
        _expect(g.shape == self.data.shape,
                f"gradient shape {g.shape} != parameter shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None


def kaiming_uniform(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer. Subclasses cache forward activations for backward."""

    def params(self) -> list[Tensor]:
        return []

    def buffers(self) -> list[Tensor]:
        """Non-trainable state saved in checkpoints (e.g. running stats)."""
        return []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Tensor(kaiming_uniform(rng, n_in, (n_in, n_out), dtype))
        self.bias = Tensor(np.zeros(n_out, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False):
        _expect(x.ndim == 2 and x.shape[1] == self.n_in,
                f"dense expects [batch, {self.n_in}], got {x.shape}")
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, dy):
        self.weight.accumulate(self._x.T @ dy)
        self.bias.accumulate(dy.sum(axis=0))
        return dy @ self.weight.data.T


class Relu(Layer):
    def forward(self, x, train=False):
        self._pos = x > 0
        return np.where(self._pos, x, 0.0)

    def backward(self, dy):
        return np.where(self._pos, dy, 0.0)


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Conv1d(Layer):
    """1-D convolution with same padding over [batch, channels, length].

    Even kernels pad one sample more on the right so the output length
    always equals the input length.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        fan_in = c_in * kernel
        self.weight = Tensor(kaiming_uniform(rng, fan_in, (c_out, c_in, kernel), dtype))
        self.bias = Tensor(np.zeros(c_out, dtype=dtype))
        self._pad_left = (kernel - 1) // 2
        self._pad_right = kernel - 1 - self._pad_left

    def params(self):
        return [self.weight, self.bias]

    def _im2col(self, x_padded: np.ndarray, length: int) -> np.ndarray:
        batch, c_in, _ = x_padded.shape
        k = self.kernel
        s0, s1, s2 = x_padded.strides
        view = np.lib.stride_tricks.as_strided(
            x_padded, shape=(batch, c_in, length, k), strides=(s0, s1, s2, s2),
            writeable=False,
        )
        # [batch, length, c_in * k], contiguous for the matmul
        return view.transpose(0, 2, 1, 3).reshape(batch, length, c_in * k)

    def forward(self, x, train=False):
        _expect(x.ndim == 3 and x.shape[1] == self.c_in,
                f"conv1d expects [batch, {self.c_in}, L], got {x.shape}")
        _expect(x.shape[2] >= 1, f"empty sequence in {x.shape}")
        batch, _, length = x.shape
        x_padded = np.pad(x, ((0, 0), (0, 0), (self._pad_left, self._pad_right)))
        cols = self._im2col(x_padded, length)
        self._cols = cols
        self._length = length
        w_flat = self.weight.data.reshape(self.c_out, -1)
        y = cols @ w_flat.T + self.bias.data
        return y.transpose(0, 2, 1)  # [batch, c_out, length]

    def backward(self, dy):
        batch, _, length = dy.shape
        dy_rows = dy.transpose(0, 2, 1).reshape(batch * length, self.c_out)
        cols = self._cols.reshape(batch * length, -1)
        self.weight.accumulate(
            (dy_rows.T @ cols).reshape(self.weight.data.shape)
        )
        self.bias.accumulate(dy_rows.sum(axis=0))
        w_flat = self.weight.data.reshape(self.c_out, -1)
        dcols = (dy_rows @ w_flat).reshape(batch, length, self.c_in, self.kernel)
        dx_padded = np.zeros(
            (batch, self.c_in, length + self.kernel - 1), dtype=dy.dtype
        )
        for j in range(self.kernel):
            dx_padded[:, :, j:j + length] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dx_padded[:, :, self._pad_left:self._pad_left + length]


class MaxPool1d(Layer):
    """Width-2, stride-2 max pooling; an odd trailing sample is dropped."""

    def forward(self, x, train=False):
        _expect(x.ndim == 3, f"maxpool expects [batch, channels, L], got {x.shape}")
        _expect(x.shape[2] >= 2, f"sequence too short to pool: {x.shape}")
        length = (x.shape[2] // 2) * 2
        pairs = x[:, :, :length].reshape(x.shape[0], x.shape[1], length // 2, 2)
        self._argmax = pairs.argmax(axis=3)
        self._in_length = x.shape[2]
        return pairs.max(axis=3)

    def backward(self, dy):
        batch, channels, half = dy.shape
        dx = np.zeros((batch, channels, self._in_length), dtype=dy.dtype)
        pair_view = dx[:, :, :half * 2].reshape(batch, channels, half, 2)
        np.put_along_axis(pair_view, self._argmax[..., None], dy[..., None], axis=3)
        return dx


class BatchNorm1d(Layer):
    """Per-channel batch normalization over [batch, channels, length].

    Training normalizes with batch statistics and updates running
    statistics (momentum 0.9); evaluation uses the running statistics,
    making inference independent of batch composition.
    """

    def __init__(self, channels: int, dtype=np.float32,
                 momentum: float = 0.9, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype))
        self.beta = Tensor(np.zeros(channels, dtype=dtype))
        self.running_mean = Tensor(np.zeros(channels, dtype=dtype))
        self.running_var = Tensor(np.ones(channels, dtype=dtype))

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x, train=False):
        _expect(x.ndim == 3 and x.shape[1] == self.channels,
                f"batchnorm expects [batch, {self.channels}, L], got {x.shape}")
        self._train = train
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.running_mean.data = (
                self.momentum * self.running_mean.data
                + (1.0 - self.momentum) * mean
            ).astype(x.dtype)
            self.running_var.data = (
                self.momentum * self.running_var.data
                + (1.0 - self.momentum) * var
            ).astype(x.dtype)
        else:
            mean = self.running_mean.data
            var = self.running_var.data
        self._inv_std = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mean[None, :, None]) * self._inv_std[None, :, None]
        return self.gamma.data[None, :, None] * self._xhat + self.beta.data[None, :, None]

    def backward(self, dy):
        xhat = self._xhat
        self.gamma.accumulate((dy * xhat).sum(axis=(0, 2)))
        self.beta.accumulate(dy.sum(axis=(0, 2)))
        dxhat = dy * self.gamma.data[None, :, None]
        inv_std = self._inv_std[None, :, None]
        if not self._train:
            return dxhat * inv_std
        n = dy.shape[0] * dy.shape[2]
        sum_dxhat = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        return (inv_std / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class LayerNorm(Layer):
    """Normalization over the trailing feature axis of [batch, time, dim]."""

    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        self.dim = dim
        self.eps = eps
        self.gamma = Tensor(np.ones(dim, dtype=dtype))
        self.beta = Tensor(np.zeros(dim, dtype=dtype))

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train=False):
        _expect(x.shape[-1] == self.dim,
                f"layernorm expects trailing dim {self.dim}, got {x.shape}")
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self._inv_std = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mean) * self._inv_std
        return self.gamma.data * self._xhat + self.beta.data

    def backward(self, dy):
        xhat = self._xhat
        axes = tuple(range(dy.ndim - 1))
        self.gamma.accumulate((dy * xhat).sum(axis=axes))
        self.beta.accumulate(dy.sum(axis=axes))
        dxhat = dy * self.gamma.data
        n = self.dim
        mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return self._inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


class Softmax(Layer):
    """Softmax over the trailing axis."""

    def forward(self, x, train=False):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        self._y = e / e.sum(axis=-1, keepdims=True)
        return self._y

    def backward(self, dy):
        y = self._y
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


class MultiHeadAttention(Layer):
    """Scaled dot-product self-attention over [batch, time, dim]."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 dtype=np.float32):
        if dim % heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.w_q = Dense(dim, dim, rng, dtype)
        self.w_k = Dense(dim, dim, rng, dtype)
        self.w_v = Dense(dim, dim, rng, dtype)
        self.w_o = Dense(dim, dim, rng, dtype)
        self._softmax = Softmax()

    def params(self):
        return (self.w_q.params() + self.w_k.params()
                + self.w_v.params() + self.w_o.params())

    def _split(self, x: np.ndarray) -> np.ndarray:
        batch, time, _ = x.shape
        return x.reshape(batch, time, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        batch, _, time, _ = x.shape
        return x.transpose(0, 2, 1, 3).reshape(batch, time, self.dim)

    def forward(self, x, train=False):
        _expect(x.ndim == 3 and x.shape[2] == self.dim,
                f"attention expects [batch, time, {self.dim}], got {x.shape}")
        batch, time, _ = x.shape
        flat = x.reshape(batch * time, self.dim)
        q = self._split(self.w_q.forward(flat).reshape(batch, time, self.dim))
        k = self._split(self.w_k.forward(flat).reshape(batch, time, self.dim))
        v = self._split(self.w_v.forward(flat).reshape(batch, time, self.dim))
        scale = 1.0 / np.sqrt(self.head_dim)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        attn = self._softmax.forward(scores)
        context = attn @ v
        merged = self._merge(context)
        out = self.w_o.forward(merged.reshape(batch * time, self.dim))
        self._cache = (q, k, v, attn, batch, time, scale)
        return out.reshape(batch, time, self.dim)

    def backward(self, dy):
        q, k, v, attn, batch, time, scale = self._cache
        dmerged = self.w_o.backward(
            dy.reshape(batch * time, self.dim)
        ).reshape(batch, time, self.dim)
        dcontext = self._split(dmerged)
        dattn = dcontext @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dcontext
        dscores = self._softmax.backward(dattn) * scale
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dx = self.w_q.backward(self._merge(dq).reshape(batch * time, self.dim))
        dx += self.w_k.backward(self._merge(dk).reshape(batch * time, self.dim))
        dx += self.w_v.backward(self._merge(dv).reshape(batch * time, self.dim))
        return dx.reshape(batch, time, self.dim)


class PositionalEncoding(Layer):
    """Adds the fixed sine/cosine position table to [batch, time, dim]."""

    def __init__(self, dim: int, max_len: int = 4096, dtype=np.float32):
        self.dim = dim
        position = np.arange(max_len)[:, None].astype(np.float64)
        div = np.exp(np.arange(0, dim, 2) * (-np.log(10000.0) / dim))
        table = np.zeros((max_len, dim))
        table[:, 0::2] = np.sin(position * div)
        table[:, 1::2] = np.cos(position * div[:dim // 2])
        self._table = table.astype(dtype)

    def forward(self, x, train=False):
        _expect(x.shape[1] <= self._table.shape[0],
                f"sequence {x.shape[1]} exceeds positional table")
        return x + self._table[None, :x.shape[1], :]

    def backward(self, dy):
        return dy


class MeanPoolTime(Layer):
    """Mean over the time axis: [batch, time, dim] -> [batch, dim]."""

    def forward(self, x, train=False):
        _expect(x.ndim == 3, f"mean-pool expects [batch, time, dim], got {x.shape}")
        self._time = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dy):
        return np.repeat(dy[:, None, :], self._time, axis=1) / self._time


class TransposeToTimeMajor(Layer):
    """[batch, channels, length] -> [batch, length, channels]."""

    def forward(self, x, train=False):
        _expect(x.ndim == 3, f"expected 3-D input, got {x.shape}")
        return np.ascontiguousarray(x.transpose(0, 2, 1))

    def backward(self, dy):
        return np.ascontiguousarray(dy.transpose(0, 2, 1))


class TimeDistributedDense(Layer):
    """Dense layer applied independently at every time step."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.inner = Dense(n_in, n_out, rng, dtype)

    def params(self):
        return self.inner.params()

    def forward(self, x, train=False):
        batch, time, _ = x.shape
        self._bt = (batch, time)
        y = self.inner.forward(x.reshape(batch * time, -1), train)
        return y.reshape(batch, time, -1)

    def backward(self, dy):
        batch, time = self._bt
        dx = self.inner.backward(dy.reshape(batch * time, -1))
        return dx.reshape(batch, time, -1)


class TransformerEncoderBlock(Layer):
    """Post-norm encoder block: attention and feed-forward sublayers, each
    wrapped in a residual connection followed by layer normalization.
    """

    def __init__(self, dim: int, heads: int, ff_dim: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.attn = MultiHeadAttention(dim, heads, rng, dtype)
        self.norm1 = LayerNorm(dim, dtype)
        self.ff1 = TimeDistributedDense(dim, ff_dim, rng, dtype)
        self.act = Relu()
        self.ff2 = TimeDistributedDense(ff_dim, dim, rng, dtype)
        self.norm2 = LayerNorm(dim, dtype)

    def params(self):
        return (self.attn.params() + self.norm1.params() + self.ff1.params()
                + self.ff2.params() + self.norm2.params())

    def forward(self, x, train=False):
        a = self.attn.forward(x, train)
        h = self.norm1.forward(x + a, train)
        f = self.ff2.forward(self.act.forward(self.ff1.forward(h, train), train), train)
        return self.norm2.forward(h + f, train)

    def backward(self, dy):
        dhf = self.norm2.backward(dy)
        dh = dhf + self.ff1.backward(self.act.backward(self.ff2.backward(dhf)))
        dxa = self.norm1.backward(dh)
        return dxa + self.attn.backward(dxa)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


# ---------------------------------------------------------------------------
# Loss and optimizer
# ---------------------------------------------------------------------------

def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    t = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def bce_loss(logits: np.ndarray, labels: np.ndarray):
    """Per-sample binary cross-entropy on raw logits.

    loss = softplus(logit) - label * logit, computed in the overflow-safe
    form; the gradient is sigmoid(logit) - label. Works elementwise.
    """
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    loss = softplus - y * z
    dlogit = sigmoid(z) - y
    return loss, dlogit


@dataclass
class AdamState:
    """Optimizer state: step count plus first/second moments per parameter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place to ``params``."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params vs {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        _expect(p.shape == g.shape, f"param {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return params, state


class Adam:
    """Convenience wrapper stepping a list of :class:`Tensor` parameters."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4):
        self.params = params
        self.state = AdamState(lr=lr)

    def step(self) -> None:
        grads = []
        for p in self.params:
            _expect(p.grad is not None, "step() before any backward pass")
            grads.append(p.grad)
        adam_step([p.data for p in self.params], grads, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# ---------------------------------------------------------------------------
# Checkpoint tensor blocks
# ---------------------------------------------------------------------------

def write_tensor_blocks(fh, arrays: list[np.ndarray]) -> None:
    """Shape-prefixed float32 little-endian blocks."""
    for arr in arrays:
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_tensor_blocks(fh, count: int) -> list[np.ndarray]:
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        n = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape)
        arrays.append(np.array(data))
    return arrays
