"""Network building blocks: temporal convolution, attention encoder, dense.

Parameters are created through a ParamStore so the optimizer and the
checkpoint format see one flat namespace of named arrays.  Weight
initialization is uniform scaled by fan-in from a caller-supplied
generator; the seed is recorded in the run manifest.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import ParamStore


def fan_in_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


class TemporalConv:
    """Strided 1-D convolution over time: (B, T, C_in) -> (B, L, C_out)
    with L = (T - kernel) // stride + 1."""

    def __init__(self, store: ParamStore, prefix: str, c_in: int, c_out: int,
                 kernel: int, stride: int, rng: np.random.Generator):
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.w = store.create(f"{prefix}.w",
                              fan_in_uniform(rng, c_in * kernel, (kernel, c_in, c_out)))
        self.b = store.create(f"{prefix}.b", np.zeros(c_out))

    def out_length(self, t_len: int) -> int:
        return (t_len - self.kernel) // self.stride + 1

    def forward(self, x: Tensor) -> Tensor:
        b_size, t_len, c_in = x.shape
        if c_in != self.c_in:
            raise ValueError(f"expected {self.c_in} input channels, got {c_in}")
        if t_len < self.kernel:
            raise ValueError(f"input length {t_len} shorter than kernel {self.kernel}")
        w_flat = ad.reshape(self.w, (self.kernel * self.c_in, self.c_out))
        rows = []
        for i in range(self.out_length(t_len)):
            window = x[:, i * self.stride:i * self.stride + self.kernel, :]
            flat = ad.reshape(window, (b_size, self.kernel * self.c_in))
            row = ad.add(ad.matmul(flat, w_flat), self.b)
            rows.append(ad.reshape(row, (b_size, 1, self.c_out)))
        return ad.concat(rows, axis=1)


class Dense:
    """Affine layer with an optional smooth-rectifier nonlinearity."""

    def __init__(self, store: ParamStore, prefix: str, n_in: int, n_out: int,
                 rng: np.random.Generator, activation: str = "linear"):
        if activation not in ("linear", "softplus"):
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in = n_in
        self.activation = activation
        self.w = store.create(f"{prefix}.w", fan_in_uniform(rng, n_in, (n_in, n_out)))
        self.b = store.create(f"{prefix}.b", np.zeros(n_out))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input dim {self.n_in}, got {x.shape[-1]}")
        out = ad.add(ad.matmul(x, self.w), self.b)
        if self.activation == "softplus":
            out = ad.softplus(out)
        return out


class EncoderBlock:
    """Multi-head self-attention over sequence positions, residual adds,
    layer normalization and a position-wise feed-forward."""

    def __init__(self, store: ParamStore, prefix: str, n_model: int,
                 n_heads: int, ff_width: int, rng: np.random.Generator):
        if n_model % n_heads != 0:
            raise ValueError(f"model dim {n_model} not divisible by {n_heads} heads")
        self.n_model = n_model
        self.n_heads = n_heads
        self.d_head = n_model // n_heads

        def mat(name, n_in, n_out):
            return store.create(f"{prefix}.{name}",
                                fan_in_uniform(rng, n_in, (n_in, n_out)))

        self.wq, self.wk, self.wv, self.wo = (mat(n, n_model, n_model)
                                              for n in ("wq", "wk", "wv", "wo"))
        self.bq = store.create(f"{prefix}.bq", np.zeros(n_model))
        self.bk = store.create(f"{prefix}.bk", np.zeros(n_model))
        self.bv = store.create(f"{prefix}.bv", np.zeros(n_model))
        self.bo = store.create(f"{prefix}.bo", np.zeros(n_model))
        self.ff1 = mat("ff1.w", n_model, ff_width)
        self.ff1_b = store.create(f"{prefix}.ff1.b", np.zeros(ff_width))
        self.ff2 = mat("ff2.w", ff_width, n_model)
        self.ff2_b = store.create(f"{prefix}.ff2.b", np.zeros(n_model))
        self.ln1_g = store.create(f"{prefix}.ln1.g", np.ones(n_model))
        self.ln1_b = store.create(f"{prefix}.ln1.b", np.zeros(n_model))
        self.ln2_g = store.create(f"{prefix}.ln2.g", np.ones(n_model))
        self.ln2_b = store.create(f"{prefix}.ln2.b", np.zeros(n_model))

    def _split_heads(self, x: Tensor, b_size: int, l_len: int) -> Tensor:
        x = ad.reshape(x, (b_size, l_len, self.n_heads, self.d_head))
        return ad.transpose(x, (0, 2, 1, 3))

    def attention(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (context (B, L, N), attention weights (B, H, L, L))."""
        b_size, l_len, _ = x.shape
        q = self._split_heads(ad.add(ad.matmul(x, self.wq), self.bq), b_size, l_len)
        k = self._split_heads(ad.add(ad.matmul(x, self.wk), self.bk), b_size, l_len)
        v = self._split_heads(ad.add(ad.matmul(x, self.wv), self.bv), b_size, l_len)
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                        1.0 / math.sqrt(self.d_head))
        att = ad.softmax(scores, axis=-1)
        ctx = ad.transpose(ad.matmul(att, v), (0, 2, 1, 3))
        ctx = ad.reshape(ctx, (b_size, l_len, self.n_model))
        return ad.add(ad.matmul(ctx, self.wo), self.bo), att

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_model:
            raise ValueError(f"expected model dim {self.n_model}, got {x.shape[-1]}")
        ctx, _ = self.attention(x)
        x = ad.layer_norm(ad.add(x, ctx), self.ln1_g, self.ln1_b)
        h = ad.matmul(ad.softplus(ad.add(ad.matmul(x, self.ff1), self.ff1_b)),
                      self.ff2)
        h = ad.add(h, self.ff2_b)
        return ad.layer_norm(ad.add(x, h), self.ln2_g, self.ln2_b)


class EncoderStack:
    """Stacked encoder blocks; shape preserved."""

    def __init__(self, store: ParamStore, prefix: str, n_blocks: int,
                 n_model: int, n_heads: int, ff_width: int,
                 rng: np.random.Generator):
        self.blocks = [EncoderBlock(store, f"{prefix}.{i}", n_model, n_heads,
                                    ff_width, rng)
                       for i in range(n_blocks)]

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block.forward(x)
        return x
