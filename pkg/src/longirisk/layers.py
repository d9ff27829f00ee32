"""Parameter containers and the transformer encoder block."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError


class Module:
    """Attribute-walking parameter container.

    Every ``Tensor`` attribute is a parameter and every ``Module`` attribute
    is a child, both visited in assignment order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = True

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters(prefix)}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        params = dict(self.named_parameters(prefix))
        unexpected = sorted(k for k in state if k.startswith(prefix) and k not in params)
        if unexpected:
            raise KeyError(f"unexpected parameters {unexpected}")
        for name, p in params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name}")
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)


def _normal(rng: np.random.Generator, shape, std: float) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = _normal(rng, (d_in, d_out), 1.0 / np.sqrt(d_in))
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ag.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = Tensor(np.ones(d), requires_grad=True)
        self.bias = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.gain, self.bias)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention with key masking.

    Score and value contractions are written as broadcast products summed
    along one axis, so an absent key contributes an exact zero and results
    do not depend on how many absent slots surround the present ones.
    """

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator):
        if d % n_heads:
            raise ConfigError(f"width {d} is not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.query = Linear(d, d, rng)
        self.key = Linear(d, d, rng)
        self.value = Linear(d, d, rng)
        self.out = Linear(d, d, rng)
        self.last_weights: np.ndarray | None = None

    def _heads(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        return x.reshape(b, t, self.n_heads, d // self.n_heads).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        b, t, d = x.shape
        h, dh = self.n_heads, d // self.n_heads
        q, k, v = (self._heads(f(x)) for f in (self.query, self.key, self.value))
        full = (b, h, t, t, dh)
        scores = ag.tsum(ag.mul(ag.expand(q.reshape(b, h, t, 1, dh), full),
                                ag.expand(k.reshape(b, h, 1, t, dh), full)), axis=-1)
        scores = ag.mul(scores, 1.0 / np.sqrt(dh))
        mask = None if key_mask is None else np.asarray(key_mask, bool)[:, None, None, :]
        weights = ag.softmax(scores, axis=-1, mask=mask)
        self.last_weights = weights.data
        ctx = ag.tsum(ag.mul(ag.expand(weights.reshape(b, h, t, t, 1), full),
                             ag.expand(v.reshape(b, h, 1, t, dh), full)), axis=3)
        return self.out(ctx.transpose(0, 2, 1, 3).reshape(b, t, d))


class TransformerBlock(Module):
    """Pre-norm encoder block: attention and a 4x-wide ReLU feed-forward,
    each on a residual branch with dropout."""

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator, ffn_mult: int = 4):
        self.norm1 = LayerNorm(d)
        self.attn = MultiHeadSelfAttention(d, n_heads, rng)
        self.norm2 = LayerNorm(d)
        self.ff_in = Linear(d, ffn_mult * d, rng)
        self.ff_out = Linear(ffn_mult * d, d, rng)

    def __call__(
        self,
        x: Tensor,
        key_mask: np.ndarray | None = None,
        dropout: float = 0.0,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        a = self.attn(self.norm1(x), key_mask)
        x = ag.add(x, ag.dropout(a, dropout, rng, train))
        f = self.ff_out(ag.relu(self.ff_in(self.norm2(x))))
        return ag.add(x, ag.dropout(f, dropout, rng, train))
