"""History aggregation over the five yearly slots -4..0."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cohort import OFFSETS
from .errors import ConfigError, ContractError, DimensionError
from .layers import Module, TransformerBlock

N_SLOTS = len(OFFSETS)


def temporal_encoding(slot: int, d: int) -> np.ndarray:
    """Sinusoidal encoding of a relative offset (-4 is position 0)."""
    if d % 2:
        raise ConfigError(f"temporal encoding width must be even, got {d}")
    if slot not in OFFSETS:
        raise ContractError(f"offset {slot} outside {OFFSETS}")
    pos = slot - OFFSETS[0]
    freq = 1.0 / 10000.0 ** (np.arange(0, d, 2) / d)
    out = np.empty(d)
    out[0::2] = np.sin(pos * freq)
    out[1::2] = np.cos(pos * freq)
    return out


def encoding_table(d: int) -> np.ndarray:
    return np.stack([temporal_encoding(s, d) for s in OFFSETS])


def mask_to_bits(present: Sequence[bool]) -> str:
    """Oldest slot first, e.g. ``10101`` for a biennial four-year history."""
    return "".join("1" if p else "0" for p in present)


def bits_to_mask(bits: str) -> tuple[bool, ...]:
    if len(bits) != N_SLOTS or set(bits) - {"0", "1"}:
        raise ConfigError(f"history mask must be {N_SLOTS} characters of 0/1, got {bits!r}")
    mask = tuple(c == "1" for c in bits)
    if not mask[-1]:
        raise ConfigError("history mask must keep the present visit")
    return mask


class TimeAggregator(Module):
    """Temporal encodings, one masked self-attention block, mean pooling
    over present slots. Dropout is applied to the inputs, inside the
    block's residual branches, and to the pooled output.

    ``use_block=False`` swaps the block for the identity (test harness).
    """

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator, dropout: float = 0.25,
                 use_block: bool = True):
        if d % n_heads:
            raise ConfigError(f"d_visit {d} is not divisible by n_heads {n_heads}")
        self.d = d
        self.dropout = dropout
        self.table = encoding_table(d)
        self.block = TransformerBlock(d, n_heads, rng) if use_block else None

    def __call__(self, visits: Tensor, present: np.ndarray, train: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        """(B, 5, d) slot embeddings and (B, 5) presence -> (B, d) history embedding.

        Contents of absent slots are ignored.
        """
        visits = ag.as_tensor(visits)
        present = np.asarray(present, dtype=bool)
        if visits.ndim != 3 or visits.shape[1:] != (N_SLOTS, self.d):
            raise DimensionError(f"expected visits of shape (B, {N_SLOTS}, {self.d}), got {visits.shape}")
        if present.shape != visits.shape[:2]:
            raise DimensionError(f"mask shape {present.shape} does not match visits {visits.shape}")
        if not present[:, -1].all():
            raise ContractError("the present visit (offset 0) must be in every history")
        keep = np.broadcast_to(present[:, :, None], visits.shape).astype(np.float64)
        x = ag.add(ag.mul(visits, keep), Tensor(self.table * keep))
        x = ag.dropout(x, self.dropout, rng, train)
        if self.block is not None:
            x = self.block(x, key_mask=present, dropout=self.dropout, train=train, rng=rng)
        weights = keep / present.sum(axis=1)[:, None, None]
        pooled = ag.tsum(ag.mul(x, weights), axis=1)
        return ag.dropout(pooled, self.dropout, rng, train)


def aggregate_history(agg: TimeAggregator, visits: Sequence, mask: Sequence[bool],
                      train_mode: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Single-history convenience form.

    ``visits`` has five entries (oldest first), each a width-d vector or
    None; entries at absent slots are ignored.
    """
    mask = tuple(bool(m) for m in mask)
    if len(visits) != N_SLOTS or len(mask) != N_SLOTS:
        raise ContractError(f"need {N_SLOTS} visit slots and mask bits")
    if not mask[-1]:
        raise ContractError("the present visit (offset 0) must be visible")
    rows = []
    for v, keep in zip(visits, mask):
        if keep:
            if v is None:
                raise ContractError("mask marks a slot present but no visit was supplied")
            v = ag.as_tensor(v)
            if v.shape != (agg.d,):
                raise DimensionError(f"visit embedding width {v.shape} != ({agg.d},)")
            rows.append(v)
        else:
            rows.append(Tensor(np.zeros(agg.d)))
    stacked = ag.stack(rows).reshape(1, N_SLOTS, agg.d)
    return agg(stacked, np.array([mask]), train=train_mode, rng=rng).reshape(agg.d)
