"""Additive-hazard risk head and the reweighted, censoring-masked loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cohort import HORIZON, TrajectorySample
from .errors import DimensionError, WeightingError
from .layers import Linear, Module


class HazardHead(Module):
    """Baseline logit plus five non-negative yearly increments.

    The k-year logit is ``B(m) + sum_{i<=k} relu(h_i(m))``; the sigmoid of it
    is the cumulative k-year risk, nondecreasing in k by construction.
    """

    def __init__(self, d: int, rng: np.random.Generator):
        self.d = d
        self.base = Linear(d, 1, rng)
        # one column per follow-up year: five independent linear maps
        self.hazards = Linear(d, HORIZON, rng)

    def logits(self, m: Tensor) -> Tensor:
        m = ag.as_tensor(m)
        if m.shape[-1] != self.d:
            raise DimensionError(f"history embedding width {m.shape[-1]} != {self.d}")
        single = m.ndim == 1
        if single:
            m = m.reshape(1, self.d)
        increments = ag.cumsum(ag.relu(self.hazards(m)), axis=-1)
        z = ag.add(ag.expand(self.base(m), increments.shape), increments)
        return z.reshape(HORIZON) if single else z

    def __call__(self, m: Tensor) -> Tensor:
        return ag.sigmoid(self.logits(m))


def risk_curve(head: HazardHead, m) -> Tensor:
    return head(m)


@dataclass
class LossWeights:
    w: np.ndarray  # (HORIZON, 2): year x label value

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.shape != (HORIZON, 2) or not np.all(np.isfinite(self.w)) or np.any(self.w <= 0):
            raise WeightingError(f"loss weights must be a positive finite ({HORIZON}, 2) matrix")


def label_counts(labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """(HORIZON, 2) counts of known labels per year and value."""
    labels = np.asarray(labels, dtype=int)
    mask = np.asarray(mask, dtype=bool)
    pos = (mask & (labels == 1)).sum(axis=0)
    neg = (mask & (labels == 0)).sum(axis=0)
    return np.stack([neg, pos], axis=1)


def compute_loss_weights(train_samples: Sequence[TrajectorySample]) -> LossWeights:
    """Per-year inverse-frequency balancing: ``w[k][v] = N_k / (2 n_kv)``.

    Empty cells count as one sample.
    """
    labels = np.array([s.labels for s in train_samples], dtype=int).reshape(-1, HORIZON)
    mask = np.array([s.label_mask for s in train_samples], dtype=bool).reshape(-1, HORIZON)
    counts = label_counts(labels, mask)
    totals = counts.sum(axis=1)
    for k, n in enumerate(totals, start=1):
        if n == 0:
            raise WeightingError(f"no known labels at follow-up year {k}")
    return LossWeights(totals[:, None] / (2.0 * np.maximum(counts, 1)))


def survival_loss(logits: Tensor, labels, mask, weights: LossWeights) -> tuple[Tensor, int]:
    """Weighted binary cross-entropy over known years.

    Takes the head's logits rather than probabilities for numerical
    stability. Each sample's loss is normalised by its number of known
    years; the batch loss is the mean over samples with at least one known
    year. Returns ``(loss, n_skipped)`` where skipped samples had every year
    censored.
    """
    logits = ag.as_tensor(logits)
    single = logits.ndim == 1
    y = np.asarray(labels, dtype=np.float64).reshape(-1, HORIZON)
    known = np.asarray(mask, dtype=bool).reshape(-1, HORIZON)
    z = logits.reshape(-1, HORIZON) if single else logits
    if z.shape != y.shape or y.shape != known.shape:
        raise DimensionError(f"logits {logits.shape}, labels {y.shape} and mask {known.shape} disagree")
    n_known = known.sum(axis=1)
    usable = n_known > 0
    n_skipped = int((~usable).sum())
    if not usable.any():
        return Tensor(0.0), n_skipped
    cell_w = np.where(y > 0.5, weights.w[:, 1], weights.w[:, 0]) * known
    coef = cell_w / np.maximum(n_known, 1)[:, None] / usable.sum()
    sign = 2.0 * y - 1.0
    bce = ag.mul(ag.log_sigmoid(ag.mul(z, sign)), -1.0)
    return ag.tsum(ag.mul(bce, coef)), n_skipped
