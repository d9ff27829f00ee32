"""Rank-based ROC AUC and Harrell's concordance index."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both classes")
    ranks = rankdata(scores)  # midranks for ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def concordance_index(risk, event_time, event) -> float:
    """Harrell's C over comparable pairs.

    Sample ``i`` with an event at ``t_i`` is comparable with ``j`` when ``j``
    has an event strictly later, or is censored at or after ``t_i`` (known
    event-free through ``t_i``). Concordant when the earlier event carries
    the higher risk; risk ties count 0.5.
    """
    risk = np.asarray(risk, dtype=np.float64)
    t = np.asarray(event_time, dtype=np.float64)
    e = np.asarray(event).astype(bool)
    if not (risk.shape == t.shape == e.shape) or risk.ndim != 1:
        raise ValueError("risk, event_time and event must be equal-length vectors")
    ei = e[:, None]
    comparable = ei & ((e[None, :] & (t[None, :] > t[:, None])) | (~e[None, :] & (t[None, :] >= t[:, None])))
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise UndefinedMetricError("no comparable pairs for the concordance index")
    diff = risk[:, None] - risk[None, :]
    score = np.where(diff > 0, 1.0, np.where(diff == 0, 0.5, 0.0))
    return float((score * comparable).sum() / n_pairs)


def event_times_from_labels(labels, mask) -> tuple[np.ndarray, np.ndarray]:
    """Discrete event/censoring year from cumulative yearly labels.

    Event time is the first year with label 1; otherwise the sample is
    censored at the last consecutive known year (0 if none).
    """
    labels = np.asarray(labels, dtype=int)
    mask = np.asarray(mask, dtype=bool)
    event = (labels * mask).any(axis=1)
    first = np.argmax(labels * mask, axis=1) + 1
    known_prefix = np.cumprod(mask, axis=1).sum(axis=1)
    return np.where(event, first, known_prefix).astype(float), event
