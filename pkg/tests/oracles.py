"""Independent reference implementations used as test oracles.

Nothing here calls into the code under test except to run the function
being checked; every expected value is produced by a separate route.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from longirisk import autograd as ag
from longirisk.autograd import Tensor
from longirisk.layers import TransformerBlock
from longirisk.rng import make_rng


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-2)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def check_op_gradient(build, inputs: list[np.ndarray], seed: int = 0) -> float:
    """Max relative error between autodiff and central differences for
    ``sum(build(*tensors) * R)`` with a fixed random projection R, over
    every input."""
    proj_rng = make_rng(seed)
    probe = [Tensor(x, requires_grad=True) for x in inputs]
    out = build(*probe)
    r = proj_rng.normal(size=out.shape)
    ag.tsum(ag.mul(out, Tensor(r))).backward()
    worst = 0.0
    for j, x in enumerate(inputs):
        def f(v, j=j):
            args = [Tensor(v if i == j else inputs[i]) for i in range(len(inputs))]
            with ag.no_grad():
                return float(np.sum(build(*args).data * r))
        worst = max(worst, max_rel_error(probe[j].grad, numeric_grad(f, x)))
    return worst


def _positive(rng, shape):
    return rng.uniform(0.5, 2.0, size=shape)


def _away_from_zero(rng, shape):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 0.1, 0.5, x)


def op_cases(rng: np.random.Generator):
    """(name, build, inputs) for every differentiable op, three shapes each."""
    shapes = [(3,), (2, 4), (2, 3, 4)]
    cases = []
    for s in shapes:
        n = rng.normal
        cases += [
            ("add", ag.add, [n(size=s), n(size=s)]),
            ("add_scalar", lambda a: ag.add(a, 1.5), [n(size=s)]),
            ("sub", ag.sub, [n(size=s), n(size=s)]),
            ("mul", ag.mul, [n(size=s), n(size=s)]),
            ("mul_scalar_tensor", ag.mul, [n(size=s), np.array(n())]),
            ("div", ag.div, [n(size=s), _positive(rng, s)]),
            ("relu", ag.relu, [_away_from_zero(rng, s)]),
            ("sigmoid", ag.sigmoid, [n(size=s)]),
            ("log_sigmoid", ag.log_sigmoid, [3 * n(size=s)]),
            ("exp", ag.exp, [n(size=s)]),
            ("log", ag.log, [_positive(rng, s)]),
            ("sum_all", lambda a: ag.tsum(a), [n(size=s)]),
            ("sum_axis", lambda a: ag.tsum(a, axis=-1, keepdims=True), [n(size=s)]),
            ("mean_axis", lambda a: ag.mean(a, axis=0), [n(size=s)]),
            ("reshape", lambda a: ag.reshape(a, (-1,)), [n(size=s)]),
            ("transpose", lambda a: ag.transpose(a), [n(size=s)]),
            ("expand", lambda a: ag.expand(a.reshape(1, *a.shape), (3, *a.shape)), [n(size=s)]),
            ("getitem", lambda a: ag.getitem(a, np.array([0, 0, -1])), [n(size=s)]),
            ("stack", lambda a, b: ag.stack([a, b], axis=0), [n(size=s), n(size=s)]),
            ("concat", lambda a, b: ag.concat([a, b], axis=-1), [n(size=s), n(size=s)]),
            ("cumsum", lambda a: ag.cumsum(a, axis=-1), [n(size=s)]),
            ("softmax", lambda a: ag.softmax(a, axis=-1), [n(size=s)]),
            ("softmax_masked", lambda a, s=s: ag.softmax(a, axis=-1, mask=_mask_for(s)), [n(size=s)]),
            ("layer_norm", lambda a, g, b: ag.layer_norm(a, g, b), [n(size=s), n(size=s[-1:]), n(size=s[-1:])]),
            ("dropout", lambda a: ag.dropout(a, 0.3, make_rng(5), True), [n(size=s)]),
        ]
    for m, k, p in [(2, 3, 4), (3, 4, 2), (1, 5, 3)]:
        n = rng.normal
        cases += [
            ("matmul", ag.matmul, [n(size=(m, k)), n(size=(k, p))]),
            ("matmul_batched", ag.matmul, [n(size=(2, m, k)), n(size=(2, k, p))]),
            ("matmul_shared", ag.matmul, [n(size=(2, m, k)), n(size=(k, p))]),
            ("linear", ag.linear, [n(size=(m, k)), n(size=(k, p)), n(size=(p,))]),
        ]
    for b, t, d in [(1, 2, 4), (2, 5, 4), (1, 3, 8)]:
        block = TransformerBlock(d, 2, make_rng(b * 100 + t))
        mask = np.ones((b, t), bool)
        mask[:, 0] = False
        cases.append(("transformer_block", lambda x, block=block, mask=mask: block(x, key_mask=mask),
                      [rng.normal(size=(b, t, d))]))
    return cases


def _mask_for(shape):
    mask = np.ones(shape, bool)
    mask[..., 0] = False
    return mask


def brute_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def brute_cindex(risk, time, event):
    """Pairs (i, j): i has an event, j is still event-free after t_i
    (event strictly later, or censored at or after t_i)."""
    num = den = 0.0
    for i in range(len(risk)):
        if not event[i]:
            continue
        for j in range(len(risk)):
            if i == j:
                continue
            if (event[j] and time[j] > time[i]) or (not event[j] and time[j] >= time[i]):
                den += 1
                num += 1.0 if risk[i] > risk[j] else 0.5 if risk[i] == risk[j] else 0.0
    return num / den if den else math.nan


def brute_labels(now: int, diagnosis_year, last_followup_year: int):
    """Scan each follow-up year directly against the timeline dates."""
    labels, known = [], []
    for k in (1, 2, 3, 4, 5):
        horizon_end = now + k
        diagnosed_by_then = diagnosis_year is not None and diagnosis_year <= horizon_end
        labels.append(1 if diagnosed_by_then else 0)
        known.append(True if diagnosed_by_then else last_followup_year >= horizon_end)
    return labels, known


def scalar_bce_loss(p, y, known, w):
    """Weighted BCE over known years, normalised by known-year count."""
    total, count = 0.0, 0
    for k in range(5):
        if not known[k]:
            continue
        count += 1
        pk = p[k]
        ce = -math.log(pk) if y[k] == 1 else -math.log(1.0 - pk)
        total += w[k][y[k]] * ce
    return total / count
