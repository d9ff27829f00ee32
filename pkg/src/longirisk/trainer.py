"""Training loop, early stopping and grid search."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .cohort import SubjectTimeline, TrajectorySample, split_subjects
from .errors import ConfigError, LongiRiskError, NumericError, SplitError
from .model import ModelConfig, RiskModel, VisitTable
from .optim import Adam
from .rng import derive_rng
from .survival import LossWeights, compute_loss_weights, survival_loss

log = logging.getLogger(__name__)

GRID = {
    "d_visit": (128, 256, 512),
    "n_heads": (1, 4, 8),
    "l2": (1e-4, 1e-5, 1e-6),
}


@dataclass
class TrainConfig:
    lr: float = 1e-3
    dropout: float = 0.25
    d_visit: int = 128
    n_heads: int = 4
    l2: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    augment: bool = True
    drop_prob: float = 0.3
    encoder_mode: str = "random_projection"
    resolution: tuple[int, int] = (32, 32)
    image_mean: float = 0.3
    image_std: float = 0.35
    image_heads: int = 1
    freeze_image_aggregator: bool = True

    def validate(self, grid_mode: bool = False) -> None:
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.batch_size < 1 or self.patience < 0:
            raise ConfigError("batch_size must be positive and patience non-negative")
        if self.lr < 0 or self.l2 < 0:
            raise ConfigError("lr and l2 must be non-negative")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.drop_prob < 1.0:
            raise ConfigError("dropout and drop_prob must lie in [0, 1)")
        if self.d_visit % self.n_heads:
            raise ConfigError(f"d_visit {self.d_visit} is not divisible by n_heads {self.n_heads}")
        if grid_mode:
            for name, allowed in GRID.items():
                if getattr(self, name) not in allowed:
                    raise ConfigError(f"{name}={getattr(self, name)} is outside the grid values {allowed}")

    def model_config(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        return ModelConfig.from_dict({k: v for k, v in asdict(self).items() if k in names})

    @classmethod
    def from_dict(cls, values: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        values = dict(values)
        if "resolution" in values:
            values["resolution"] = tuple(int(v) for v in values["resolution"])
        return cls(**values)


def full_grid(base: TrainConfig) -> list[TrainConfig]:
    """All 27 combinations of embedding width, head count and L2 rate."""
    return [replace(base, d_visit=d, n_heads=h, l2=l2)
            for d, h, l2 in itertools.product(*GRID.values())]


@dataclass
class TrainState:
    epoch: int = 0
    best_validation_loss: float = float("inf")
    epochs_since_improvement: int = 0
    best_epoch: int = 0
    best_state: dict = field(default_factory=dict, repr=False)
    history: list[dict] = field(default_factory=list)


@dataclass
class TrainResult:
    model: RiskModel
    state: TrainState
    weights: LossWeights


def make_validation_split(train_timelines: Sequence[SubjectTimeline], rng: np.random.Generator):
    """Subject-level 75/25 split into fit and validation parts."""
    if len(train_timelines) < 4:
        raise SplitError(f"need at least 4 training subjects for a validation split, got {len(train_timelines)}")
    return split_subjects(train_timelines, 0.75, True, rng)


def _arrays(samples: Sequence[TrajectorySample]) -> tuple[np.ndarray, np.ndarray]:
    labels = np.array([s.labels for s in samples], dtype=int).reshape(-1, 5)
    mask = np.array([s.label_mask for s in samples], dtype=bool).reshape(-1, 5)
    return labels, mask


def _param_norms(model: RiskModel) -> dict[str, float]:
    return {name: float(np.linalg.norm(p.data)) for name, p in model.named_parameters() if p.requires_grad}


def validation_loss(model: RiskModel, table: VisitTable, samples, weights: LossWeights) -> float:
    idx, present = table.indices(samples)
    labels, mask = _arrays(samples)
    with ag.no_grad():
        logits = model.forward(table, idx, present)
        loss, _ = survival_loss(logits, labels, mask, weights)
    return float(loss.data)


def train(
    model: RiskModel,
    cfg: TrainConfig,
    fit_samples: Sequence[TrajectorySample],
    val_samples: Sequence[TrajectorySample],
    table: VisitTable | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Minibatch Adam on the reweighted masked loss with early stopping.

    Loss weights come from ``fit_samples`` only. The model is left holding
    the parameters of the epoch with the lowest validation loss.
    """
    cfg.validate()
    weights = compute_loss_weights(fit_samples)
    table = table or VisitTable(model, list(fit_samples) + list(val_samples))
    idx, present = table.indices(fit_samples)
    labels, mask = _arrays(fit_samples)
    opt = Adam(model.trainable_parameters(), lr=cfg.lr, weight_decay=cfg.l2)
    rng = derive_rng(cfg.seed, "train")
    state = TrainState()
    n = len(fit_samples)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        losses, skipped = [], 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            vis = present[sel]
            if cfg.augment and cfg.drop_prob > 0:
                drop = rng.random(vis.shape) < cfg.drop_prob
                drop[:, -1] = False
                vis = vis & ~drop
            logits = model.forward(table, idx[sel], vis, train=True, rng=rng)
            loss, n_skip = survival_loss(logits, labels[sel], mask[sel], weights)
            skipped += n_skip
            if not loss.requires_grad:
                continue
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {b}; parameter norms {_param_norms(model)}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        val = validation_loss(model, table, val_samples, weights)
        if not np.isfinite(val):
            raise NumericError(f"non-finite validation loss at epoch {epoch}; parameter norms {_param_norms(model)}")
        state.epoch = epoch
        record = {"epoch": epoch, "train_loss": float(np.mean(losses)) if losses else float("nan"),
                  "val_loss": val, "skipped": skipped}
        state.history.append(record)
        if on_epoch:
            on_epoch(record)
        if val < state.best_validation_loss:
            state.best_validation_loss = val
            state.best_epoch = epoch
            state.epochs_since_improvement = 0
            state.best_state = model.state_dict()
        else:
            state.epochs_since_improvement += 1
        if state.epochs_since_improvement >= cfg.patience:
            break
    model.load_state_dict(state.best_state)
    return TrainResult(model, state, weights)


@dataclass
class GridPoint:
    index: int
    config: TrainConfig
    best_val_loss: float = float("nan")
    epochs_run: int = 0
    error: str | None = None
    result: TrainResult | None = field(default=None, repr=False)


@dataclass
class GridResult:
    best: GridPoint
    points: list[GridPoint]

    def table_rows(self) -> list[dict]:
        rows = []
        for p in self.points:
            row = {k: getattr(p.config, k) for k in ("d_visit", "n_heads", "l2", "lr", "dropout", "seed")}
            row.update(best_val_loss=p.best_val_loss, epochs_run=p.epochs_run, error=p.error or "")
            rows.append(row)
        return rows


def grid_search(
    grid: Sequence[TrainConfig],
    fit_samples: Sequence[TrajectorySample],
    val_samples: Sequence[TrajectorySample],
    jobs: int = 1,
    keep_models: bool = False,
) -> GridResult:
    """Train one model per grid point and rank by best validation loss.

    Failed points are recorded and ranked last; only an all-failed grid
    raises. The winner always keeps its trained model.
    """
    if not grid:
        raise ConfigError("grid search needs at least one configuration")
    for cfg in grid:
        cfg.validate()

    def run(i_cfg):
        i, cfg = i_cfg
        point = GridPoint(i, cfg)
        try:
            result = train(RiskModel(cfg.model_config()), cfg, fit_samples, val_samples)
        except (LongiRiskError, FloatingPointError) as exc:
            point.error = f"{type(exc).__name__}: {exc}"
            log.warning("grid point %d failed: %s", i, point.error)
            return point
        point.best_val_loss = result.state.best_validation_loss
        point.epochs_run = result.state.epoch
        point.result = result
        return point

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(run, enumerate(grid)))
    else:
        points = [run(item) for item in enumerate(grid)]
    ok = [p for p in points if p.error is None]
    if not ok:
        raise NumericError(f"all {len(points)} grid points failed; first error: {points[0].error}")
    ranked = sorted(points, key=lambda p: (p.error is not None, p.best_val_loss if p.error is None else 0.0, p.index))
    best = ranked[0]
    if not keep_models:
        for p in points:
            if p is not best:
                p.result = None
    return GridResult(best, ranked)
