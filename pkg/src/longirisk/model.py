"""The full risk model and the per-cohort visit embedding cache."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .cohort import SLOT_KEYS, TrajectorySample, VisitRecord, preprocess_image
from .errors import CheckpointError, ConfigError, DimensionError
from .layers import Module
from .rng import derive_rng
from .survival import HazardHead
from .temporal import N_SLOTS, TimeAggregator
from .visit_encoder import VisitEncoder


@dataclass
class ModelConfig:
    d_visit: int = 128
    n_heads: int = 4
    dropout: float = 0.25
    encoder_mode: str = "random_projection"
    resolution: tuple[int, int] = (32, 32)
    image_mean: float = 0.3
    image_std: float = 0.35
    image_heads: int = 1
    freeze_image_aggregator: bool = True
    seed: int = 0

    @classmethod
    def from_dict(cls, values: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in values.items() if k in known}
        if "resolution" in values:
            values["resolution"] = tuple(int(v) for v in values["resolution"])
        return cls(**values)


class RiskModel(Module):
    def __init__(self, cfg: ModelConfig):
        if cfg.d_visit % 2:
            raise ConfigError(f"d_visit must be even, got {cfg.d_visit}")
        self.config = cfg
        self.visit_encoder = VisitEncoder(
            cfg.encoder_mode, cfg.d_visit, cfg.resolution, derive_rng(cfg.seed, "visit_encoder"),
            n_heads=cfg.image_heads, frozen=cfg.freeze_image_aggregator,
        )
        self.time_aggregator = TimeAggregator(
            cfg.d_visit, cfg.n_heads, derive_rng(cfg.seed, "time_aggregator"), dropout=cfg.dropout)
        self.survival_head = HazardHead(cfg.d_visit, derive_rng(cfg.seed, "survival_head"))

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def visit_input(self, visit: VisitRecord) -> np.ndarray:
        """(4, *stub input shape) array for one visit."""
        stub = self.visit_encoder.stub
        if stub.mode == "passthrough":
            if visit.kind != "embedding":
                raise DimensionError("passthrough encoder needs precomputed embeddings")
            arr = np.stack([visit.images[k] for k in SLOT_KEYS])
        else:
            if visit.kind != "image":
                raise DimensionError("random projection encoder needs image payloads")
            c = self.config
            arr = np.stack([preprocess_image(visit.images[k], c.resolution, c.image_mean, c.image_std).data
                            for k in SLOT_KEYS])
        if arr.shape[1:] != stub.input_shape:
            raise DimensionError(f"visit payload shape {arr.shape[1:]} != encoder input {stub.input_shape}")
        return arr

    def forward(self, table: VisitTable, idx: np.ndarray, present: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Logits (B, 5) for histories given as visit-table indices."""
        history = table.history_tensor(idx, present)
        m = self.time_aggregator(history, present, train=train, rng=rng)
        return self.survival_head.logits(m)

    def predict(self, table: VisitTable, idx: np.ndarray, present: np.ndarray,
                batch_size: int = 512) -> np.ndarray:
        """Eval-mode risk curves (B, 5)."""
        out = []
        with ag.no_grad():
            for start in range(0, len(idx), batch_size):
                sl = slice(start, start + batch_size)
                out.append(ag.sigmoid(self.forward(table, idx[sl], present[sl])).data)
        return np.concatenate(out) if out else np.zeros((0, 5))

    def save(self, path, metadata: dict | None = None) -> None:
        meta = {"model_config": asdict(self.config)}
        meta.update(metadata or {})
        save_checkpoint(path, self.state_dict(), meta)


def load_model(path) -> tuple[RiskModel, dict]:
    state, meta = load_checkpoint(path)
    if "model_config" not in meta:
        raise CheckpointError(f"{path}: checkpoint carries no model configuration")
    model = RiskModel(ModelConfig.from_dict(meta["model_config"]))
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return model, meta


class VisitTable:
    """Encoded visits for a set of samples.

    The image encoder stub is always frozen, so its outputs are computed
    once. When the image aggregator is frozen too, finished visit
    embeddings are cached; otherwise the aggregator runs inside the graph.

    Visits are encoded one at a time. BLAS kernels change with the number
    of rows, so batching would let a visit's embedding differ in the last
    bit depending on which other visits share the table.
    """

    def __init__(self, model: RiskModel, samples: Sequence[TrajectorySample]):
        self.model = model
        self.index: dict[tuple[str, int], int] = {}
        visits: list[VisitRecord] = []
        for s in samples:
            for v in s.history:
                if v is not None and (v.subject_id, v.visit_year) not in self.index:
                    self.index[(v.subject_id, v.visit_year)] = len(visits)
                    visits.append(v)
        self.visits = visits
        enc = model.visit_encoder
        d = enc.d_visit
        self.stub_embeddings = np.zeros((len(visits), len(SLOT_KEYS), d))
        with ag.no_grad():
            for i, v in enumerate(visits):
                self.stub_embeddings[i] = enc.stub(model.visit_input(v)[None]).data[0]
        self.visit_embeddings = None
        if not any(p.requires_grad for p in enc.parameters()):
            self.visit_embeddings = self.aggregate_cached()

    def aggregate_cached(self) -> np.ndarray:
        enc = self.model.visit_encoder
        out = np.zeros((len(self.visits), enc.d_visit))
        with ag.no_grad():
            for i in range(len(self.visits)):
                out[i] = enc.aggregate(Tensor(self.stub_embeddings[i:i + 1])).data[0]
        return out

    def indices(self, samples: Sequence[TrajectorySample]) -> tuple[np.ndarray, np.ndarray]:
        """(S, 5) visit indices (-1 where absent) and (S, 5) presence."""
        idx = np.full((len(samples), N_SLOTS), -1, dtype=int)
        for i, s in enumerate(samples):
            for j, v in enumerate(s.history):
                if v is not None:
                    idx[i, j] = self.index[(v.subject_id, v.visit_year)]
        return idx, idx >= 0

    def history_tensor(self, idx: np.ndarray, present: np.ndarray) -> Tensor:
        idx = np.where(present, idx, -1)
        if np.any(idx[present] < 0):
            raise DimensionError("a present slot has no encoded visit")
        d = self.model.visit_encoder.d_visit
        if self.visit_embeddings is not None:
            out = np.zeros((*idx.shape, d))
            out[present] = self.visit_embeddings[idx[present]]
            return Tensor(out)
        used = np.unique(idx[present])
        agg = self.model.visit_encoder.aggregate(Tensor(self.stub_embeddings[used]))
        pos = np.full(idx.shape, len(used), dtype=int)
        pos[present] = np.searchsorted(used, idx[present])
        # absent slots gather a trailing zero row
        padded = ag.concat([agg, Tensor(np.zeros((1, d)))], axis=0)
        return ag.getitem(padded, pos)
