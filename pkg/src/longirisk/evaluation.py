"""Evaluation protocol: history scenarios, random pseudo test sets,
per-year ROC AUC, concordance, split-level confidence intervals, and
input-gradient saliency."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cohort import (HORIZON, OFFSETS, SLOT_KEYS, SubjectTimeline, TrajectorySample, expand_all,
                     split_subjects)
from .errors import ConfigError, EvaluationError, LongiRiskError, UndefinedMetricError, UnsupportedModeError
from .metrics import concordance_index, event_times_from_labels, roc_auc
from .model import RiskModel, VisitTable
from .rng import derive_rng, derive_seed
from .temporal import N_SLOTS
from .trainer import TrainConfig, grid_search, make_validation_split

log = logging.getLogger(__name__)

Z95 = 1.959963984540054
CINDEX_DEFINITION = (
    "Harrell concordance on 5-year cumulative risk within each pseudo test set "
    "(one year-1-eligible visit per subject); pairs comparable when the earlier "
    "event is observed and the other subject is known event-free through it; "
    "averaged over repeats"
)


@dataclass(frozen=True)
class ScenarioMask:
    duration: int
    frequency: str = "annual"

    def __post_init__(self):
        if not 0 <= self.duration <= -OFFSETS[0]:
            raise ConfigError(f"history duration must be 0..{-OFFSETS[0]}, got {self.duration}")
        if self.frequency not in ("annual", "biennial"):
            raise ConfigError(f"frequency must be annual or biennial, got {self.frequency!r}")
        if self.frequency == "biennial" and self.duration % 2:
            raise ConfigError(f"biennial history needs an even duration, got {self.duration}")

    @classmethod
    def parse(cls, text: str) -> ScenarioMask:
        """``0``, ``<d>*`` (annual) or ``<d>+`` (biennial)."""
        text = text.strip()
        freq = "annual"
        if text.endswith("+"):
            freq, text = "biennial", text[:-1]
        elif text.endswith("*"):
            text = text[:-1]
        if not text.isdigit():
            raise ConfigError(f"cannot parse history scenario {text!r}")
        return cls(int(text), freq)

    @property
    def label(self) -> str:
        if self.duration == 0:
            return "0"
        return f"{self.duration}{'*' if self.frequency == 'annual' else '+'}"

    def visible_offsets(self) -> tuple[int, ...]:
        step = 1 if self.frequency == "annual" else 2
        return tuple(range(-self.duration, 1, step))

    def present_mask(self) -> np.ndarray:
        visible = set(self.visible_offsets())
        return np.array([off in visible for off in OFFSETS])


TABLE1_SCENARIOS = tuple(ScenarioMask.parse(s) for s in ("0", "1*", "2*", "3*", "4*", "4+"))


def build_pseudo_test_set(samples: Sequence[TrajectorySample], target_year: int,
                          rng: np.random.Generator) -> list[int]:
    """Indices into ``samples``: one uniformly chosen eligible sample per
    subject, eligible meaning the label at ``target_year`` is known."""
    by_subject: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        if s.label_mask[target_year - 1]:
            by_subject.setdefault(s.subject_id, []).append(i)
    if not by_subject:
        raise EvaluationError(f"no subject has a known label at follow-up year {target_year}")
    return [cands[int(rng.integers(len(cands)))] for _, cands in sorted(by_subject.items())]


@dataclass
class ScenarioResult:
    scenario: str
    auc: list[float]  # mean over defined repeats, per follow-up year
    auc_defined: list[int]
    auc_undefined: list[int]
    cindex: float
    cindex_defined: int
    cindex_undefined: int
    auc_repeats: list[list[float]] = field(default_factory=list, repr=False)
    cindex_repeats: list[float] = field(default_factory=list, repr=False)


def _mean_over_repeats(values: list[float], undefined: int, what: str) -> float:
    total = len(values) + undefined
    if undefined * 2 > total:
        raise EvaluationError(f"{what}: {undefined} of {total} pseudo test sets left the metric undefined "
                              "(too few subjects or diagnoses at this horizon)")
    if undefined:
        log.info("%s: %d of %d pseudo test sets undefined and excluded", what, undefined, total)
    return float(np.mean(values))


def score_samples(model: RiskModel, samples: Sequence[TrajectorySample], scenario: ScenarioMask,
                  table: VisitTable | None = None) -> np.ndarray:
    """Eval-mode risk curves with each history restricted to the scenario."""
    table = table or VisitTable(model, samples)
    idx, present = table.indices(samples)
    return model.predict(table, idx, present & scenario.present_mask()[None, :])


def evaluate(model: RiskModel, test_timelines: Sequence[SubjectTimeline], scenario: ScenarioMask,
             n_repeats: int = 100, seed: int = 0, table: VisitTable | None = None,
             samples: Sequence[TrajectorySample] | None = None) -> ScenarioResult:
    """Mean ROC AUC per follow-up year and mean C-index over random pseudo
    test sets.

    Pseudo test sets are drawn from streams keyed by ``seed`` and the
    follow-up year only, so every scenario sees the same sets.
    """
    samples = list(samples) if samples is not None else expand_all(test_timelines)
    risks = score_samples(model, samples, scenario, table)
    labels = np.array([s.labels for s in samples], dtype=int).reshape(-1, HORIZON)
    mask = np.array([s.label_mask for s in samples], dtype=bool).reshape(-1, HORIZON)
    aucs, defined, undefined, repeats = [], [], [], []
    for k in range(1, HORIZON + 1):
        rng = derive_rng(seed, "pseudo-test", k)
        values, bad = [], 0
        for _ in range(n_repeats):
            chosen = build_pseudo_test_set(samples, k, rng)
            try:
                values.append(roc_auc(risks[chosen, k - 1], labels[chosen, k - 1]))
            except UndefinedMetricError:
                bad += 1
        aucs.append(_mean_over_repeats(values, bad, f"{scenario.label} year {k} ROC AUC"))
        defined.append(len(values))
        undefined.append(bad)
        repeats.append(values)
    times, events = event_times_from_labels(labels, mask)
    rng = derive_rng(seed, "pseudo-test", "cindex")
    values, bad = [], 0
    for _ in range(n_repeats):
        chosen = build_pseudo_test_set(samples, 1, rng)
        try:
            values.append(concordance_index(risks[chosen, HORIZON - 1], times[chosen], events[chosen]))
        except UndefinedMetricError:
            bad += 1
    cindex = _mean_over_repeats(values, bad, f"{scenario.label} C-index")
    return ScenarioResult(scenario.label, aucs, defined, undefined, cindex, len(values), bad, repeats, values)


# ---------------------------------------------------------------- reports

@dataclass
class Cell:
    mean: float
    lo: float
    hi: float
    n: int

    @classmethod
    def from_values(cls, values: Sequence[float]) -> Cell:
        values = np.asarray(values, dtype=float)
        m = float(values.mean())
        if len(values) < 2:
            return cls(m, m, m, len(values))
        half = Z95 * float(values.std(ddof=1)) / math.sqrt(len(values))
        return cls(m, max(0.0, m - half), min(1.0, m + half), len(values))

    def text(self, ci: bool = True) -> str:
        if not ci:
            return f"{self.mean:.2f}"
        return f"{self.mean:.2f} ({self.lo:.2f}-{self.hi:.2f})"


@dataclass
class ReportRow:
    scenario: str
    cindex: Cell
    auc: list[Cell]


@dataclass
class MetricReport:
    rows: list[ReportRow]
    provenance: dict = field(default_factory=dict)
    degenerate_ci: bool = False
    failures: list[dict] = field(default_factory=list)

    def row(self, scenario: str) -> ReportRow:
        for r in self.rows:
            if r.scenario == scenario:
                return r
        raise KeyError(scenario)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> MetricReport:
        rows = [ReportRow(r["scenario"], Cell(**r["cindex"]), [Cell(**c) for c in r["auc"]]) for r in d["rows"]]
        return cls(rows, d.get("provenance", {}), d.get("degenerate_ci", False), d.get("failures", []))

    def to_table(self) -> str:
        """Delimited table: one row per scenario, C-index then follow-up years."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["history", "c_index", *[f"{k}-year" for k in range(1, HORIZON + 1)]])
        ci = not self.degenerate_ci
        for r in self.rows:
            writer.writerow([r.scenario, r.cindex.text(ci), *[c.text(ci) for c in r.auc]])
        return buf.getvalue()


def report_from_results(per_split: Sequence[Sequence[ScenarioResult]], provenance: dict,
                        failures: list[dict] | None = None) -> MetricReport:
    """Aggregate split-level scenario results into mean and 95% CI cells."""
    if not per_split:
        raise EvaluationError("no successful splits to report")
    labels = [r.scenario for r in per_split[0]]
    rows = []
    for j, label in enumerate(labels):
        results = [split[j] for split in per_split]
        rows.append(ReportRow(
            label,
            Cell.from_values([r.cindex for r in results]),
            [Cell.from_values([r.auc[k] for r in results]) for k in range(HORIZON)],
        ))
    degenerate = len(per_split) < 2
    if degenerate:
        log.warning("only %d split(s): confidence intervals are degenerate", len(per_split))
    return MetricReport(rows, provenance, degenerate, list(failures or []))


def report_from_repeats(results: Sequence[ScenarioResult], provenance: dict) -> MetricReport:
    """Report for a single trained model: the interval is taken over the
    pseudo test set repeats instead of over splits."""
    rows = [ReportRow(r.scenario, Cell.from_values(r.cindex_repeats),
                      [Cell.from_values(v) for v in r.auc_repeats]) for r in results]
    n = min(min(len(v) for v in r.auc_repeats + [r.cindex_repeats]) for r in results)
    degenerate = n < 2
    if degenerate:
        log.warning("fewer than 2 defined pseudo test sets per cell: confidence intervals suppressed")
    provenance = dict(provenance, ci_method="normal approximation over pseudo test set repeats, z=1.96",
                      cindex_definition=CINDEX_DEFINITION)
    return MetricReport(rows, provenance, degenerate)


def run_experiment(
    timelines: Sequence[SubjectTimeline],
    n_splits: int = 10,
    grid: Sequence[TrainConfig] = (TrainConfig(),),
    scenarios: Sequence[ScenarioMask] = TABLE1_SCENARIOS,
    n_repeats: int = 100,
    seed: int = 0,
    jobs: int = 1,
    progress: Callable[[str], None] | None = None,
    on_split: Callable[[int, RiskModel, list[SubjectTimeline]], None] | None = None,
) -> MetricReport:
    """Repeated stratified 80/20 splits; per split grid-search on a 75/25
    fit/validation partition, then evaluate every scenario on the test part.

    ``on_split(split, model, test_timelines)`` is called with each split's
    winning model, for callers that want to inspect it further.
    """
    if n_splits < 1:
        raise ConfigError("n_splits must be at least 1")
    scenarios = sorted(set(scenarios), key=lambda s: (s.duration, s.frequency))
    required = math.ceil(0.8 * n_splits)
    per_split, failures = [], []
    for s in range(n_splits):
        try:
            train_tl, test_tl = split_subjects(timelines, 0.8, True, derive_rng(seed, "split", s))
            fit_tl, val_tl = make_validation_split(train_tl, derive_rng(seed, "validation", s))
            split_grid = [replace(cfg, seed=derive_seed(seed, "train", s, i) % 2**32)
                          for i, cfg in enumerate(grid)]
            found = grid_search(split_grid, expand_all(fit_tl), expand_all(val_tl), jobs=jobs)
            model = found.best.result.model
            test_samples = expand_all(test_tl)
            table = VisitTable(model, test_samples)
            eval_seed = derive_seed(seed, "evaluate", s)
            per_split.append([evaluate(model, test_tl, sc, n_repeats, eval_seed, table, test_samples)
                              for sc in scenarios])
            if on_split:
                on_split(s, model, test_tl)
            if progress:
                progress(f"split {s + 1}/{n_splits} done (best grid point {found.best.index})")
        except LongiRiskError as exc:
            failures.append({"split": s, "error": f"{type(exc).__name__}: {exc}"})
            log.warning("split %d failed: %s", s, exc)
    if len(per_split) < required:
        raise EvaluationError(f"only {len(per_split)} of {n_splits} splits succeeded; {required} required")
    provenance = {
        "master_seed": seed,
        "n_splits": n_splits,
        "n_successful_splits": len(per_split),
        "n_repeats": n_repeats,
        "grid": [asdict(c) for c in grid],
        "scenarios": [sc.label for sc in scenarios],
        "ci_method": "normal approximation over split-level means, z=1.96",
        "cindex_definition": CINDEX_DEFINITION,
    }
    # JSON-native values (tuples become lists) so reports round-trip exactly
    provenance = json.loads(json.dumps(provenance))
    return report_from_results(per_split, provenance, failures)


# ---------------------------------------------------------------- saliency

def saliency(model: RiskModel, sample: TrajectorySample, target_year: int,
             scenario: ScenarioMask | None = None) -> np.ndarray:
    """|d risk_k / d pixel| for the four images of the present visit.

    Channel gradients are summed (the three channels replicate one pixel)
    before taking magnitudes; each map is scaled to [0, 1] by the largest
    value across the four images. Returns (4, H, W) in ``SLOT_KEYS`` order.
    """
    if model.visit_encoder.stub.mode != "random_projection" or sample.now.kind != "image":
        raise UnsupportedModeError("saliency needs image payloads and the random projection encoder")
    if not 1 <= target_year <= HORIZON:
        raise ConfigError(f"target year must be 1..{HORIZON}")
    present = np.array(sample.present)
    if scenario is not None:
        present &= scenario.present_mask()
    table = VisitTable(model, [sample])
    idx, _ = table.indices([sample])
    with ag.no_grad():
        history = table.history_tensor(idx, present[None]).data[0]
    image = Tensor(model.visit_input(sample.now)[None], requires_grad=True)
    now_embedding = model.visit_encoder(image)
    rows = [Tensor(history[j]) for j in range(N_SLOTS - 1)] + [now_embedding.reshape(model.config.d_visit)]
    stacked = ag.stack(rows).reshape(1, N_SLOTS, model.config.d_visit)
    m = model.time_aggregator(stacked, present[None], train=False)
    risk = ag.sigmoid(model.survival_head.logits(m))
    ag.tsum(risk[0, target_year - 1]).backward()
    grad = np.abs(image.grad[0].sum(axis=1))
    top = grad.max()
    return grad / top if top > 0 else np.zeros_like(grad)


def top_fraction_overlap(saliency_map: np.ndarray, support: np.ndarray, fraction: float = 0.05) -> float:
    """Share of the top ``fraction`` most salient pixels lying inside ``support``."""
    flat = saliency_map.reshape(-1)
    n_top = max(1, int(round(fraction * flat.size)))
    top = np.argsort(-flat, kind="stable")[:n_top]
    return float(support.reshape(-1)[top].mean())


def lesion_overlap(model: RiskModel, timeline: SubjectTimeline, sample: TrajectorySample,
                   target_year: int = HORIZON, fraction: float = 0.05) -> float:
    """Mean top-pixel overlap with the planted lesion over its two views."""
    if timeline.lesion is None:
        raise EvaluationError(f"subject {timeline.subject_id} has no planted lesion")
    maps = saliency(model, sample, target_year)
    support = timeline.lesion.support(maps.shape[1:])
    views = [i for i, key in enumerate(SLOT_KEYS) if key[0] == timeline.lesion.side]
    return float(np.mean([top_fraction_overlap(maps[i], support, fraction) for i in views]))
