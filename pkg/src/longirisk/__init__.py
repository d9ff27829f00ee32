"""Longitudinal screening risk model: from-scratch autodiff, visit and
history encoders, additive hazard head, training and the evaluation
protocol with history scenarios and pseudo test sets."""

from .cohort import CohortConfig, SubjectTimeline, TrajectorySample, expand_trajectories, generate_cohort
from .errors import LongiRiskError
from .evaluation import MetricReport, ScenarioMask, evaluate, run_experiment, saliency
from .model import ModelConfig, RiskModel, VisitTable, load_model
from .trainer import TrainConfig, grid_search, train

__all__ = [
    "CohortConfig", "SubjectTimeline", "TrajectorySample", "expand_trajectories", "generate_cohort",
    "LongiRiskError", "MetricReport", "ScenarioMask", "evaluate", "run_experiment", "saliency",
    "ModelConfig", "RiskModel", "VisitTable", "load_model", "TrainConfig", "grid_search", "train",
]
