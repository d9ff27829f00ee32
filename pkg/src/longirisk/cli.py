"""Command line entry point.

    longirisk generate   --out DIR [--subjects N --seed S ...]
    longirisk train      --cohort DIR --out DIR [--grid full ...]
    longirisk evaluate   --checkpoint F --cohort DIR --out DIR [--scenarios 0,4*,4+]
    longirisk saliency   --checkpoint F --cohort DIR --subjects S00001,... --out DIR
    longirisk experiment --cohort DIR --out DIR [--splits 10 --repeats 100]
    longirisk report     --input report.json

Settings resolve as: command-line flag, then the ``--config`` YAML file
(flat key: value pairs named like the flags, with underscores), then the
built-in default. Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
from dataclasses import asdict, fields, replace
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .cohort import (HORIZON, SLOT_KEYS, CohortConfig, cohort_fingerprint, expand_all, expand_trajectories,
                     followup_table, generate_cohort, load_cohort, payload_kind, split_subjects,
                     write_cohort_archive)
from .errors import CheckpointError, ConfigError, LongiRiskError, UnsupportedModeError, ValidationError
from .evaluation import ScenarioMask, evaluate, report_from_repeats, run_experiment, saliency, MetricReport
from .model import RiskModel, VisitTable, load_model
from .rng import derive_rng, make_rng
from .trainer import TrainConfig, full_grid, grid_search, make_validation_split

log = logging.getLogger("longirisk")

OUTPUT_ROOT_ENV = "LONGIRISK_OUTPUT_ROOT"
TABLE1 = "0,1*,2*,3*,4*,4+"

# (flag, dest, type, default, help). Cohort and training flags map onto
# CohortConfig / TrainConfig fields of the same name.
COMMON = [
    ("--seed", "seed", int, 0, "master seed"),
    ("--jobs", "jobs", int, 1, "parallel grid points"),
]
COHORT_FLAGS = [
    ("--subjects", "n_subjects", int, 300, "number of subjects"),
    ("--first-year", "first_year", int, 2008, "first screening year"),
    ("--years", "n_years", int, 9, "screening years available"),
    ("--attendance", "attendance", float, 0.85, "per-year attendance probability"),
    ("--incidence", "incidence", float, 0.3, "fraction of subjects diagnosed"),
    ("--max-followup", "max_followup", int, 5, "healthy follow-up beyond the last visit, upper bound (years)"),
    ("--max-diagnosis-delay", "max_diagnosis_delay", int, 4, "diagnosis delay after the last visit, upper bound"),
    ("--lesion-onset", "lesion_onset", int, 8, "years before diagnosis the lesion appears"),
    ("--lesion-base", "lesion_base", float, 0.5, "lesion amplitude at onset"),
    ("--lesion-growth", "lesion_growth", float, 1.25, "per-year lesion growth factor"),
    ("--lesion-clinical", "lesion_clinical", float, 5.0, "amplitude within a year of diagnosis"),
    ("--lesion-sigma", "lesion_sigma", float, 1.5, "lesion blob width (pixels)"),
    ("--lesion-jitter", "lesion_jitter", float, 1.5, "lesion position jitter (pixels)"),
    ("--spot-noise", "spot_noise", float, 1.0, "sd of the transient per-visit spot"),
    ("--texture-sd", "texture_sd", float, 0.15, "tissue texture sd"),
    ("--noise", "noise", float, 0.05, "pixel noise sd"),
    ("--resolution", "resolution", str, "32x32", "image size HxW"),
]
TRAIN_FLAGS = [
    ("--lr", "lr", float, 1e-3, "Adam learning rate"),
    ("--dropout", "dropout", float, 0.25, "dropout in the time aggregator"),
    ("--d-visit", "d_visit", int, 128, "visit embedding width"),
    ("--heads", "n_heads", int, 4, "attention heads in the time aggregator"),
    ("--l2", "l2", float, 1e-5, "L2 weight decay"),
    ("--batch-size", "batch_size", int, 32, "minibatch size"),
    ("--epochs", "max_epochs", int, 100, "maximum epochs"),
    ("--patience", "patience", int, 10, "early stopping patience (epochs)"),
    ("--drop-prob", "drop_prob", float, 0.3, "history visit drop probability during training"),
    ("--no-augment", "no_augment", bool, False, "disable history drop augmentation"),
    ("--encoder-mode", "encoder_mode", str, "random_projection", "random_projection or passthrough"),
    ("--image-mean", "image_mean", float, 0.3, "pixel normalisation mean"),
    ("--image-std", "image_std", float, 0.35, "pixel normalisation std"),
    ("--unfreeze-image-aggregator", "unfreeze_image_aggregator", bool, False,
     "train the per-visit conditioning/attention/pooling layers"),
    ("--grid", "grid", str, "none", "none or full (27 grid points)"),
    ("--test-fraction", "test_fraction", float, 0.2, "held-out test fraction"),
]
EVAL_FLAGS = [
    ("--scenarios", "scenarios", str, TABLE1, "comma-separated history scenarios: 0, <d>* annual, <d>+ biennial"),
    ("--repeats", "repeats", int, 100, "pseudo test sets per follow-up year"),
    ("--all-subjects", "all_subjects", bool, False, "evaluate every subject, not just the held-out test split"),
]
SALIENCY_FLAGS = [
    ("--subjects", "subjects", str, None, "comma-separated subject ids"),
    ("--year", "year", int, 1, "follow-up year whose risk is differentiated"),
    ("--visit-year", "visit_year", int, None, "reference visit (default: the subject's last visit)"),
]
EXPERIMENT_FLAGS = [
    ("--splits", "n_splits", int, 10, "repeated 80/20 splits"),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add(parser, specs):
    for flag, dest, typ, default, text in specs:
        shown = f"{text} (default: {default})"
        if typ is bool:
            parser.add_argument(flag, dest=dest, action="store_const", const=True, default=None, help=shown)
        else:
            parser.add_argument(flag, dest=dest, type=typ, default=None, help=shown)


def _add_io(parser, *names):
    if "cohort" in names:
        parser.add_argument("--cohort", default=None, help="cohort directory or manifest.csv")
    if "checkpoint" in names:
        parser.add_argument("--checkpoint", default=None, help="model checkpoint (.npz)")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<command> or runs/<command>)")
    parser.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    parser.add_argument("--config", default=None, help="YAML file of flat key: value settings")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="longirisk", description="Longitudinal screening risk model pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a synthetic cohort archive")
    _add(p, COMMON[:1] + COHORT_FLAGS)
    _add_io(p)

    p = sub.add_parser("train", help="train one model (or a grid) on a cohort")
    _add(p, COMMON + TRAIN_FLAGS)
    _add_io(p, "cohort")

    p = sub.add_parser("evaluate", help="score a checkpoint under history scenarios")
    _add(p, COMMON[:1] + EVAL_FLAGS)
    _add_io(p, "cohort", "checkpoint")

    p = sub.add_parser("saliency", help="input-gradient maps for the current visit")
    _add(p, SALIENCY_FLAGS)
    _add_io(p, "cohort", "checkpoint")

    p = sub.add_parser("experiment", help="repeated splits: train and evaluate every scenario")
    _add(p, COMMON + TRAIN_FLAGS + EXPERIMENT_FLAGS + EVAL_FLAGS[:2])
    _add_io(p, "cohort")

    p = sub.add_parser("report", help="render a structured report as the scenario table")
    p.add_argument("--input", required=True, help="report.json written by evaluate or experiment")
    p.add_argument("--format", choices=("csv", "text"), default="text", help="output format (default: text)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


COMMAND_SPECS = {
    "generate": COMMON[:1] + COHORT_FLAGS,
    "train": COMMON + TRAIN_FLAGS,
    "evaluate": COMMON[:1] + EVAL_FLAGS,
    "saliency": SALIENCY_FLAGS,
    "experiment": COMMON + TRAIN_FLAGS + EXPERIMENT_FLAGS + EVAL_FLAGS[:2],
    "report": [],
}
PATH_KEYS = ("cohort", "checkpoint", "out")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < flags for the chosen command."""
    specs = COMMAND_SPECS[args.command]
    settings = {dest: default for _, dest, _, default, _ in specs}
    settings.update({k: None for k in PATH_KEYS if hasattr(args, k)})
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = yaml.safe_load(Path(config_path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        if not isinstance(loaded, dict) or any(isinstance(v, (dict, list)) for v in loaded.values()):
            raise ConfigError(f"{config_path}: expected flat key: value pairs")
        unknown = set(loaded) - set(settings)
        if unknown:
            raise ConfigError(f"{config_path}: unknown keys {sorted(unknown)} for '{args.command}'")
        types = {dest: typ for _, dest, typ, _, _ in specs}
        for key, value in loaded.items():
            typ = types.get(key, str)
            try:
                settings[key] = typ(value) if value is not None and typ is not bool else value
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{config_path}: bad value for {key}: {value!r}") from exc
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _resolution(text) -> tuple[int, int]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    try:
        h, w = str(text).lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ConfigError(f"resolution must look like 32x32, got {text!r}") from None


def cohort_config(s: dict) -> CohortConfig:
    names = {f.name for f in fields(CohortConfig)}
    values = {k: v for k, v in s.items() if k in names}
    values["resolution"] = _resolution(values["resolution"])
    cfg = CohortConfig.from_dict(values)
    cfg.validate()
    return cfg


def train_config(s: dict, resolution: tuple[int, int]) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    values = {k: v for k, v in s.items() if k in names}
    values["augment"] = not s["no_augment"]
    values["freeze_image_aggregator"] = not s["unfreeze_image_aggregator"]
    values["resolution"] = resolution
    cfg = TrainConfig.from_dict(values)
    if s["grid"] not in ("none", "full"):
        raise ConfigError(f"--grid must be none or full, got {s['grid']!r}")
    cfg.validate(grid_mode=s["grid"] == "full")
    if not 0.0 < s["test_fraction"] < 1.0:
        raise ConfigError("test fraction must lie strictly between 0 and 1")
    return cfg


def parse_scenarios(text: str) -> list[ScenarioMask]:
    items = [t for t in str(text).split(",") if t.strip()]
    if not items:
        raise ConfigError("no scenarios given")
    return [ScenarioMask.parse(t) for t in items]


def output_dir(s: dict, command: str, force: bool) -> Path:
    out = s.get("out")
    if out is None:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / command
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty; pass --force to write into it")
    return out


def _require(s: dict, *keys):
    missing = [k for k in keys if not s.get(k)]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def write_manifest(out: Path, command: str, settings: dict, started: str, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config_file": settings.get("config"),
        "master_seed": settings.get("seed"),
        "settings": {k: v for k, v in settings.items() if k != "config"},
        "inputs": {k: settings.get(k) for k in ("cohort", "checkpoint") if settings.get(k)},
        "output": str(out),
        "tool_version": _version(),
        "started": started,
        "finished": _now(),
    }
    manifest.update(extra or {})
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def summary_rows(timelines) -> list[dict]:
    """Exam counts per follow-up horizon, shaped like the usual cohort table."""
    table = followup_table(timelines)
    n_exams = sum(len(t.visits) for t in timelines)
    rows = [{"n_years": n, "exams_with_followup": table["min_followup"][n - 1],
             "exams_followed_by_cancer": table["cancer_within"][n - 1]} for n in range(1, HORIZON + 1)]
    log.info("%d subjects, %d exams, %d diagnosed subjects", len(timelines), n_exams,
             sum(t.diagnosis_year is not None for t in timelines))
    return rows


# ---------------------------------------------------------------- commands

def cmd_generate(s: dict, force: bool) -> int:
    cfg = cohort_config(s)
    out = output_dir(s, "generate", force)
    started = _now()
    timelines = generate_cohort(cfg, make_rng(cfg.seed))
    out.mkdir(parents=True, exist_ok=True)
    write_cohort_archive(timelines, out)
    rows = summary_rows(timelines)
    _write_rows(out / "summary.csv", rows)
    n_exams = sum(len(t.visits) for t in timelines)
    n_dx = sum(t.diagnosis_year is not None for t in timelines)
    print(f"subjects: {len(timelines)}  exams: {n_exams}  diagnosed subjects: {n_dx}")
    print("n  exams_with_n_years_followup  exams_followed_by_cancer_within_n_years")
    for r in rows:
        print(f"{r['n_years']}  {r['exams_with_followup']:>28}  {r['exams_followed_by_cancer']:>39}")
    write_manifest(out, "generate", s, started,
                   {"cohort_config": asdict(cfg), "cohort_fingerprint": cohort_fingerprint(timelines)})
    return 0


def _load(path) -> list:
    if not path:
        raise ConfigError("missing required setting: --cohort")
    try:
        return load_cohort(path)
    except OSError as exc:
        raise ValidationError(f"cannot read cohort {path}: {exc}") from exc


def _cohort_resolution(timelines, encoder_mode: str) -> tuple[int, int]:
    kind = payload_kind(timelines)
    first = timelines[0].visits[0].images[SLOT_KEYS[0]]
    if kind == "embedding":
        if encoder_mode != "passthrough":
            raise ConfigError("cohort holds precomputed embeddings; use --encoder-mode passthrough")
        return (32, 32)
    if encoder_mode == "passthrough":
        raise ConfigError("passthrough encoder mode needs a cohort of precomputed embeddings")
    return first.shape


def cmd_train(s: dict, force: bool) -> int:
    _require(s, "cohort")
    base = train_config(s, (32, 32))
    timelines = _load(s["cohort"])
    kind = payload_kind(timelines)
    resolution = _cohort_resolution(timelines, base.encoder_mode)
    cfg = replace(base, resolution=tuple(resolution))
    if kind == "embedding":
        cfg = replace(cfg, d_visit=int(timelines[0].visits[0].images[SLOT_KEYS[0]].size))
    grid = full_grid(cfg) if s["grid"] == "full" else [cfg]
    for g in grid:
        g.validate(grid_mode=s["grid"] == "full")
    out = output_dir(s, "train", force)
    started = _now()
    train_tl, test_tl = split_subjects(timelines, 1.0 - s["test_fraction"], True, derive_rng(s["seed"], "test-split"))
    fit_tl, val_tl = make_validation_split(train_tl, derive_rng(s["seed"], "validation-split"))
    found = grid_search(grid, expand_all(fit_tl), expand_all(val_tl), jobs=s["jobs"])
    best = found.best
    out.mkdir(parents=True, exist_ok=True)
    if s["grid"] == "full":
        _write_rows(out / "grid_results.csv", found.table_rows())
    _write_rows(out / "train_log.csv", best.result.state.history)
    meta = {
        "train_config": asdict(best.config),
        "cohort_fingerprint": cohort_fingerprint(timelines),
        "payload_kind": kind,
        "test_subjects": sorted(t.subject_id for t in test_tl),
        "validation_subjects": sorted(t.subject_id for t in val_tl),
        "best_epoch": best.result.state.best_epoch,
        "best_validation_loss": best.best_val_loss,
    }
    best.result.model.save(out / "model.npz", meta)
    print(f"best grid point {best.index}: validation loss {best.best_val_loss:.5f} "
          f"at epoch {best.result.state.best_epoch} of {best.epochs_run}")
    write_manifest(out, "train", s, started, {"checkpoint": str(out / "model.npz")})
    return 0


def _load_checkpoint(path, timelines) -> tuple[RiskModel, dict]:
    if not path:
        raise ConfigError("missing required setting: --checkpoint")
    if not Path(path).is_file():
        raise CheckpointError(f"checkpoint {path} not found")
    model, meta = load_model(path)
    kind = payload_kind(timelines)
    mc = model.config
    first = timelines[0].visits[0].images[SLOT_KEYS[0]]
    if kind == "embedding":
        if mc.encoder_mode != "passthrough" or first.size != mc.d_visit:
            raise CheckpointError(f"checkpoint expects {mc.encoder_mode} inputs of width {mc.d_visit}; "
                                  f"cohort holds embeddings of width {first.size}")
    elif mc.encoder_mode != "random_projection" or tuple(first.shape) != tuple(mc.resolution):
        raise CheckpointError(f"checkpoint expects {mc.encoder_mode} inputs at {tuple(mc.resolution)}; "
                              f"cohort holds images of shape {first.shape}")
    return model, meta


def _write_report(out: Path, report: MetricReport) -> None:
    (out / "report.csv").write_text(report.to_table(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_table(), end="")


def cmd_evaluate(s: dict, force: bool) -> int:
    _require(s, "cohort", "checkpoint")
    scenarios = parse_scenarios(s["scenarios"])
    if s["repeats"] < 1:
        raise ConfigError("--repeats must be at least 1")
    timelines = _load(s["cohort"])
    model, meta = _load_checkpoint(s["checkpoint"], timelines)
    if not s["all_subjects"] and meta.get("test_subjects"):
        wanted = set(meta["test_subjects"])
        timelines = [t for t in timelines if t.subject_id in wanted]
        if not timelines:
            raise ValidationError("none of the checkpoint's test subjects are in this cohort; use --all-subjects")
    out = output_dir(s, "evaluate", force)
    started = _now()
    samples = expand_all(timelines)
    table = VisitTable(model, samples)
    results = [evaluate(model, timelines, sc, s["repeats"], s["seed"], table, samples) for sc in scenarios]
    provenance = {"master_seed": s["seed"], "n_repeats": s["repeats"], "n_splits": 1,
                  "checkpoint": str(s["checkpoint"]), "n_subjects": len(timelines),
                  "scenarios": [sc.label for sc in scenarios]}
    report = report_from_repeats(results, provenance)
    if report.degenerate_ci:
        log.warning("confidence intervals suppressed: a single pseudo test set per cell")
    out.mkdir(parents=True, exist_ok=True)
    _write_report(out, report)
    write_manifest(out, "evaluate", s, started)
    return 0


def _png(path: Path, arr: np.ndarray) -> None:
    lo, hi = float(arr.min()), float(arr.max())
    scaled = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    Image.fromarray(np.round(scaled * 255).astype(np.uint8), mode="L").save(path)


def cmd_saliency(s: dict, force: bool) -> int:
    _require(s, "cohort", "checkpoint", "subjects")
    if not 1 <= s["year"] <= HORIZON:
        raise ConfigError(f"--year must be 1..{HORIZON}")
    timelines = _load(s["cohort"])
    if payload_kind(timelines) != "image":
        raise UnsupportedModeError("saliency needs an image cohort, not precomputed embeddings")
    model, _ = _load_checkpoint(s["checkpoint"], timelines)
    by_id = {t.subject_id: t for t in timelines}
    wanted = [x.strip() for x in s["subjects"].split(",") if x.strip()]
    missing = [x for x in wanted if x not in by_id]
    if missing:
        raise ValidationError(f"subject(s) {missing} not found; available: {', '.join(sorted(by_id))}")
    picks = []
    for sid in wanted:
        samples = expand_trajectories(by_id[sid])
        if s["visit_year"] is not None:
            samples = [x for x in samples if x.now_year == s["visit_year"]]
            if not samples:
                raise ValidationError(f"subject {sid} has no visit in {s['visit_year']}")
        picks.append(samples[-1])
    out = output_dir(s, "saliency", force)
    started = _now()
    out.mkdir(parents=True, exist_ok=True)
    for sample in picks:
        maps = saliency(model, sample, s["year"])
        folder = out / sample.subject_id
        folder.mkdir(exist_ok=True)
        for i, key in enumerate(SLOT_KEYS):
            _png(folder / f"{sample.now_year}_{key}_saliency.png", maps[i])
            _png(folder / f"{sample.now_year}_{key}_input.png", sample.now.images[key])
    print(f"wrote {4 * len(picks)} saliency maps for {len(picks)} subject(s) to {out}")
    write_manifest(out, "saliency", s, started)
    return 0


def cmd_experiment(s: dict, force: bool) -> int:
    _require(s, "cohort")
    scenarios = parse_scenarios(s["scenarios"])
    base = train_config(s, (32, 32))
    timelines = _load(s["cohort"])
    cfg = replace(base, resolution=tuple(_cohort_resolution(timelines, base.encoder_mode)))
    grid = full_grid(cfg) if s["grid"] == "full" else [cfg]
    out = output_dir(s, "experiment", force)
    started = _now()
    report = run_experiment(timelines, s["n_splits"], grid, scenarios, s["repeats"], s["seed"], s["jobs"],
                            progress=lambda msg: log.info(msg))
    report.provenance["cohort_fingerprint"] = cohort_fingerprint(timelines)
    out.mkdir(parents=True, exist_ok=True)
    _write_report(out, report)
    write_manifest(out, "experiment", s, started)
    return 0


def cmd_report(args) -> int:
    try:
        report = MetricReport.from_dict(json.loads(Path(args.input).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot read report {args.input}: {exc}") from exc
    table = report.to_table()
    if args.format == "csv":
        print(table, end="")
        return 0
    rows = list(csv.reader(table.splitlines()))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    if report.degenerate_ci:
        print("(confidence intervals suppressed)")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "saliency": cmd_saliency,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "report":
            return cmd_report(args)
        settings = resolve_settings(args)
        settings["config"] = getattr(args, "config", None)
        return COMMANDS[args.command](settings, args.force)
    except LongiRiskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
