"""Longitudinal screening cohorts.

Covers the record types, the synthetic cohort simulator, trajectory
expansion into censoring-aware samples, subject-level splits, image
preprocessing, and the manifest / archive file formats.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .autograd import Tensor
from .errors import ConfigError, FormatError, ManifestParseError, SplitError, ValidationError

SLOT_KEYS = ("L_CC", "L_MLO", "R_CC", "R_MLO")
SLOTS = (("left", "CC"), ("left", "MLO"), ("right", "CC"), ("right", "MLO"))
OFFSETS = (-4, -3, -2, -1, 0)
HORIZON = 5
MANIFEST_COLUMNS = ("subject_id", "visit_year", *SLOT_KEYS, "diagnosis_year", "last_followup_year")


@dataclass(eq=False)
class VisitRecord:
    subject_id: str
    visit_year: int
    images: dict[str, np.ndarray]
    # planted lesion amplitude; ground truth of synthetic cohorts only
    lesion_amplitude: float = 0.0

    def __post_init__(self):
        if set(self.images) != set(SLOT_KEYS):
            raise ValidationError(
                f"{self.subject_id}/{self.visit_year}: need slots {SLOT_KEYS}, got {sorted(self.images)}")
        ndims = {np.ndim(v) for v in self.images.values()}
        if len(ndims) != 1 or ndims.pop() not in (1, 2):
            raise ValidationError(
                f"{self.subject_id}/{self.visit_year}: slots mix images and embeddings")
        shapes = {np.shape(v) for v in self.images.values()}
        if len(shapes) != 1:
            raise ValidationError(f"{self.subject_id}/{self.visit_year}: slot shapes differ {shapes}")

    @property
    def kind(self) -> str:
        return "image" if np.ndim(self.images[SLOT_KEYS[0]]) == 2 else "embedding"

    def __eq__(self, other):
        if not isinstance(other, VisitRecord):
            return NotImplemented
        return (self.subject_id == other.subject_id and self.visit_year == other.visit_year
                and all(np.array_equal(self.images[k], other.images[k]) for k in SLOT_KEYS))


@dataclass(frozen=True)
class Lesion:
    side: str  # "L" or "R"
    row: float
    col: float
    sigma: float

    def support(self, shape: tuple[int, int], radius: float = 2.0) -> np.ndarray:
        rr, cc = np.mgrid[: shape[0], : shape[1]]
        return (rr - self.row) ** 2 + (cc - self.col) ** 2 <= (radius * self.sigma) ** 2


@dataclass
class SubjectTimeline:
    subject_id: str
    visits: list[VisitRecord]
    diagnosis_year: int | None
    last_followup_year: int
    lesion: Lesion | None = field(default=None, compare=False)

    def validate(self) -> None:
        years = [v.visit_year for v in self.visits]
        if not years:
            raise ValidationError(f"subject {self.subject_id}: no visits")
        if years != sorted(set(years)):
            raise ValidationError(f"subject {self.subject_id}: visit years not sorted and unique")
        if any(v.subject_id != self.subject_id for v in self.visits):
            raise ValidationError(f"subject {self.subject_id}: visit belongs to another subject")
        if self.diagnosis_year is not None and self.diagnosis_year < years[0]:
            raise ValidationError(
                f"subject {self.subject_id}: diagnosis {self.diagnosis_year} precedes first visit {years[0]}")
        if self.last_followup_year < years[-1]:
            raise ValidationError(
                f"subject {self.subject_id}: follow-up {self.last_followup_year} ends before last visit {years[-1]}")
        kinds = {v.kind for v in self.visits}
        if len(kinds) > 1:
            raise ValidationError(f"subject {self.subject_id}: mixes image and embedding visits")

    @property
    def diagnosed(self) -> bool:
        return self.diagnosis_year is not None


@dataclass(frozen=True)
class TrajectorySample:
    subject_id: str
    now_year: int
    history: tuple  # VisitRecord | None per offset -4..0
    labels: tuple[int, ...]
    label_mask: tuple[bool, ...]

    @property
    def present(self) -> tuple[bool, ...]:
        return tuple(v is not None for v in self.history)

    @property
    def now(self) -> VisitRecord:
        return self.history[-1]


@dataclass
class CohortConfig:
    n_subjects: int = 300
    first_year: int = 2008
    n_years: int = 9
    attendance: float = 0.85
    incidence: float = 0.3
    max_followup: int = 5
    max_diagnosis_delay: int = 4
    lesion_onset: int = 8
    lesion_base: float = 0.5
    lesion_growth: float = 1.25
    lesion_clinical: float = 5.0
    lesion_sigma: float = 1.5
    lesion_jitter: float = 1.5
    spot_noise: float = 1.0
    texture_sd: float = 0.15
    noise: float = 0.05
    resolution: tuple[int, int] = (32, 32)
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise ConfigError("n_subjects must be at least 1")
        for name in ("attendance", "incidence"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.n_years < 1 or self.max_followup < 0 or self.max_diagnosis_delay < 0:
            raise ConfigError("n_years must be positive and follow-up lengths non-negative")
        h, w = self.resolution
        if h < 8 or w < 8:
            raise ConfigError(f"resolution must be at least 8x8, got {self.resolution}")
        if min(self.lesion_growth, self.lesion_sigma) <= 0 or min(self.spot_noise, self.noise, self.texture_sd) < 0:
            raise ConfigError("lesion growth/sigma must be positive and noise levels non-negative")

    @classmethod
    def from_dict(cls, values: dict) -> CohortConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown cohort config keys: {sorted(unknown)}")
        values = dict(values)
        if "resolution" in values:
            values["resolution"] = tuple(int(v) for v in values["resolution"])
        return cls(**values)


# ---------------------------------------------------------------- simulator

def lesion_amplitude(cfg: CohortConfig, years_to_diagnosis: int) -> float:
    """Planted lesion amplitude at a visit ``years_to_diagnosis`` before diagnosis.

    A faint prodrome appears ``lesion_onset - 1`` years ahead and grows by a
    factor ``lesion_growth`` per year; in the final two years the lesion is
    at clinical amplitude.
    """
    tau = years_to_diagnosis
    if tau < 0 or tau >= cfg.lesion_onset:
        return 0.0
    if tau <= 1:
        return cfg.lesion_clinical * cfg.lesion_growth ** (1 - tau)
    return cfg.lesion_base * cfg.lesion_growth ** (cfg.lesion_onset - 1 - tau)


def _blob(shape, row, col, sigma) -> np.ndarray:
    rr, cc = np.mgrid[: shape[0], : shape[1]]
    return np.exp(-((rr - row) ** 2 + (cc - col) ** 2) / (2.0 * sigma**2))


def _breast_mask(shape) -> np.ndarray:
    h, w = shape
    rr, cc = np.mgrid[:h, :w]
    inside = (cc / (0.8 * w)) ** 2 + ((rr - (h - 1) / 2) / (0.48 * h)) ** 2 <= 1.0
    return inside.astype(float)


def generate_cohort(cfg: CohortConfig, rng: np.random.Generator) -> list[SubjectTimeline]:
    """Simulate a screening cohort with a planted, slowly growing lesion.

    Every subject has a transient bright spot of random amplitude at a
    fixed location in each breast on every visit. For diagnosed subjects
    the lesion adds to the spot in one breast, so single frames far from
    diagnosis overlap the healthy distribution and only repeated visits
    separate them.
    """
    cfg.validate()
    shape = tuple(cfg.resolution)
    h, w = shape
    mask = _breast_mask(shape)
    timelines = []
    for i in range(cfg.n_subjects):
        sid = f"S{i:05d}"
        years = [cfg.first_year + j for j in range(cfg.n_years) if rng.random() < cfg.attendance]
        if not years:
            years = [cfg.first_year + int(rng.integers(cfg.n_years))]
        diagnosed = rng.random() < cfg.incidence
        if diagnosed:
            dx = years[-1] + int(rng.integers(cfg.max_diagnosis_delay + 1))
            followup = dx
        else:
            dx = None
            followup = years[-1] + int(rng.integers(cfg.max_followup + 1))
        centres = {
            side: (h * 0.5 + rng.uniform(-cfg.lesion_jitter, cfg.lesion_jitter),
                   w * 0.35 + rng.uniform(-cfg.lesion_jitter, cfg.lesion_jitter))
            for side in ("L", "R")
        }
        lesion = None
        if diagnosed:
            side = "L" if rng.random() < 0.5 else "R"
            lesion = Lesion(side, *centres[side], cfg.lesion_sigma)
        blobs = {side: _blob(shape, *centres[side], cfg.lesion_sigma) for side in ("L", "R")}
        texture = {
            key: cfg.texture_sd * mask * _unit_field(rng, shape)
            for key in SLOT_KEYS
        }
        visits = []
        for year in years:
            amp = lesion_amplitude(cfg, dx - year) if diagnosed else 0.0
            spot = {side: cfg.spot_noise * rng.normal() for side in ("L", "R")}
            images = {}
            for key in SLOT_KEYS:
                side = key[0]
                strength = spot[side] + (amp if lesion is not None and lesion.side == side else 0.0)
                img = 0.5 * mask + texture[key] + strength * blobs[side]
                images[key] = img + cfg.noise * rng.normal(size=shape)
            visits.append(VisitRecord(sid, year, images, lesion_amplitude=amp))
        timeline = SubjectTimeline(sid, visits, dx, followup, lesion)
        timeline.validate()
        timelines.append(timeline)
    return timelines


def _unit_field(rng: np.random.Generator, shape) -> np.ndarray:
    f = gaussian_filter(rng.normal(size=shape), sigma=2.0, mode="reflect")
    return f / (f.std() + 1e-12)


# ---------------------------------------------------------------- expansion

def expand_trajectories(timeline: SubjectTimeline) -> list[TrajectorySample]:
    """One sample per visit, each visit taking the role of the present."""
    by_year = {v.visit_year: v for v in timeline.visits}
    dx, followup = timeline.diagnosis_year, timeline.last_followup_year
    samples = []
    for visit in timeline.visits:
        now = visit.visit_year
        history = tuple(by_year.get(now + off) for off in OFFSETS)
        labels, known = [], []
        for k in range(1, HORIZON + 1):
            hit = dx is not None and dx <= now + k
            labels.append(int(hit))
            known.append(hit or followup >= now + k)
        samples.append(TrajectorySample(timeline.subject_id, now, history, tuple(labels), tuple(known)))
    return samples


def expand_all(timelines: Iterable[SubjectTimeline]) -> list[TrajectorySample]:
    return [s for t in timelines for s in expand_trajectories(t)]


# ---------------------------------------------------------------- splits

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_subjects(
    timelines: Sequence[SubjectTimeline],
    ratio: float,
    stratify_by_diagnosis: bool,
    rng: np.random.Generator,
) -> tuple[list[SubjectTimeline], list[SubjectTimeline]]:
    """Subject-level split; ``ratio`` is the fraction kept in the first part."""
    n = len(timelines)
    n_second = _round_half_up(n * (1.0 - ratio))
    if not 0.0 < ratio < 1.0 or n_second == 0 or n_second == n:
        raise SplitError(f"ratio {ratio} on {n} subjects leaves one side empty")
    ordered = sorted(timelines, key=lambda t: t.subject_id)
    if stratify_by_diagnosis:
        strata = [[t for t in ordered if t.diagnosed], [t for t in ordered if not t.diagnosed]]
        strata = [s for s in strata if s]
        for s in strata:
            if len(s) < 2:
                raise SplitError(f"stratum of {len(s)} subject is too small to split")
    else:
        strata = [ordered]
    # largest-remainder allocation keeps every stratum within one subject of its share
    quotas = [len(s) * n_second / n for s in strata]
    alloc = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(strata)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[: n_second - sum(alloc)]:
        alloc[i] += 1
    first, second = [], []
    for stratum, take in zip(strata, alloc):
        perm = rng.permutation(len(stratum))
        chosen = set(perm[:take].tolist())
        for j, t in enumerate(stratum):
            (second if j in chosen else first).append(t)
    return first, second


# ---------------------------------------------------------------- preprocessing

def align_left(img: np.ndarray) -> np.ndarray:
    """Mirror an image whose tissue mass sits in the right half."""
    half = img.shape[1] // 2
    right = img[:, img.shape[1] - half:].sum()
    return img[:, ::-1] if right > img[:, :half].sum() else img


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping."""
    out = np.asarray(img, dtype=np.float64)
    for axis, n_out in enumerate(shape):
        n_in = out.shape[axis]
        if n_in == n_out:
            continue
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        a = np.take(out, lo, axis=axis)
        b = np.take(out, hi, axis=axis)
        frac = frac.reshape([-1 if i == axis else 1 for i in range(out.ndim)])
        out = a + (b - a) * frac
    return out


def preprocess_image(img, resolution: tuple[int, int], mean: float, std: float) -> Tensor:
    """Left-align, resize, normalise, and replicate to 3 channels."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise FormatError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.size == 0:
        raise FormatError("empty image")
    if std <= 0:
        raise ConfigError(f"normalisation std must be positive, got {std}")
    arr = resize_bilinear(align_left(arr), tuple(resolution))
    arr = (arr - mean) / std
    return Tensor(np.repeat(arr[None], 3, axis=0))


# ---------------------------------------------------------------- manifest I/O

def _format_vector(vec: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in vec)


def write_cohort_archive(timelines: Sequence[SubjectTimeline], root) -> Path:
    """Write ``manifest.csv``, ``images/*.npy`` and (synthetic only) ``lesions.csv``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rows = []
    for t in timelines:
        for v in t.visits:
            cells = []
            for key in SLOT_KEYS:
                payload = v.images[key]
                if v.kind == "embedding":
                    cells.append(_format_vector(payload))
                else:
                    rel = f"images/{t.subject_id}_{v.visit_year}_{key}.npy"
                    np.save(root / rel, np.ascontiguousarray(payload, dtype="<f8"))
                    cells.append(rel)
            dx = "" if t.diagnosis_year is None else str(t.diagnosis_year)
            rows.append([t.subject_id, str(v.visit_year), *cells, dx, str(t.last_followup_year)])
    _write_csv(root / "manifest.csv", MANIFEST_COLUMNS, rows)
    lesions = [[t.subject_id, t.lesion.side, repr(t.lesion.row), repr(t.lesion.col), repr(t.lesion.sigma)]
               for t in timelines if t.lesion is not None]
    if lesions:
        _write_csv(root / "lesions.csv", ("subject_id", "side", "row", "col", "sigma"), lesions)
    return root / "manifest.csv"


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _data_lines(path: Path):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() and not line.lstrip().startswith("#"):
                yield lineno, line


def _parse_payload(cell: str, base: Path, lineno: int) -> np.ndarray:
    cell = cell.strip()
    if not cell:
        raise ManifestParseError(f"line {lineno}: empty payload cell")
    try:
        return np.array([float(x) for x in cell.split()], dtype=np.float64)
    except ValueError:
        pass
    path = base / cell
    if not path.exists():
        raise ManifestParseError(f"line {lineno}: payload file {cell} not found")
    arr = np.load(path, allow_pickle=False)
    return np.asarray(arr, dtype=np.float64)


def _parse_int(cell: str, what: str, lineno: int, optional: bool = False) -> int | None:
    cell = cell.strip()
    if optional and not cell:
        return None
    try:
        return int(cell)
    except ValueError:
        raise ManifestParseError(f"line {lineno}: {what} {cell!r} is not an integer") from None


def load_manifest(path) -> list[SubjectTimeline]:
    path = Path(path)
    lines = list(_data_lines(path))
    if not lines:
        raise ManifestParseError(f"{path}: missing header row")
    header_line, header = lines[0]
    columns = next(csv.reader([header]))
    if tuple(c.strip() for c in columns) != MANIFEST_COLUMNS:
        raise ManifestParseError(f"line {header_line}: header must be {','.join(MANIFEST_COLUMNS)}")
    subjects: dict[str, dict] = {}
    for lineno, line in lines[1:]:
        cells = next(csv.reader([line]))
        if len(cells) != len(MANIFEST_COLUMNS):
            raise ManifestParseError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} columns, got {len(cells)}")
        sid = cells[0].strip()
        if not sid:
            raise ManifestParseError(f"line {lineno}: empty subject_id")
        year = _parse_int(cells[1], "visit_year", lineno)
        images = {key: _parse_payload(cells[2 + i], path.parent, lineno) for i, key in enumerate(SLOT_KEYS)}
        dx = _parse_int(cells[6], "diagnosis_year", lineno, optional=True)
        followup = _parse_int(cells[7], "last_followup_year", lineno)
        entry = subjects.setdefault(sid, {"dx": dx, "followup": followup, "visits": []})
        if (entry["dx"], entry["followup"]) != (dx, followup):
            raise ValidationError(f"subject {sid}: inconsistent diagnosis/follow-up across rows (line {lineno})")
        try:
            entry["visits"].append(VisitRecord(sid, year, images))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    timelines = []
    for sid, entry in subjects.items():
        visits = sorted(entry["visits"], key=lambda v: v.visit_year)
        t = SubjectTimeline(sid, visits, entry["dx"], entry["followup"])
        t.validate()
        timelines.append(t)
    _attach_lesions(path.parent / "lesions.csv", timelines)
    return timelines


def _attach_lesions(path: Path, timelines: list[SubjectTimeline]) -> None:
    if not path.exists():
        return
    by_id = {t.subject_id: t for t in timelines}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            t = by_id.get(row["subject_id"])
            if t is not None:
                t.lesion = Lesion(row["side"], float(row["row"]), float(row["col"]), float(row["sigma"]))


def load_cohort(root) -> list[SubjectTimeline]:
    root = Path(root)
    return load_manifest(root / "manifest.csv" if root.is_dir() else root)


def payload_kind(timelines: Sequence[SubjectTimeline]) -> str:
    kinds = {v.kind for t in timelines for v in t.visits}
    if len(kinds) != 1:
        raise ValidationError(f"cohort mixes payload kinds {sorted(kinds)}")
    return kinds.pop()


def followup_table(timelines: Sequence[SubjectTimeline]) -> dict[str, list[int]]:
    """Exam counts with at least n years of follow-up, and exams followed by
    a diagnosis within n years, for n = 1..5."""
    min_followup = [0] * HORIZON
    cancer_within = [0] * HORIZON
    for t in timelines:
        for v in t.visits:
            for n in range(1, HORIZON + 1):
                if t.last_followup_year >= v.visit_year + n:
                    min_followup[n - 1] += 1
                if t.diagnosis_year is not None and t.diagnosis_year <= v.visit_year + n:
                    cancer_within[n - 1] += 1
    return {"min_followup": min_followup, "cancer_within": cancer_within}


def cohort_fingerprint(timelines: Sequence[SubjectTimeline]) -> str:
    h = hashlib.sha256()
    for t in sorted(timelines, key=lambda t: t.subject_id):
        h.update(f"{t.subject_id}|{t.diagnosis_year}|{t.last_followup_year}".encode())
        for v in t.visits:
            h.update(str(v.visit_year).encode())
            for key in SLOT_KEYS:
                h.update(np.ascontiguousarray(v.images[key], dtype="<f8").tobytes())
    return h.hexdigest()[:16]
