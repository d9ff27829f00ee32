from __future__ import annotations

import numpy as np
import pytest

from longirisk.cohort import CohortConfig, SubjectTimeline, VisitRecord, generate_cohort
from longirisk.rng import make_rng

# Acceptance criteria report: one line per criterion in the terminal summary.
_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
    _criteria[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status, detail = _criteria[number]
        line = f"criterion {number} [{status}] {title}"
        terminalreporter.write_line(line + (f" :: {detail}" if detail else ""))


def small_images(rng, shape=(8, 8)):
    return {k: rng.normal(size=shape) for k in ("L_CC", "L_MLO", "R_CC", "R_MLO")}


def make_timeline(sid, years, dx=None, followup=None, rng=None, shape=(8, 8)):
    rng = rng or make_rng(0)
    visits = [VisitRecord(sid, y, small_images(rng, shape)) for y in years]
    return SubjectTimeline(sid, visits, dx, followup if followup is not None else max(years))


def random_timeline(rng, sid):
    """Irregular visits, optional diagnosis, follow-up anywhere from 0 to 6 years."""
    years = sorted(set(rng.integers(2000, 2012, size=rng.integers(1, 7)).tolist()))
    dx = None
    if rng.random() < 0.5:
        dx = int(rng.integers(years[0], years[-1] + 6))
    followup = int(rng.integers(years[-1], years[-1] + 7))
    return make_timeline(sid, years, dx, followup, rng=rng, shape=(2, 2))


@pytest.fixture(scope="session")
def small_cohort():
    cfg = CohortConfig(n_subjects=60, resolution=(16, 16), seed=11)
    return generate_cohort(cfg, make_rng(11))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def embedding_cohort(n, d, rng, shift=2.0, incidence=0.3, max_delay=4):
    """Inline-embedding timelines; diagnosed subjects are shifted along one axis."""
    direction = np.zeros(d)
    direction[0] = shift
    out = []
    for i in range(n):
        sid = f"e{i:03d}"
        years = list(range(2008, 2008 + int(rng.integers(1, 5))))
        dx = years[-1] + int(rng.integers(0, max_delay + 1)) if rng.random() < incidence else None
        bias = direction if dx is not None else 0.0
        visits = [VisitRecord(sid, y, {k: rng.normal(size=d) + bias for k in ("L_CC", "L_MLO", "R_CC", "R_MLO")})
                  for y in years]
        out.append(SubjectTimeline(sid, visits, dx, years[-1] + 5 if dx is None else dx))
    return out
