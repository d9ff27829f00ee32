import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longirisk.cohort import (CohortConfig, SubjectTimeline, expand_all, expand_trajectories,
                              generate_cohort, load_cohort, load_manifest, preprocess_image, resize_bilinear,
                              split_subjects, write_cohort_archive)
from longirisk.errors import ConfigError, FormatError, ManifestParseError, SplitError, ValidationError
from longirisk.rng import make_rng
from conftest import make_timeline, random_timeline
from oracles import brute_labels

HEADER = "subject_id,visit_year,L_CC,L_MLO,R_CC,R_MLO,diagnosis_year,last_followup_year\n"


# ---------------------------------------------------------------- generation

def test_zero_subjects_rejected():
    with pytest.raises(ConfigError):
        generate_cohort(CohortConfig(n_subjects=0), make_rng(0))


@pytest.mark.parametrize("field,value", [("incidence", 1.5), ("attendance", -0.1), ("resolution", (4, 32))])
def test_invalid_config_rejected(field, value):
    with pytest.raises(ConfigError):
        generate_cohort(replace(CohortConfig(n_subjects=2), **{field: value}), make_rng(0))


def test_incidence_zero_means_no_diagnoses():
    tl = generate_cohort(CohortConfig(n_subjects=40, incidence=0.0, resolution=(8, 8)), make_rng(1))
    assert all(t.diagnosis_year is None and t.lesion is None for t in tl)


def test_full_incidence_and_attendance():
    tl = generate_cohort(CohortConfig(n_subjects=20, incidence=1.0, attendance=1.0, resolution=(8, 8)), make_rng(2))
    assert all(len(t.visits) == 9 and t.diagnosis_year is not None for t in tl)


def test_incidence_within_binomial_band():
    cfg = CohortConfig(n_subjects=1000, resolution=(8, 8))
    tl = generate_cohort(cfg, make_rng(3))
    n_dx = sum(t.diagnosed for t in tl)
    sd = math.sqrt(cfg.n_subjects * cfg.incidence * (1 - cfg.incidence))
    assert abs(n_dx - cfg.n_subjects * cfg.incidence) <= 3 * sd


def test_visit_counts_and_timeline_invariants(small_cohort):
    for t in small_cohort:
        years = [v.visit_year for v in t.visits]
        assert 1 <= len(years) <= 9 and years == sorted(set(years))
        assert t.last_followup_year >= years[-1]
        if t.diagnosis_year is not None:
            assert t.diagnosis_year >= years[0]
        for v in t.visits:
            assert {k: im.shape for k, im in v.images.items()} == {k: (16, 16) for k in v.images}


def test_generation_deterministic():
    cfg = CohortConfig(n_subjects=10, resolution=(8, 8))
    a, b = generate_cohort(cfg, make_rng(5)), generate_cohort(cfg, make_rng(5))
    assert a == b


def test_lesion_amplitude_grows_toward_diagnosis():
    cfg = CohortConfig(n_subjects=400, resolution=(8, 8))
    tl = generate_cohort(cfg, make_rng(4))
    amp = {1: [], 4: []}
    for t in tl:
        for v in t.visits:
            if t.diagnosis_year is not None and t.diagnosis_year - v.visit_year in amp:
                amp[t.diagnosis_year - v.visit_year].append(v.lesion_amplitude)
    assert amp[1] and amp[4]
    assert np.mean(amp[1]) > np.mean(amp[4])


def test_planted_lesion_brightens_its_breast():
    cfg = CohortConfig(n_subjects=1, incidence=1.0, attendance=1.0, spot_noise=0.0, noise=0.0,
                       texture_sd=0.0, max_diagnosis_delay=0)
    (t,) = generate_cohort(cfg, make_rng(6))
    last = t.visits[-1]
    side = t.lesion.side
    other = "R" if side == "L" else "L"
    r, c = int(round(t.lesion.row)), int(round(t.lesion.col))
    assert last.images[f"{side}_CC"][r, c] > last.images[f"{other}_CC"][r, c] + 1.0


# ---------------------------------------------------------------- expansion

def test_expansion_examples():
    (s,) = expand_trajectories(make_timeline("a", [2010], dx=2013, followup=2015))
    assert s.labels == (0, 0, 1, 1, 1) and all(s.label_mask)
    (s,) = expand_trajectories(make_timeline("b", [2010], dx=None, followup=2012))
    assert s.labels[:2] == (0, 0) and s.label_mask == (True, True, False, False, False)
    samples = expand_trajectories(make_timeline("c", range(2008, 2013)))
    assert samples[-1].now_year == 2012 and all(samples[-1].present)
    assert samples[0].present == (False, False, False, False, True)


def test_expansion_of_empty_timeline():
    assert expand_trajectories(SubjectTimeline("e", [], None, 2010)) == []


def test_history_slots_use_exact_year_offsets():
    (_, s) = expand_trajectories(make_timeline("g", [2008, 2011]))
    assert s.present == (False, True, False, False, True)
    assert s.history[1].visit_year == 2008


def test_expansion_matches_brute_force_labeler():
    rng = make_rng(7)
    for i in range(1000):
        t = random_timeline(rng, f"s{i}")
        samples = expand_trajectories(t)
        assert len(samples) == len(t.visits)
        for s in samples:
            labels, known = brute_labels(s.now_year, t.diagnosis_year, t.last_followup_year)
            assert list(s.labels) == labels and list(s.label_mask) == known


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_label_mask_consistency(seed):
    t = random_timeline(make_rng(seed), "p")
    for s in expand_trajectories(t):
        assert s.present[-1]
        for k in range(4):
            if s.labels[k] == 1:
                assert s.labels[k + 1] == 1 and all(s.label_mask[k:])
            if not s.label_mask[k] and not s.labels[k]:
                assert not any(s.label_mask[k + 1:]) or any(s.labels[k + 1:])


def test_expansion_count_equals_visit_count(small_cohort):
    assert len(expand_all(small_cohort)) == sum(len(t.visits) for t in small_cohort)


# ---------------------------------------------------------------- splits

def _ten_with_two_diagnosed():
    return [make_timeline(f"s{i}", [2010], dx=2012 if i < 2 else None, followup=2014) for i in range(10)]


def test_split_ten_subjects_two_diagnosed_over_seeds():
    tl = _ten_with_two_diagnosed()
    for seed in range(200):
        train, test = split_subjects(tl, 0.8, True, make_rng(seed))
        assert len(test) == 2 and len(train) == 8
        n_dx = sum(t.diagnosed for t in test)
        assert abs(n_dx - 2 * 0.2) <= 1


def test_split_preserves_strata_within_one_subject(small_cohort):
    n_dx = sum(t.diagnosed for t in small_cohort)
    for seed in range(20):
        train, test = split_subjects(small_cohort, 0.8, True, make_rng(seed))
        assert abs(sum(t.diagnosed for t in test) - n_dx * len(test) / len(small_cohort)) <= 1
        assert not {t.subject_id for t in train} & {t.subject_id for t in test}


def test_split_contracts():
    tl = _ten_with_two_diagnosed()
    with pytest.raises(SplitError):
        split_subjects(tl, 1.0, True, make_rng(0))
    one_dx = [make_timeline(f"s{i}", [2010], dx=2012 if i == 0 else None) for i in range(10)]
    with pytest.raises(SplitError):
        split_subjects(one_dx, 0.8, True, make_rng(0))


def test_split_deterministic_and_order_free():
    tl = _ten_with_two_diagnosed()
    a = split_subjects(tl, 0.8, True, make_rng(3))
    b = split_subjects(list(reversed(tl)), 0.8, True, make_rng(3))
    assert [t.subject_id for t in a[1]] == [t.subject_id for t in b[1]]


# ---------------------------------------------------------------- preprocessing

def test_constant_image_normalises_to_zero():
    out = preprocess_image(np.full((10, 12), 0.7), (8, 8), 0.7, 1.0)
    assert out.shape == (3, 8, 8) and np.all(out.data == 0.0)


def test_resize_identity(rng):
    img = rng.normal(size=(9, 7))
    np.testing.assert_allclose(resize_bilinear(img, (9, 7)), img, atol=1e-12)


def test_checkerboard_upsample_by_hand():
    img = np.array([[0.0, 1.0], [1.0, 0.0]])
    # half-pixel centres: output coords map to -0.25, 0.25, 0.75, 1.25, clamped to [0, 1]
    w = np.array([0.0, 0.25, 0.75, 1.0])
    expected = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            a, b = w[i], w[j]
            expected[i, j] = (1 - a) * b * 1.0 + a * (1 - b) * 1.0
    np.testing.assert_allclose(resize_bilinear(img, (4, 4)), expected, atol=1e-12)


def test_right_heavy_image_is_mirrored():
    img = np.zeros((4, 4))
    img[:, 3] = 1.0
    out = preprocess_image(img, (4, 4), 0.0, 1.0).data[0]
    assert out[:, 0].sum() == 4.0 and out[:, 3].sum() == 0.0


def test_preprocess_errors():
    with pytest.raises(FormatError):
        preprocess_image(np.zeros((0, 4)), (8, 8), 0.0, 1.0)
    with pytest.raises(FormatError):
        preprocess_image(np.zeros(4), (8, 8), 0.0, 1.0)


# ---------------------------------------------------------------- manifest

def test_header_only_manifest(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("# comment line\n" + HEADER)
    assert load_manifest(path) == []


def test_diagnosis_before_first_visit_rejected(tmp_path):
    path = tmp_path / "m.csv"
    vec = "0.1 0.2"
    path.write_text(HEADER + f"s1,2010,{vec},{vec},{vec},{vec},2008,2012\n")
    with pytest.raises(ValidationError, match="s1"):
        load_manifest(path)


def test_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "m.csv"
    vec = "0.1 0.2"
    path.write_text(HEADER + "# note\n" + f"s1,20x0,{vec},{vec},{vec},{vec},,2012\n")
    with pytest.raises(ManifestParseError, match="line 3"):
        load_manifest(path)
    path.write_text(HEADER + "s1,2010,1\n")
    with pytest.raises(ManifestParseError, match="line 2"):
        load_manifest(path)


def test_inline_embedding_manifest(tmp_path):
    path = tmp_path / "m.csv"
    vec = "0.5 -1.0 2.0"
    path.write_text(HEADER + f"s1,2010,{vec},{vec},{vec},{vec},,2012\ns1,2011,{vec},{vec},{vec},{vec},,2012\n")
    (t,) = load_manifest(path)
    assert [v.visit_year for v in t.visits] == [2010, 2011]
    assert t.visits[0].kind == "embedding"
    assert t.visits[0].images["L_CC"].tolist() == [0.5, -1.0, 2.0]


def test_mixed_payload_widths_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(HEADER + "s1,2010,1 2,1 2,1 2,1 2 3,,2012\n")
    with pytest.raises(ValidationError):
        load_manifest(path)


def test_archive_round_trip(tmp_path, small_cohort):
    write_cohort_archive(small_cohort, tmp_path)
    loaded = load_cohort(tmp_path)
    assert loaded == small_cohort
    assert [t.lesion for t in loaded] == [t.lesion for t in small_cohort]
