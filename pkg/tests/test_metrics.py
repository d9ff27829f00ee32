import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longirisk.errors import UndefinedMetricError
from longirisk.metrics import concordance_index, event_times_from_labels, roc_auc
from oracles import brute_auc, brute_cindex


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert roc_auc([0.5, 0.5, 0.3], [1, 0, 0]) == 0.75


def test_auc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1, 0.2], [1, 1])


# scores drawn from a small grid so ties are common
_scores = st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 1.0]), min_size=2, max_size=12)


@settings(max_examples=300, deadline=None)
@given(_scores, st.data())
def test_auc_equals_pair_enumeration(scores, data):
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
    if len(set(labels)) < 2:
        with pytest.raises(UndefinedMetricError):
            roc_auc(scores, labels)
        return
    assert roc_auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


def test_cindex_examples():
    times = np.array([1, 2, 3, 4, 5.0])
    events = np.ones(5, bool)
    assert concordance_index(-times, times, events) == 1.0
    assert concordance_index(np.ones(5), times, events) == 0.5


def test_cindex_five_sample_hand_case():
    risk = [0.9, 0.4, 0.6, 0.2, 0.6]
    time = [1, 2, 3, 3, 2]
    event = [True, False, True, False, True]
    # comparable pairs: (0,1) (0,2) (0,3) (0,4) (4,2) (4,3) (2,3); 4 vs 1 censored at 2 >= 2
    # plus (4,1); concordant: all of 0's four, (4,2) tie 0.5, (4,3) yes, (2,3) yes, (4,1) yes
    assert concordance_index(risk, time, event) == pytest.approx(7.5 / 8)
    assert concordance_index(risk, time, event) == pytest.approx(brute_cindex(risk, time, event))


def test_cindex_no_comparable_pairs():
    with pytest.raises(UndefinedMetricError):
        concordance_index([0.1, 0.2], [3, 4], [False, False])


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 12), st.data())
def test_cindex_equals_pair_enumeration(n, data):
    risk = data.draw(st.lists(st.sampled_from([0.1, 0.3, 0.5, 0.7]), min_size=n, max_size=n))
    time = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    event = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    expected = brute_cindex(risk, time, event)
    if np.isnan(expected):
        with pytest.raises(UndefinedMetricError):
            concordance_index(risk, time, event)
    else:
        assert concordance_index(risk, time, event) == pytest.approx(expected, abs=1e-12)


def test_event_times_from_labels():
    labels = np.array([[0, 0, 1, 1, 1], [0, 0, 0, 0, 0], [0, 0, 0, 0, 0], [0, 0, 0, 0, 0]])
    mask = np.array([[1, 1, 1, 1, 1], [1, 1, 0, 0, 0], [1, 1, 1, 1, 1], [0, 0, 0, 0, 0]], bool)
    times, events = event_times_from_labels(labels, mask)
    assert times.tolist() == [3, 2, 5, 0]
    assert events.tolist() == [True, False, False, False]
