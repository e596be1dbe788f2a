import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uillab.metrics import (
    AccuracyMatrix,
    MetricsError,
    avg_acc,
    class_gradient_profile,
    entropy_profile,
    forgetting,
    per_class_accuracy,
    weighted_acc,
    write_class_profile,
    write_entropy_profile,
    write_report,
)
from uillab.model import ClassifierState

nan = float("nan")

# Worked 3x3 example; hand values:
#   avg after task 2      = (0.6 + 0.9 + 0.5) / 3           = 2/3
#   weighted (10, 20, 30) = (6 + 18 + 15) / 60               = 0.65
#   forgetting after 2    = ((0.9 - 0.6) + (0.9 - 0.9)) / 2  = 0.15
#   forgetting after 1    = 0.9 - 0.7                        = 0.2
R3 = AccuracyMatrix([[0.9, nan, nan], [0.7, 0.8, nan], [0.6, 0.9, 0.5]], [10, 20, 30])
R2 = [[0.9, nan], [0.7, 0.8]]


class TestSummaries:
    def test_2x2(self):
        assert forgetting(R2, 1) == 0.2
        assert avg_acc(R2, 1) == 0.75
        assert avg_acc([[1.0, nan], [0.8, 0.6]], 1) == 0.7

    def test_3x3(self):
        assert avg_acc(R3, 2) == 2 / 3
        assert weighted_acc(R3, 2) == 0.65
        assert forgetting(R3, 2) == 0.15
        assert forgetting(R3, 1) == 0.2
        assert weighted_acc(R3, 1) == 23 / 30  # (7 + 16) / 30
        assert avg_acc(R3, 0) == weighted_acc(R3, 0) == 0.9

    def test_weighted_example(self):
        R = AccuracyMatrix([[1.0, nan], [1.0, 0.5]], [100, 300])
        assert weighted_acc(R, 1) == 0.625

    def test_trivial_cases(self):
        assert avg_acc([[0.37]], 0) == 0.37
        assert avg_acc(np.ones((3, 3)), 2) == 1.0
        assert forgetting([[0.4]], 0) == 0.0
        assert forgetting([[0.1, nan], [0.3, 0.5]], 1) == 0.0

    def test_errors(self):
        with pytest.raises(MetricsError):
            avg_acc(R3.R[:2], 0)
        with pytest.raises(MetricsError):
            avg_acc([[0.5, nan], [nan, 0.5]], 1)
        with pytest.raises(MetricsError):
            weighted_acc(AccuracyMatrix([[0.5]], [0]), 0)


def oracle(R, k, weights):
    """Independent rational evaluation over decimal strings."""
    q = [[Fraction(repr(float(v))) for v in row[:i + 1]] for i, row in enumerate(R)]
    avg = sum(q[k][:k + 1]) / (k + 1)
    w = [Fraction(int(x)) for x in weights[:k + 1]]
    wacc = sum(a * b for a, b in zip(w, q[k])) / sum(w)
    fg = Fraction(0) if k == 0 else sum(max(q[j][t] for j in range(t, k + 1)) - q[k][t] for t in range(k)) / k
    return float(avg), float(wacc), float(fg)


acc_values = st.integers(0, 20).map(lambda n: n / 20)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6).flatmap(lambda T: st.tuples(
    st.just(T), st.lists(acc_values, min_size=T * T, max_size=T * T),
    st.lists(st.integers(1, 50), min_size=T, max_size=T))))
def test_metric_properties(case):
    T, flat, weights = case
    R = np.array(flat).reshape(T, T)
    R[np.triu_indices(T, 1)] = np.nan
    m = AccuracyMatrix(R, weights)
    for k in range(T):
        avg, wacc, fg = oracle(R, k, weights)
        assert avg_acc(m, k) == avg
        assert weighted_acc(m, k) == wacc
        assert forgetting(m, k) == fg
        assert fg >= 0
        dropped = any(R[k, t] < np.max(R[t:k + 1, t]) for t in range(k))
        assert (fg > 0) == dropped
        assert weighted_acc(AccuracyMatrix(R, np.full(T, 7)), k) == avg_acc(m, k)


class TestEntropyProfile:
    def test_zero_classifier(self, rng):
        C = 4
        state = ClassifierState(np.zeros((C, 3)), np.zeros(C), tuple(range(C)))
        X = rng.standard_normal((10, 3))
        prof = entropy_profile(state, X, rng.integers(0, C, 10), num_intervals=5)
        assert prof.ratio.tolist() == [0, 0, 0, 0, 1.0]
        assert prof.entropy_mean == pytest.approx(math.log(C), abs=1e-12)
        assert prof.entropy_var == pytest.approx(0.0, abs=1e-20)
        assert prof.edges[-1] == pytest.approx(math.log(C))

    def test_one_hot(self):
        state = ClassifierState(np.array([[100.0, 0.0], [-100.0, 0.0]]), np.zeros(2), (0, 1))
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 5.0]])
        prof = entropy_profile(state, X, [0, 1, 0], num_intervals=4)
        assert prof.ratio[0] == 1.0
        assert prof.entropy_mean == pytest.approx(0.0, abs=1e-12)
        assert prof.mean_acc[0] == 1.0
        assert np.isnan(prof.mean_loss[1:]).all()

    def test_ratios_sum_to_one(self, rng):
        state = ClassifierState(rng.standard_normal((5, 4)), rng.standard_normal(5), tuple(range(5)))
        prof = entropy_profile(state, rng.standard_normal((200, 4)), rng.integers(0, 5, 200))
        assert prof.ratio.sum() == pytest.approx(1.0)
        assert len(prof.ratio) == 27

    def test_errors(self):
        state = ClassifierState(np.zeros((2, 1)), np.zeros(2), (0, 1))
        with pytest.raises(MetricsError):
            entropy_profile(state, np.zeros((0, 1)), [])
        with pytest.raises(MetricsError):
            entropy_profile(state, np.zeros((1, 1)), [0], num_intervals=0)


class TestClassProfile:
    def test_means(self):
        prof = class_gradient_profile({0: [2, 2], 1: [4, 4]}, {0: 0.5, 1: 0.9}, {0: 10, 1: 3})
        assert prof.mean_mag == (2.0, 4.0)
        assert prof.n_train == (10, 3)

    def test_spearman_monotone(self):
        prof = class_gradient_profile({0: [1], 1: [2], 2: [5]}, {0: 0.1, 1: 0.4, 2: 0.8}, {})
        assert prof.spearman == pytest.approx(1.0)

    def test_spearman_undefined(self):
        prof = class_gradient_profile({0: [1], 1: [2], 2: [5]}, {0: 0.5, 1: 0.5, 2: 0.5}, {})
        assert prof.spearman is None

    def test_absent_class_has_null_magnitude(self):
        prof = class_gradient_profile({0: [1.0]}, {0: 1.0, 3: 0.0}, {3: 4})
        assert prof.class_ids == (0, 3) and prof.mean_mag == (1.0, None)

    def test_from_diag_rows(self):
        diag = np.array([[0, 0, 0.1, 2.0, 2.0, 1, 0.5], [0, 1, 0.1, 4.0, 0.0, 0, 0.5],
                         [1, 0, 0.1, 4.0, 4.0, 1, 0.5]])
        prof = class_gradient_profile(diag, {0: 0.2, 1: 0.1}, {})
        assert prof.mean_mag == (3.0, 4.0)

    def test_per_class_accuracy(self):
        state = ClassifierState(np.array([[1.0], [-1.0]]), np.zeros(2), (0, 1))
        acc = per_class_accuracy(state, np.array([[1.0], [2.0], [3.0], [-1.0]]), [0, 0, 1, 1])
        assert acc == {0: 1.0, 1: 0.5}


def test_report_files(tmp_path):
    write_report(R3, tmp_path)
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "metric,task_index,value"
    assert "forgetting,2,0.15" in lines and "weighted_acc,2,0.65" in lines
    meta = (tmp_path / "report.meta").read_text()
    assert "task_weights=10,20,30" in meta and "forgetting_definition=" in meta

    prof = class_gradient_profile({0: [1.0]}, {0: 1.0, 1: 0.5}, {})
    write_class_profile(prof, tmp_path / "c.csv")
    text = (tmp_path / "c.csv").read_text()
    assert "1,0,null,0.5" in text and text.rstrip().endswith("spearman=null")

    state = ClassifierState(np.zeros((2, 1)), np.zeros(2), (0, 1))
    write_entropy_profile(entropy_profile(state, np.ones((2, 1)), [0, 1], 3), tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert len(rows) == 5 and rows[1].endswith("null,null")
