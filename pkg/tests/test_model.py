import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from uillab.dataset import LabeledSample, SampleSet
from uillab.model import (
    ClassifierState,
    ModelError,
    batch_losses,
    dump_head,
    entropy,
    expand_head,
    forward,
    grads,
    loss_ce,
    loss_em,
    numerical_grads,
    parse_head,
    pde,
    predict,
    softmax,
)


def rel_err(a, b):
    """Norm-wise relative error with a small absolute floor."""
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)


def random_state(rng, k=5, d=8, scale=1.0):
    return ClassifierState(scale * rng.standard_normal((k, d)), scale * rng.standard_normal(k), tuple(range(k)))


class TestForward:
    def test_zero_head_is_uniform(self):
        s = ClassifierState(np.zeros((3, 2)), np.zeros(3), (0, 1, 2))
        np.testing.assert_array_equal(forward(s, [1.0, -2.0]).probabilities, np.full(3, 1 / 3))

    def test_no_overflow(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0) and p[1] < 1e-300

    def test_single_class(self):
        s = ClassifierState(np.ones((1, 2)), np.zeros(1), (4,))
        assert forward(s, [3.0, 1.0]).probabilities.tolist() == [1.0]

    def test_dimension_checked(self):
        s = ClassifierState(np.zeros((2, 3)), np.zeros(2), (0, 1))
        with pytest.raises(ModelError):
            forward(s, [1.0, 2.0])

    def test_inconsistent_state(self):
        with pytest.raises(ModelError):
            ClassifierState(np.zeros((2, 3)), np.zeros(3), (0, 1))
        with pytest.raises(ModelError):
            ClassifierState(np.zeros((2, 3)), np.zeros(2), (0, 0))


class TestEntropy:
    def test_uniform(self):
        assert pde(np.full(4, 0.25)) == pytest.approx(1.386294, abs=1e-6)
        assert pde(np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-12)

    def test_one_hot(self):
        assert pde(np.array([0.0, 1.0, 0.0])) == 0.0

    def test_hand_value(self):
        # -(0.5 log 0.5 + 2 * 0.25 log 0.25) = 0.5 log 2 + log 2
        assert pde(np.array([0.5, 0.25, 0.25])) == pytest.approx(1.5 * math.log(2), abs=1e-12)
        assert 1.5 * math.log(2) == pytest.approx(1.039721, abs=1e-6)

    def test_loss_em_equals_pde(self):
        for p in ([0.25] * 4, [1.0, 0.0], [0.5, 0.25, 0.25]):
            assert loss_em(np.array(p)) == pde(np.array(p))


class TestCrossEntropy:
    def dist(self, probs):
        s = ClassifierState(np.zeros((len(probs), 1)), np.log(np.maximum(probs, 1e-300)), tuple(range(len(probs))))
        return forward(s, [0.0])

    def test_values(self):
        assert loss_ce(self.dist([1.0, 0.0]), 0) == 0.0
        assert loss_ce(self.dist([0.25] * 4), 3) == pytest.approx(math.log(4), abs=1e-12)
        assert loss_ce(self.dist([0.25, 0.75]), 0) == pytest.approx(math.log(4), abs=1e-12)

    def test_floor(self):
        assert loss_ce(self.dist([1.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))

    def test_unknown_label(self):
        with pytest.raises(ModelError):
            loss_ce(self.dist([0.5, 0.5]), 7)


class TestGradients:
    def test_uniform_two_class_example(self):
        s = ClassifierState(np.zeros((2, 3)), np.zeros(2), (0, 1))
        x = np.array([1.0, -2.0, 0.5])
        g = grads(s, x[None], [0])
        np.testing.assert_allclose(g.ce_w, [(0.5 - 1) * x, 0.5 * x], atol=1e-15)
        np.testing.assert_allclose(g.ce_b, [-0.5, 0.5], atol=1e-15)
        np.testing.assert_array_equal(g.em_w, np.zeros((2, 3)))
        assert g.g_ce[1][1] == 0.5

    def test_em_zero_at_uniform(self, rng):
        for k in (2, 3, 7):
            s = ClassifierState(np.zeros((k, 4)), np.zeros(k), tuple(range(k)))
            g = grads(s, rng.standard_normal((5, 4)), rng.integers(0, k, 5))
            assert np.abs(g.em_w).max() <= 1e-12 and np.abs(g.em_b).max() <= 1e-12

    def test_saturated_prediction(self):
        s = ClassifierState(np.array([[60.0], [0.0]]), np.zeros(2), (0, 1))
        g = grads(s, np.array([[1.0]]), [0])
        assert np.abs(g.ce_w).max() < 1e-20
        assert np.abs(g.em_w).max() < 1e-20

    def test_matches_finite_differences(self, rng):
        for _ in range(10):
            s = random_state(rng, k=4, d=5)
            X = rng.standard_normal((3, 5))
            y = rng.integers(0, 4, 3)
            g = grads(s, X, y)
            for loss, (aw, ab) in (("ce", (g.ce_w, g.ce_b)), ("em", (g.em_w, g.em_b))):
                nw, nb = numerical_grads(s, X, y, loss=loss)
                assert rel_err(aw, nw) < 1e-5
                assert rel_err(ab, nb) < 1e-5

    def test_accepts_samples(self, rng):
        s = random_state(rng, k=3, d=2)
        X = rng.standard_normal((4, 2))
        y = np.array([0, 2, 1, 0])
        as_arrays = grads(s, X, y)
        as_list = grads(s, [LabeledSample(x, int(c), 0, 0) for x, c in zip(X, y)])
        as_set = grads(s, SampleSet(X, y, np.zeros(4), 0))
        for other in (as_list, as_set):
            np.testing.assert_array_equal(as_arrays.ce_w, other.ce_w)
            np.testing.assert_array_equal(as_arrays.em_b, other.em_b)

    def test_errors(self):
        s = ClassifierState(np.zeros((2, 2)), np.zeros(2), (0, 1))
        with pytest.raises(ModelError):
            grads(s, [])
        with pytest.raises(ModelError):
            grads(s, np.zeros((1, 2)), [5])

    def test_batch_losses(self):
        s = ClassifierState(np.zeros((4, 2)), np.zeros(4), (0, 1, 2, 3))
        ce, em = batch_losses(s, np.ones((3, 2)), [0, 1, 2])
        assert ce == pytest.approx(math.log(4)) and em == pytest.approx(math.log(4))


class TestHead:
    def test_expand(self):
        s = expand_head(ClassifierState.empty(3), {1, 0})
        assert s.seen_classes == (0, 1) and s.weights.shape == (2, 3)
        s = ClassifierState(np.arange(6.0).reshape(2, 3), np.array([1.0, 2.0]), (0, 1))
        t = expand_head(s, {2})
        assert t.num_classes == 3
        np.testing.assert_array_equal(t.weights[:2], s.weights)
        np.testing.assert_array_equal(t.biases[:2], s.biases)
        assert t.weights[2].tolist() == [0, 0, 0] and t.biases[2] == 0

    def test_expand_duplicate(self):
        s = expand_head(ClassifierState.empty(2), {0, 1})
        with pytest.raises(ModelError):
            expand_head(s, {1})

    def test_tie_break_lowest_id(self):
        s = ClassifierState(np.zeros((3, 2)), np.zeros(3), (5, 2, 9))
        assert predict(s, np.ones((4, 2))).tolist() == [2, 2, 2, 2]

    def test_checkpoint_round_trip(self, rng):
        s = ClassifierState(rng.standard_normal((3, 4)), rng.standard_normal(3), (4, 0, 2))
        text = dump_head(s)
        assert text.startswith("UILHEAD v1 dim=4 classes=4,0,2\n")
        back = parse_head(text)
        assert back == s
        assert dump_head(back) == text

    @pytest.mark.parametrize("text", ["", "HEAD\n", "UILHEAD v1 dim=1 classes=0\n",
                                      "UILHEAD v1 dim=1 classes=0\nclass 1: 0 0\n",
                                      "UILHEAD v1 dim=1 classes=0\nclass 0: 0\n"])
    def test_bad_checkpoint(self, text):
        with pytest.raises(ModelError):
            parse_head(text)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(0, 1e6)))
def test_entropy_bounds(w):
    if w.sum() == 0:
        w = np.ones_like(w)
    p = w / w.sum()
    h = entropy(p)
    assert 0.0 <= h <= math.log(len(p))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    p = softmax(z)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(softmax(z + c), p, atol=1e-12)
