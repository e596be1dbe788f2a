import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uillab.dataset import (
    DimensionMismatchError,
    EmbeddingFormatError,
    Profile,
    ProfileError,
    SampleSet,
    SyntheticConfig,
    TaskDataset,
    UnknownCellError,
    class_histogram,
    ingest_embeddings,
    parse_profile,
    split_counts,
    synthesize,
    write_embeddings,
)
from uillab.scenario import GridSpec, Regime, ScenarioSpec, generate_scenario


def one_task(classes, domains=1):
    cells = tuple((c, m) for c in range(classes) for m in range(domains))
    return ScenarioSpec(GridSpec(classes, domains), Regime("uil"), 1, 0, (cells,))


class TestProfile:
    def test_geometric_counts(self):
        p = Profile("geometric", 64, 0.5)
        assert [p.count(r) for r in range(4)] == [64, 32, 16, 8]

    def test_parse(self):
        assert parse_profile("constant(10)") == Profile("constant", 10, 1.0)
        assert parse_profile("geometric(160, 0.5)") == Profile("geometric", 160, 0.5)
        assert parse_profile("geometric(ratio=0.5)") == Profile("geometric", 64, 0.5)
        assert str(parse_profile("geometric(base=8,ratio=0.25)")) == "geometric(8,0.25)"

    @pytest.mark.parametrize("text", ["constant", "uniform(3)", "geometric(4,1.5)", "geometric(0,0.5)",
                                      "constant(x)"])
    def test_parse_errors(self, text):
        with pytest.raises(ProfileError):
            parse_profile(text)

    def test_profile_reaching_zero(self):
        with pytest.raises(ProfileError):
            Profile("geometric", 4, 0.25).count(2)


class TestSynthesize:
    def test_single_cell_split(self):
        cfg = SyntheticConfig(feature_dim=4, profile=Profile("constant", 10))
        (task,) = synthesize(one_task(1), cfg)
        assert len(task.train) == 8 and len(task.test) == 2
        for s in (task.train, task.test):
            assert set(s.class_ids) == {0} and set(s.domain_ids) == {0}

    def test_geometric_histogram(self):
        # hand rule: test = floor(0.2 * n), train = n - test
        expected = {0: 64 - 12, 1: 32 - 6, 2: 16 - 3, 3: 8 - 1}
        assert expected == {0: 52, 1: 26, 2: 13, 3: 7}
        cfg = SyntheticConfig(profile=Profile("geometric", 64, 0.5), holdout=0.2)
        (task,) = synthesize(one_task(4), cfg)
        assert class_histogram(task) == expected

    def test_balanced_histogram(self):
        (task,) = synthesize(one_task(2), SyntheticConfig(profile=Profile("constant", 10)))
        assert class_histogram(task) == {0: 8, 1: 8}

    def test_empty_histogram(self):
        empty = TaskDataset(0, SampleSet.empty(3, 0), SampleSet.empty(3, 0))
        assert class_histogram(empty) == {}

    def test_split_counts(self):
        assert split_counts(10, 0.2) == (8, 2)
        assert split_counts(8, 0.2) == (7, 1)
        assert split_counts(2, 0.2) == (1, 1)  # at least one test sample

    def test_deterministic_and_routed(self):
        spec = generate_scenario(GridSpec(5, 3), Regime("uil"), 4, seed=9)
        cfg = SyntheticConfig(feature_dim=5, profile=Profile("constant", 12), seed=4)
        a, b = synthesize(spec, cfg), synthesize(spec, cfg)
        assert a == b
        for task in a:
            for s in (task.train, task.test):
                for c, m in zip(s.class_ids, s.domain_ids):
                    assert spec.task_of((int(c), int(m))) == task.task_index
            assert len(task.train) + len(task.test) == 12 * len(spec.tasks[task.task_index])

    def test_low_noise_is_linearly_separable(self):
        from scipy.optimize import linprog

        spec = one_task(3, 2)
        cfg = SyntheticConfig(feature_dim=4, noise_std=1e-3, profile=Profile("constant", 20), seed=2)
        (task,) = synthesize(spec, cfg)
        X, y = task.train.features, task.train.class_ids
        # one-vs-rest hard-margin feasibility for each class via an LP
        for c in range(3):
            sign = np.where(y == c, 1.0, -1.0)
            A = -sign[:, None] * np.hstack([X, np.ones((len(X), 1))])
            res = linprog(np.zeros(5), A_ub=A, b_ub=-np.ones(len(X)), bounds=[(None, None)] * 5)
            assert res.status == 0
            w, b = res.x[:4], res.x[4]
            test_sign = np.where(task.test.class_ids == c, 1.0, -1.0)
            assert np.all(test_sign * (task.test.features @ w + b) > 0)

    def test_sample_sets_are_read_only(self):
        (task,) = synthesize(one_task(1), SyntheticConfig(profile=Profile("constant", 5)))
        with pytest.raises(ValueError):
            task.train.features[0, 0] = 1.0

    def test_iteration_yields_labeled_samples(self):
        (task,) = synthesize(one_task(2), SyntheticConfig(feature_dim=3, profile=Profile("constant", 5)))
        items = list(task.test)
        assert len(items) == 2
        assert {s.class_id for s in items} == {0, 1}
        assert items[0].features.shape == (3,) and items[0].task_index == 0

    @pytest.mark.parametrize("kw", [{"feature_dim": 1}, {"noise_std": 0}, {"holdout": 1.0},
                                    {"class_separation": -1}])
    def test_config_errors(self, kw):
        with pytest.raises(ValueError):
            SyntheticConfig(**kw)


class TestIngest:
    spec = ScenarioSpec(GridSpec(2, 2), Regime("uil"), 2, 0, (((0, 0), (1, 1)), ((0, 1), (1, 0))))

    def write(self, tmp_path, text):
        p = tmp_path / "emb.txt"
        p.write_text(text)
        return p

    def test_routing(self, tmp_path):
        p = self.write(tmp_path, "# header\n"
                       "0 0 train 2 1 2\n"
                       "1 1 test 2 3 4\n"
                       "0 1 train 2 5 6\n"
                       "1 0 test 2 7 8\n")
        t0, t1 = ingest_embeddings(p, self.spec)
        assert t0.train.features.tolist() == [[1, 2]] and t0.test.class_ids.tolist() == [1]
        assert t1.train.domain_ids.tolist() == [1] and t1.test.features.tolist() == [[7, 8]]

    def test_dimension_mismatch(self, tmp_path):
        row16 = "0 0 train 16 " + " ".join(["0.5"] * 16)
        row8 = "1 0 train 8 " + " ".join(["0.5"] * 8)
        p = self.write(tmp_path, f"{row16}\n{row8}\n")
        with pytest.raises(DimensionMismatchError):
            ingest_embeddings(p, self.spec)

    def test_unknown_cell(self, tmp_path):
        spec = generate_scenario(GridSpec(6, 1), Regime("uil"), 2, 0)
        p = self.write(tmp_path, "9 0 train 2 0 0\n")
        with pytest.raises(UnknownCellError):
            ingest_embeddings(p, spec)

    @pytest.mark.parametrize("line", ["0 0 train", "0 0 valid 1 0.5", "0 0 train 2 0.5", "a 0 train 1 1",
                                      "0 0 train 1 x"])
    def test_format_errors(self, tmp_path, line):
        p = self.write(tmp_path, "0 0 train 1 0.0\n" + line + "\n")
        with pytest.raises(EmbeddingFormatError) as info:
            ingest_embeddings(p, self.spec)
        assert info.value.lineno == 2

    def test_write_then_ingest_round_trip(self, tmp_path):
        spec = generate_scenario(GridSpec(4, 3), Regime("uil"), 3, seed=5)
        tasks = synthesize(spec, SyntheticConfig(feature_dim=3, profile=Profile("geometric", 10, 0.5)))
        write_embeddings(tasks, tmp_path / "e.txt")
        assert ingest_embeddings(tmp_path / "e.txt", spec) == tasks


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 200), h=st.floats(0.01, 0.99))
def test_split_property(n, h):
    train, test = split_counts(n, h)
    assert train + test == n
    assert test >= 1
    assert test == max(1, int(np.floor(h * n + 1e-9)))
