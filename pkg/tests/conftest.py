import numpy as np
import pytest

from uillab.dataset import Profile, SyntheticConfig, synthesize
from uillab.scenario import GridSpec, Regime, generate_scenario


def make_stream(classes=6, domains=4, tasks=8, seed=0, dim=16, profile=Profile("constant", 40),
                noise=1.5, regime="uil", **kw):
    spec = generate_scenario(GridSpec(classes, domains), Regime(regime, kw.pop("vil_classes", None)),
                             tasks, seed)
    cfg = SyntheticConfig(feature_dim=dim, noise_std=noise, profile=profile, seed=seed, **kw)
    return spec, synthesize(spec, cfg)


@pytest.fixture
def small_stream():
    return make_stream(classes=4, domains=2, tasks=3, seed=1, dim=6, profile=Profile("constant", 20))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
