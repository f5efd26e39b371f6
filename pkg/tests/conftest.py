import numpy as np
import pytest

from srlab.corrective import synthesize_gain
from srlab.dynamics import PendulumParams, SimConfig
from srlab.safety import StateRanges


@pytest.fixture(scope="session")
def nominal():
    return PendulumParams()


@pytest.fixture(scope="session")
def sim():
    return SimConfig()


@pytest.fixture(scope="session")
def ranges():
    return StateRanges()


@pytest.fixture(scope="session")
def gain(nominal):
    return synthesize_gain(nominal)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(nominal, gain, sim):
    from srlab.datagen import DatasetSpec, build_dataset
    spec = DatasetSpec(k=150, alpha=0.5, seed=11, rollout_episodes=20, rollout_length=100)
    return build_dataset(spec, nominal, gain, sim)


@pytest.fixture(scope="session")
def small_model(small_dataset, ranges, gain):
    from srlab.embedding import TsneConfig, run_tsne
    from srlab.safe_region import SafeRegionModel
    cfg = TsneConfig(perplexity=10.0, iterations=300, exaggeration_iters=100, momentum_switch=100)
    emb = run_tsne(small_dataset.states, small_dataset.labels, ranges, cfg)
    return SafeRegionModel(emb, gain=gain, ranges=ranges)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
