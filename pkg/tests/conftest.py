import numpy as np
import pytest

from dlnsgpr.cmapss import TrajectorySet

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_row_text(engine, cycle, values):
    return " ".join([str(engine), str(cycle)] + [repr(float(v)) for v in values])


@pytest.fixture
def tiny_training():
    rows = {
        1: np.arange(24 * 5, dtype=float).reshape(5, 24),
        2: np.ones((3, 24)),
    }
    return TrajectorySet(rows, "training")


@pytest.fixture(scope="session")
def small_fleet():
    from dlnsgpr.evaluation import synth_generate

    return synth_generate(12, (60, 120), noise_std=0.05, seed=0)


@pytest.fixture(scope="session")
def small_model(small_fleet):
    from dlnsgpr.pipeline import DLNSGPR

    training, _, _ = small_fleet
    return DLNSGPR(epochs=15, gp_restarts=2, seed=0).fit(training)
