from __future__ import annotations

import numpy as np
import pytest

from oodreject.posthoc import ScoredDataset
from oodreject.synth_world import default_setup, ood_mean3_setup


@pytest.fixture(scope="session")
def setup():
    return default_setup()


@pytest.fixture(scope="session")
def setup3():
    """The variant with OOD mean 3, used by the hand-derived density values."""
    return ood_mean3_setup()


@pytest.fixture
def four_samples():
    # ID(0.1, loss 0), OOD(0.2), ID(0.3, loss 1), OOD(0.4)
    s = np.array([0.1, 0.2, 0.3, 0.4])
    return ScoredDataset(
        score_r=s,
        is_ood=np.array([False, True, False, True]),
        loss=np.array([0.0, 0.0, 1.0, 0.0]),
        score_g=s.copy(),
    )


@pytest.fixture(scope="session")
def synthetic_200k():
    from oodreject.benchmark import synthetic_scores

    return synthetic_scores(default_setup(), 200_000, 1)


# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
