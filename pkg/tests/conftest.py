import numpy as np
import pytest
from hypothesis import settings

from attackimpact.models import random_mdp

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def tiny_mdp(seed, **kw):
    return random_mdp(np.random.default_rng(seed), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Lines reported by the acceptance suite, printed in the terminal summary so
# they appear even when output capturing is on.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
