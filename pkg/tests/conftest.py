import numpy as np
import pytest

from zsmg.instances import random_game

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_game():
    return random_game(3, 2, 2, 0.8, None, 7)


def matching_pennies(gamma=0.0, signed=False):
    from zsmg.game_core import MarkovGame

    r = np.array([[[1.0, -1.0], [-1.0, 1.0]]]) if signed else np.array([[[1.0, 0.0], [0.0, 1.0]]])
    return MarkovGame(np.ones((1, 2, 2, 1)), r, gamma, strict_reward=not signed)
