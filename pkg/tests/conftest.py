import numpy as np
import pytest

from shotmem.world import ShotPlan, StorySpec


def make_spec(actions=("static", "static"), shape="circle", hue="red", env=("lagoon", "plain")):
    shots = tuple(ShotPlan(("e0",), "v0", a) for a in actions)
    return StorySpec(shots, {"e0": (shape, hue)}, {"v0": env})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
