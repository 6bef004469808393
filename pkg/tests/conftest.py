import numpy as np
import pytest

from swsmap.phantom import PRESETS, NoiseParams, PulseParams, make_inclusion_speed_map, synth_volume


@pytest.fixture(scope="session")
def homog15():
    return PRESETS["homog15"].volume()


@pytest.fixture(scope="session")
def homog30():
    return PRESETS["homog30"].volume()


@pytest.fixture(scope="session")
def small_inclusion():
    """Small noisy inclusion volume for fast invariance checks."""
    sp = make_inclusion_speed_map(48, 12, 5.0, 25, 45, (24, 6), 1.0)
    return synth_volume(sp, PulseParams(), NoiseParams(jitter_std=0.1, reflect_gain=0.3), 10_000.0, 120, seed=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash[ACCEPTANCE]

    def record(number, title, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
