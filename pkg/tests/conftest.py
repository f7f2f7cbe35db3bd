import numpy as np
import pytest

from vsrfault import SignalConfig

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def cfg():
    return SignalConfig()


@pytest.fixture
def quiet_cfg():
    return SignalConfig(amplitude_A=10.0, noise_sigma_frac=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance_line():
    def record(name: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
