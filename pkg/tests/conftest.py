import numpy as np
import pytest

from sonarbg.channel import build_model
from sonarbg.signals import WaveformSpec, companion_waveform, generate_lfm


_CRITERIA: list[str] = []


def summary_line(criterion, passed, detail=""):
    """One greppable line per acceptance criterion, repeated in the terminal summary."""
    status = "PASS" if passed else "FAIL"
    line = f"CRITERION {criterion}: {status} {detail}".rstrip()
    _CRITERIA.append(line)
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def spec():
    return WaveformSpec()


@pytest.fixture(scope="session")
def chirp(spec):
    return generate_lfm(spec), companion_waveform(spec)


@pytest.fixture(scope="session")
def small_model(chirp, spec):
    """N=96, N_l=24, M=6: cheap enough for dense cross-checks."""
    s, u = chirp
    return build_model(s, u, 96, 24, 6, spec.bandwidth_hz)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
