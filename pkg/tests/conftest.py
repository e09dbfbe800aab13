import numpy as np
import pytest

from nope.model import SystemDims, generate_channel, make_rng


@pytest.fixture
def rng():
    return make_rng(20240611)


def random_system(rng, B=64, U=16, snr_noise=0.05, points=None):
    """Channel, symbols and received vector for one trial."""
    H = np.asarray(generate_channel(SystemDims(B, U), rng=rng))
    if points is None:
        x = (rng.standard_normal(U) + 1j * rng.standard_normal(U)) / np.sqrt(2)
    else:
        x = points[rng.integers(0, len(points), U)]
    n = (rng.standard_normal(B) + 1j * rng.standard_normal(B)) * np.sqrt(snr_noise / 2)
    return H, x, H @ x + n


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def report_criterion(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
