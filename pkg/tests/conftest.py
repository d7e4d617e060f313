import numpy as np
import pytest

from kdvlab.grid import WaveField, make_grid

ACCEPTANCE_LINES = []


def record(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_random(grid, rng, band=3.0):
    """Random complex field with Fourier support in |xi| <= band (resolved)."""
    c = np.zeros(grid.N, complex)
    m = np.abs(grid.xi) <= band
    c[m] = rng.standard_normal(m.sum()) + 1j * rng.standard_normal(m.sum())
    # Gaussian envelope keeps it localized so V products stay resolved
    u = np.fft.ifft(c) * np.exp(-grid.x**2 / 20)
    return WaveField(grid, u)


@pytest.fixture
def grid30():
    return make_grid(30, 1024)
