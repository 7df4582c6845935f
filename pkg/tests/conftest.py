import numpy as np
import pytest

from stochhyp import Field, Grid1D, TimeSymbolFamily, sample_brownian

_LINES = []


def record(label: str, ok: bool, detail: str) -> None:
    """Register one acceptance verdict for the terminal summary."""
    _LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    print(_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid():
    return Grid1D(64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_field(grid, rng, components=1, kmax=None, real=False):
    """Random field; band-limited to ``|k| <= kmax`` when given."""
    shape = (components, grid.N)
    v = rng.normal(size=shape) + (0 if real else 1j * rng.normal(size=shape))
    if kmax is not None:
        vh = np.fft.fft(v, axis=-1)
        vh[:, np.abs(grid.wavenumbers) > kmax] = 0
        v = np.fft.ifft(vh, axis=-1)
        if real:
            v = v.real
    return Field(grid, v)


def const(sym, T=1.0):
    return TimeSymbolFamily.constant(sym, T)


def path(M=256, idx=0, T=1.0):
    return sample_brownian(M, T, 12345, idx)
