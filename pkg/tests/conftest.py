import numpy as np
import pytest

from pillarlens.wave import FarFieldMap


def gaussian_farfield(na, dNA=0.005, wavelength=1.3, center=(0.0, 0.0), clip=True):
    """Synthetic far field with 1/e^2 NA ``na``."""
    m = int(np.floor(1.0 / dNA))
    a = np.arange(-m, m + 1) * dNA
    nx, ny = np.meshgrid(a, a, indexing="xy")
    inten = np.exp(-2 * ((nx - center[0]) ** 2 + (ny - center[1]) ** 2) / na**2)
    if clip:
        inten[nx**2 + ny**2 > 1] = 0
    return FarFieldMap(inten, dNA, wavelength, float(inten.sum() * dNA**2))


def ring_farfield(rho0, width=0.01, dNA=0.005):
    m = int(np.floor(1.0 / dNA))
    a = np.arange(-m, m + 1) * dNA
    nx, ny = np.meshgrid(a, a, indexing="xy")
    inten = np.exp(-((np.hypot(nx, ny) - rho0) ** 2) / width**2)
    return FarFieldMap(inten, dNA, 1.3, float(inten.sum() * dNA**2))


@pytest.fixture
def small_ctx():
    from pillarlens.optimize import DesignContext, GridConfig

    return DesignContext(grid=GridConfig(n=128, pitch=0.1, pad_factor=2, slice_dz=0.3))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
