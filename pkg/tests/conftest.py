import numpy as np
import pytest

from evofrac import _accel
from evofrac.timegrid import Signal, TimeGrid


def smooth_bump(t, a, b):
    """C-infinity bump supported in (a, b), peak 1."""
    out = np.zeros_like(t, dtype=float)
    inside = (t > a) & (t < b)
    y = (t[inside] - a) / (b - a)
    out[inside] = np.exp(4.0 - 1.0 / (y * (1.0 - y)))
    return out


def random_signal(grid, dim, rng):
    return Signal(grid, rng.standard_normal((grid.n_steps, dim)) + 1j * rng.standard_normal((grid.n_steps, dim)))


def bandlimited_signal(grid, dim, rng, keep=32):
    """Random signal whose spectrum lives on the ``keep`` lowest |frequencies|."""
    from evofrac.timegrid import Spectrum, inverse_transform

    coeffs = np.zeros((grid.n_steps, dim), dtype=np.complex128)
    idx = np.argsort(np.abs(grid.frequencies), kind="stable")[:keep]
    coeffs[idx] = rng.standard_normal((keep, dim)) + 1j * rng.standard_normal((keep, dim))
    return inverse_transform(Spectrum(grid, coeffs))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["numpy", "numba"])
def backend(request, monkeypatch):
    if request.param == "numba" and not _accel.numba_available():
        pytest.skip("numba not installed")
    monkeypatch.setenv("EVOFRAC_NUMBA", "1" if request.param == "numba" else "0")
    return request.param


@pytest.fixture
def causal_grid():
    """rho*T = 36 with a quarter of the window before t = 0."""
    return TimeGrid.spanning(-3.0, 9.0, 4096, 3.0)
