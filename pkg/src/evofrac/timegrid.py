"""Exponentially weighted time grids and the discrete Fourier-Laplace transform.

A signal ``u`` sampled at ``t_j = t_start + j*dt`` lives in the weighted space
with inner product

    <u|v>_rho = sum_j <u_j|v_j> exp(-2 rho t_j) dt.

The transform multiplies by ``exp(-rho t_j)`` and applies a unitary DFT scaled
by ``sqrt(dt)``, so that it is an isometry from that weighted inner product
onto the plain Euclidean one on the coefficients.  Frequency ``k`` carries the
angular frequency ``lambda_k = 2 pi k / (n dt)`` mapped into ``(-pi/dt, pi/dt]``
and the differentiation symbol ``i lambda_k + rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DimensionError, GridError

__all__ = [
    "DEFAULT_DAMPING",
    "TimeGrid",
    "Signal",
    "Spectrum",
    "forward_transform",
    "inverse_transform",
    "weighted_inner",
    "weighted_norm",
    "weighted_mass",
    "write_signal_csv",
    "read_signal_csv",
]

DEFAULT_DAMPING = 30.0


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start + j*dt``, ``j = 0..n_steps-1``, with weight ``rho``."""

    t_start: float
    dt: float
    n_steps: int
    rho: float
    damping: float = DEFAULT_DAMPING

    def __post_init__(self) -> None:
        problems = []
        if not (math.isfinite(self.dt) and self.dt > 0):
            problems.append(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.rho) and self.rho > 0):
            problems.append(f"rho must be positive, got {self.rho}")
        if not math.isfinite(self.t_start):
            problems.append(f"t_start must be finite, got {self.t_start}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2 or not _is_power_of_two(int(self.n_steps)):
            problems.append(f"n_steps must be a power of two >= 2, got {self.n_steps}")
        if problems:
            raise GridError("; ".join(problems))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def spanning(cls, t_start: float, t_stop: float, n_steps: int, rho: float, **kw) -> "TimeGrid":
        """Grid of ``n_steps`` nodes covering ``[t_start, t_stop)``."""
        return cls(t_start, (t_stop - t_start) / n_steps, n_steps, rho, **kw)

    @property
    def span(self) -> float:
        return self.n_steps * self.dt

    @property
    def t_stop(self) -> float:
        return self.t_start + self.span

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps)

    @property
    def weights(self) -> np.ndarray:
        """``exp(-rho t_j)``, the pointwise weight."""
        return np.exp(-self.rho * self.times)

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies in natural FFT order, Nyquist stored as ``+pi/dt``."""
        n = self.n_steps
        k = np.fft.fftfreq(n, d=1.0 / n)
        k[n // 2] = n // 2
        return 2.0 * np.pi * k / (n * self.dt)

    @property
    def symbols(self) -> np.ndarray:
        """``i lambda_k + rho`` for every frequency."""
        return 1j * self.frequencies + self.rho

    def node_index(self, t: float) -> int:
        """Index of the grid node nearest to ``t``."""
        j = int(round((t - self.t_start) / self.dt))
        if not 0 <= j < self.n_steps:
            raise GridError(f"time {t} lies outside the grid [{self.t_start}, {self.t_stop})")
        return j

    def damping_ok(self) -> bool:
        return self.rho * self.span >= self.damping

    def check_damping(self) -> None:
        """Raise unless ``rho * span`` meets the wrap-around damping budget."""
        if not self.damping_ok():
            raise GridError(
                f"rho*T = {self.rho * self.span:.6g} is below the damping budget "
                f"{self.damping:g}; periodic wrap-around is not suppressed"
            )

    def with_rho(self, rho: float) -> "TimeGrid":
        return TimeGrid(self.t_start, self.dt, self.n_steps, rho, self.damping)


def _as_state_array(values, n: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n or arr.shape[1] < 1:
        raise DimensionError(f"expected values of shape ({n}, d), got {np.shape(values)}")
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Signal:
    """Vector-valued samples, one row of dimension ``dim`` per grid node."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_state_array(self.values, self.grid.n_steps))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int) -> "Signal":
        return cls(grid, np.zeros((grid.n_steps, dim), dtype=np.complex128))

    def with_values(self, values) -> "Signal":
        return Signal(self.grid, values)

    def __add__(self, other: "Signal") -> "Signal":
        _check_compatible(self, other)
        return Signal(self.grid, self.values + other.values)

    def __sub__(self, other: "Signal") -> "Signal":
        _check_compatible(self, other)
        return Signal(self.grid, self.values - other.values)

    def __mul__(self, c: complex) -> "Signal":
        return Signal(self.grid, c * self.values)

    __rmul__ = __mul__

    def shifted(self, m: int) -> "Signal":
        """Delay by ``m`` nodes (advance if negative), zero-filling vacated nodes."""
        out = np.zeros_like(self.values)
        if m >= 0:
            out[m:] = self.values[: self.grid.n_steps - m]
        else:
            out[:m] = self.values[-m:]
        return Signal(self.grid, out)


@dataclass(frozen=True)
class Spectrum:
    """Fourier-Laplace coefficients of a :class:`Signal`, natural FFT order."""

    grid: TimeGrid
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "coefficients", _as_state_array(self.coefficients, self.grid.n_steps)
        )

    @property
    def dim(self) -> int:
        return self.coefficients.shape[1]

    def pairs(self) -> Iterator[tuple[float, np.ndarray]]:
        """Yield ``(lambda_k, coefficient_k)`` in ascending frequency."""
        lam = self.grid.frequencies
        for k in np.argsort(lam, kind="stable"):
            yield float(lam[k]), self.coefficients[k]


def _check_compatible(a: Signal, b: Signal) -> None:
    if a.grid != b.grid:
        raise DimensionError("signals live on different grids")
    if a.dim != b.dim:
        raise DimensionError(f"signal dimensions differ: {a.dim} vs {b.dim}")


def forward_transform(u: Signal) -> Spectrum:
    g = u.grid
    w = g.weights[:, None] * u.values
    return Spectrum(g, math.sqrt(g.dt) * np.fft.fft(w, axis=0, norm="ortho"))


def inverse_transform(s: Spectrum) -> Signal:
    g = s.grid
    w = np.fft.ifft(s.coefficients, axis=0, norm="ortho") / math.sqrt(g.dt)
    return Signal(g, w * np.exp(g.rho * g.times)[:, None])


def weighted_inner(u: Signal, v: Signal) -> complex:
    """``<u|v>_rho``, conjugate-linear in the first argument."""
    _check_compatible(u, v)
    w2 = np.exp(-2.0 * u.grid.rho * u.grid.times) * u.grid.dt
    return complex(np.sum(w2[:, None] * np.conj(u.values) * v.values))


def weighted_norm(u: Signal) -> float:
    w = np.exp(-u.grid.rho * u.grid.times) * math.sqrt(u.grid.dt)
    x = w[:, None] * np.abs(u.values)
    # rescale first so tiny or huge samples do not under- or overflow when squared
    scale = float(x.max(initial=0.0))
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    return scale * float(math.sqrt(np.sum((x / scale) ** 2)))


def weighted_mass(u: Signal, before: float | None = None) -> float:
    """Squared weighted norm, optionally restricted to nodes with ``t < before``."""
    g = u.grid
    w2 = np.exp(-2.0 * g.rho * g.times) * g.dt
    mass = w2[:, None] * np.abs(u.values) ** 2
    if before is not None:
        mass = mass[g.times < before]
    return float(np.sum(mass))


def _format(x: float) -> str:
    return format(float(x), ".17g")


def write_signal_csv(u: Signal, path: str | Path) -> None:
    """Write ``t,re_0,im_0,...`` rows with round-trippable floats."""
    cols = ["t"]
    for c in range(u.dim):
        cols += [f"re_{c}", f"im_{c}"]
    lines = [",".join(cols)]
    times = u.grid.times
    for j in range(u.grid.n_steps):
        row = [_format(times[j])]
        for z in u.values[j]:
            row += [_format(z.real), _format(z.imag)]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_signal_csv(path: str | Path, rho: float, damping: float = DEFAULT_DAMPING) -> Signal:
    """Read a signal CSV; the grid is reconstructed from the ``t`` column."""
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise GridError(f"{path}: empty signal file")
    header = [h.strip() for h in text[0].split(",")]
    if header[0] != "t" or len(header) < 3 or len(header) % 2 == 0:
        raise DimensionError(f"{path}: header must be t,re_0,im_0,..., got {text[0]!r}")
    data = np.array([[float(x) for x in line.split(",")] for line in text[1:]], dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DimensionError(f"{path}: ragged rows")
    t = data[:, 0]
    if len(t) < 2:
        raise GridError(f"{path}: need at least two rows")
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * max(1.0, abs(t).max())):
        raise GridError(f"{path}: time column is not uniform")
    grid = TimeGrid(float(t[0]), float(dt), len(t), rho, damping)
    values = data[:, 1::2] + 1j * data[:, 2::2]
    return Signal(grid, values)
