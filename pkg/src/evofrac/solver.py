"""Frequency-domain solver for ``(d0 M(d0**-1) + A) U = f`` and its checks.

Every discrete frequency gives an independent dense system

    B_k = s_k M(1/s_k) + A,   s_k = i lambda_k + rho,

solved by LU with partial pivoting.  Frequencies are split into contiguous
chunks that run on a thread pool; each chunk writes back into its own slice so
the result does not depend on scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import DimensionError, GridError, LawError, SingularSystemError
from .fraccalc import apply_frac_power
from .material import MaterialLaw, system_symbol
from .spatial import SkewOperator
from .timegrid import Signal, Spectrum, TimeGrid, forward_transform, inverse_transform, weighted_mass

__all__ = [
    "EvolutionaryProblem",
    "DeltaSource",
    "IvpResult",
    "worker_count",
    "solve",
    "residual_norms",
    "causality_check",
    "ivp_solve_delta",
    "ivp_solve_history",
    "discrete_delta",
    "cq_weights",
    "time_stepping_oracle",
    "fokker_planck_reduce",
]

RESIDUAL_RTOL = 1e-10
RANGE_RTOL = 1e-8
_CHUNK = 256


@dataclass(frozen=True)
class EvolutionaryProblem:
    law: MaterialLaw
    a: SkewOperator
    grid: TimeGrid
    certificate: object | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.law.dim != self.a.dim:
            raise DimensionError(f"law dimension {self.law.dim} does not match operator dimension {self.a.dim}")
        if self.certificate is not None:
            thr = getattr(self.certificate, "rho_threshold", 0.0)
            if not self.grid.rho > thr:
                raise GridError(f"rho = {self.grid.rho:g} is not above the certified threshold {thr:g}")

    @property
    def dim(self) -> int:
        return self.law.dim

    @property
    def rho(self) -> float:
        return self.grid.rho

    def system_matrices(self, k: slice | np.ndarray | None = None) -> np.ndarray:
        s = self.grid.symbols if k is None else self.grid.symbols[k]
        return system_symbol(self.law, s) + self.a.entries


@dataclass(frozen=True)
class DeltaSource:
    """Impulse ``delta(t - t_node) W`` discretized as ``W / dt`` on one node."""

    node_index: int
    weight_vector: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.weight_vector, dtype=np.complex128)).copy()
        if w.ndim != 1:
            raise DimensionError("weight_vector must be one-dimensional")
        w.setflags(write=False)
        object.__setattr__(self, "weight_vector", w)
        object.__setattr__(self, "node_index", int(self.node_index))


@dataclass(frozen=True)
class IvpResult:
    solution: Signal
    jump_defect: float
    jump_defect_abs: float


def worker_count() -> int:
    """Thread cap from ``EVOFRAC_THREADS``, defaulting to the CPU count."""
    raw = os.environ.get("EVOFRAC_THREADS", "").strip()
    n = os.cpu_count() or 1
    if raw:
        try:
            n = max(1, int(raw))
        except ValueError:
            raise ValueError(f"EVOFRAC_THREADS must be a positive integer, got {raw!r}") from None
    return n


def _solve_chunk(p: EvolutionaryProblem, idx: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    lam = p.grid.frequencies[idx]
    b = p.system_matrices(idx)
    try:
        x = np.linalg.solve(b, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        x = np.empty_like(rhs)
        for i in range(len(idx)):
            try:
                x[i] = np.linalg.solve(b[i], rhs[i])
            except np.linalg.LinAlgError:
                raise SingularSystemError(
                    f"system matrix is singular at lambda = {lam[i]:.6g}", float(lam[i])
                ) from None
    res = np.einsum("kij,kj->ki", b, x) - rhs
    scale = np.linalg.norm(rhs, axis=1)
    bad = np.linalg.norm(res, axis=1) > RESIDUAL_RTOL * scale
    if np.any(bad):
        x[bad] -= np.linalg.solve(b[bad], res[bad][..., None])[..., 0]
        res = np.einsum("kij,kj->ki", b[bad], x[bad]) - rhs[bad]
        still = np.linalg.norm(res, axis=1) > RESIDUAL_RTOL * scale[bad]
        if np.any(still):
            i = int(np.flatnonzero(bad)[np.argmax(still)])
            raise SingularSystemError(
                f"relative residual above {RESIDUAL_RTOL:g} at lambda = {lam[i]:.6g}", float(lam[i])
            )
    return x


def _solve_spectrum(p: EvolutionaryProblem, fhat: np.ndarray) -> np.ndarray:
    n = p.grid.n_steps
    out = np.zeros_like(fhat)
    chunks = [np.arange(i, min(i + _CHUNK, n)) for i in range(0, n, _CHUNK)]
    workers = min(worker_count(), len(chunks))

    def job(idx):
        out[idx] = _solve_chunk(p, idx, fhat[idx])

    if workers <= 1:
        for idx in chunks:
            job(idx)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(job, idx) for idx in chunks]:
                fut.result()
    return out


def _check_rhs(p: EvolutionaryProblem, f: Signal) -> None:
    if f.grid != p.grid:
        raise GridError("right-hand side lives on a different grid")
    if f.dim != p.dim:
        raise DimensionError(f"right-hand side dimension {f.dim} does not match problem dimension {p.dim}")


def solve(p: EvolutionaryProblem, f: Signal, check_damping: bool = True) -> Signal:
    """Spectral solution of ``(d0 M(d0**-1) + A) U = f`` on the problem grid."""
    _check_rhs(p, f)
    if check_damping:
        p.grid.check_damping()
    fhat = forward_transform(f).coefficients
    return inverse_transform(Spectrum(p.grid, _solve_spectrum(p, fhat)))


def residual_norms(p: EvolutionaryProblem, u: Signal, f: Signal) -> np.ndarray:
    """Per-frequency ``||B_k u_k - f_k|| / ||f_k||`` (absolute where ``f_k = 0``)."""
    uh = forward_transform(u).coefficients
    fh = forward_transform(f).coefficients
    res = np.linalg.norm(np.einsum("kij,kj->ki", p.system_matrices(), uh) - fh, axis=1)
    scale = np.linalg.norm(fh, axis=1)
    return np.where(scale > 0, res / np.where(scale > 0, scale, 1.0), res)


def causality_check(p: EvolutionaryProblem, f: Signal, a: float) -> float:
    """Share of the solution's weighted mass that lies before ``a``.

    ``f`` must carry relative weighted mass at most ``1e-12`` before ``a``.
    """
    _check_rhs(p, f)
    total_f = weighted_mass(f)
    if total_f == 0.0:
        return 0.0
    if weighted_mass(f, before=a) > 1e-12 * total_f:
        raise ValueError(f"f is not supported in [{a}, inf): it has mass before a")
    u = solve(p, f)
    total = weighted_mass(u)
    return weighted_mass(u, before=a) / total if total > 0 else 0.0


# ---------------------------------------------------------------------------
# initial-value formulations
# ---------------------------------------------------------------------------

def _ivp_block(law: MaterialLaw) -> tuple[float, np.ndarray]:
    """``(alpha, M_alpha)`` of a law ``d0**-alpha M_alpha + d0**-1 M1``.

    A law without fractional blocks is read as the classical case
    ``alpha = 0`` with ``M_0 = m0``.
    """
    if not law.frac:
        return 0.0, law.m0.entries
    if len(law.frac) != 1 or not law.m0.is_zero() or law.tail:
        raise LawError("initial-value formulations need a single fractional block, zero m0 and no tail")
    (alpha, blk), = law.frac.items()
    return alpha, blk.entries


def _check_range(m: np.ndarray, w: np.ndarray) -> None:
    if not np.any(w):
        return
    x, *_ = np.linalg.lstsq(m, w, rcond=None)
    if np.linalg.norm(m @ x - w) > RANGE_RTOL * np.linalg.norm(w):
        raise LawError("initial value does not lie in the range of the fractional block")


def discrete_delta(grid: TimeGrid, node: int, vector) -> Signal:
    """``vector / dt`` on one node, zero elsewhere."""
    v = np.atleast_1d(np.asarray(vector, dtype=np.complex128))
    if not 0 <= node < grid.n_steps:
        raise GridError(f"node {node} lies outside the grid")
    vals = np.zeros((grid.n_steps, v.size), dtype=np.complex128)
    vals[node] = v / grid.dt
    return Signal(grid, vals)


def _h_minus_one(a: SkewOperator, x: np.ndarray) -> float:
    return float(np.linalg.norm(np.linalg.solve(a.entries + np.eye(a.dim), x)))


def ivp_solve_delta(p: EvolutionaryProblem, f: Signal, src: DeltaSource) -> IvpResult:
    """Solve with right-hand side ``f + delta W`` and measure the jump condition.

    The jump of ``d0**-alpha M_alpha U`` across the source cell is
    ``dt * (d0**(1-alpha) M_alpha U)`` at the source node; its distance from
    ``W`` is reported in the ``(A + I)**-1`` norm, absolute and relative to
    ``W``.
    """
    _check_rhs(p, f)
    w = src.weight_vector
    if w.size != p.dim:
        raise DimensionError(f"weight vector has dimension {w.size}, expected {p.dim}")
    alpha, m_alpha = _ivp_block(p.law)
    _check_range(m_alpha, w)
    u = solve(p, f + discrete_delta(p.grid, src.node_index, w))
    mu = Signal(p.grid, u.values @ m_alpha.T)
    rate = apply_frac_power(1.0 - alpha, mu)
    jump = p.grid.dt * rate.values[src.node_index]
    abs_defect = _h_minus_one(p.a, jump - w)
    ref = _h_minus_one(p.a, w)
    rel = abs_defect / ref if ref > 0 else abs_defect
    return IvpResult(u, rel, abs_defect)


def ivp_solve_history(p: EvolutionaryProblem, g: Signal, v_alpha, node: int | None = None) -> Signal:
    """Solve the history formulation by moving ``chi V_alpha`` to the right.

    ``d0**(1-alpha) (M_alpha V - chi V_alpha) + M1 V + A V = G`` becomes a
    standard solve with right-hand side ``G + d0**-alpha (delta V_alpha)``.
    The step of ``chi`` sits on ``node`` (default: the node nearest ``t = 0``).
    """
    _check_rhs(p, g)
    v = np.atleast_1d(np.asarray(v_alpha, dtype=np.complex128))
    if v.size != p.dim:
        raise DimensionError(f"history vector has dimension {v.size}, expected {p.dim}")
    alpha, m_alpha = _ivp_block(p.law)
    _check_range(m_alpha, v)
    if node is None:
        node = p.grid.node_index(0.0)
    hist = apply_frac_power(-alpha, discrete_delta(p.grid, node, v))
    return solve(p, g + hist)


# ---------------------------------------------------------------------------
# time-stepping oracle
# ---------------------------------------------------------------------------

def cq_weights(gamma: float, n: int) -> np.ndarray:
    """Coefficients of ``(1 - zeta)**gamma``: backward-Euler convolution quadrature."""
    w = np.empty(n)
    w[0] = 1.0
    for j in range(1, n):
        w[j] = w[j - 1] * (1.0 - (gamma + 1.0) / j)
    return w


def time_stepping_oracle(p: EvolutionaryProblem, f: Signal, t0: float) -> Signal:
    """Implicit-Euler convolution quadrature started at ``t0`` with zero history.

    ``d0 M0 U`` becomes a backward difference and each ``d0**(1-alpha)
    M_alpha U`` a Grunwald-type sum with weights from :func:`cq_weights`.
    First order in ``dt``.  Laws with a tail are rejected.
    """
    _check_rhs(p, f)
    law = p.law
    if law.tail:
        raise LawError("the time-stepping oracle does not support tail terms")
    g = p.grid
    k0 = int(math.ceil((t0 - g.t_start) / g.dt - 1e-9))
    if not 0 <= k0 < g.n_steps:
        raise GridError(f"t0 = {t0} lies outside the grid")
    if np.any(f.values[:k0]):
        raise ValueError("f must vanish before t0")
    n = g.n_steps - k0
    dt = g.dt
    m0 = law.m0.entries
    step = m0 / dt + law.m1.entries + p.a.entries
    mats, rows = [], []
    for alpha, blk in law.frac.items():
        scale = dt ** (alpha - 1.0)
        step = step + scale * blk.entries
        mats.append(scale * blk.entries)
        rows.append(cq_weights(1.0 - alpha, n))
    d = law.dim
    mats_arr = np.array(mats, dtype=np.complex128).reshape(len(mats), d, d)
    w_arr = np.array(rows, dtype=np.complex128).reshape(len(rows), n)
    step_inv = np.linalg.inv(step)
    march = _accel.cq_march(step_inv, -m0 / dt, w_arr, mats_arr, f.values[k0:])
    out = np.zeros((g.n_steps, d), dtype=np.complex128)
    out[k0:] = march
    return Signal(g, out)


# ---------------------------------------------------------------------------
# Fokker-Planck flux identity
# ---------------------------------------------------------------------------

def fokker_planck_reduce(p: EvolutionaryProblem, u: Signal, f: Signal | None = None) -> Signal:
    """Residual of the flux row ``Phi + mu11^-1 (grad theta + mu10 theta)``.

    With a flux-row source ``f_Phi`` the residual subtracts ``mu11^-1 f_Phi``.
    """
    law = p.law
    if law.block_dims is None or law.block_dims != p.a.block_dims:
        raise DimensionError("law and operator need matching (density, flux) block dims")
    d0, _ = law.block_dims
    for blk in [law.m0] + list(law.frac.values()):
        if np.any(blk.entries[d0:, :]) or np.any(blk.entries[:, d0:]):
            raise LawError("law is not Fokker-Planck structured: flux row carries memory terms")
    if u.dim != law.dim or u.grid != p.grid:
        raise DimensionError("solution does not match the problem")
    m1 = law.m1.entries
    mu10, mu11 = m1[d0:, :d0], m1[d0:, d0:]
    theta, phi = u.values[:, :d0], u.values[:, d0:]
    rhs = theta @ (p.a.lower_block + mu10).T
    if f is not None:
        rhs = rhs - f.values[:, d0:]
    res = phi + np.linalg.solve(mu11, rhs.T).T
    return Signal(u.grid, res)
