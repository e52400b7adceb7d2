"""Fractional powers of the time derivative as spectral multipliers.

``apply_frac_power(gamma, u)`` multiplies the Fourier-Laplace coefficients of
``u`` by ``(i lambda + rho)**gamma`` on the principal branch.  Since
``rho > 0`` the base stays in the open right half-plane, so the powers
compose exactly: ``gamma = -alpha`` is the causal fractional integral and
positive orders are derivatives.

The quadrature oracles in this module work directly in the time domain and
never touch the transform, so they can be used to cross-check it.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma as gamma_fn

from . import _accel
from .timegrid import Signal, forward_transform, inverse_transform

__all__ = [
    "symbol_power",
    "symbol_real_part",
    "apply_frac_power",
    "rl_integral_weights",
    "rl_integral_oracle",
    "riemann_liouville_derivative_oracle",
    "caputo_derivative_oracle",
    "phi_alpha",
    "rho0_for",
    "monotonicity_violations",
]


def _check_rho(rho) -> None:
    if np.any(np.asarray(rho) <= 0):
        raise ValueError(f"rho must be positive, got {rho}")


def symbol_power(gamma: float, lam, rho):
    """Principal value of ``(i*lam + rho)**gamma``; vectorizes over ``lam``/``rho``."""
    _check_rho(rho)
    base = 1j * np.asarray(lam, dtype=float) + np.asarray(rho, dtype=float)
    if float(gamma).is_integer() and abs(gamma) <= 8:
        # exact products avoid the cancellation in Re exp(log s) near arg s = +-pi/2
        out = np.ones_like(base)
        for _ in range(int(abs(gamma))):
            out = out * base
        if gamma < 0:
            out = 1.0 / out
    else:
        out = np.exp(gamma * np.log(base))
    return complex(out) if out.ndim == 0 else out


def symbol_real_part(gamma: float, lam, rho):
    """Closed form ``rho**gamma * cos(gamma*b) / cos(b)**gamma`` with ``b = arg(i lam + rho)``."""
    _check_rho(rho)
    lam = np.asarray(lam, dtype=float)
    rho = np.asarray(rho, dtype=float)
    b = np.arctan2(lam, rho)
    cos_b = rho / np.hypot(lam, rho)  # cos(arctan2) loses digits near +-pi/2
    return rho**gamma * np.cos(gamma * b) / cos_b**gamma


def apply_frac_power(gamma: float, u: Signal) -> Signal:
    """``d0**gamma u``; negative ``gamma`` integrates, positive differentiates.

    Positive orders amplify high frequencies like ``|lambda|**gamma``; inputs
    are expected to be resolved (smooth on the grid scale).  No filtering is
    applied.
    """
    if gamma == 0:
        return u
    s = forward_transform(u)
    mult = symbol_power(gamma, u.grid.frequencies, u.grid.rho)
    return inverse_transform(type(s)(s.grid, mult[:, None] * s.coefficients))


# ---------------------------------------------------------------------------
# time-domain oracles
# ---------------------------------------------------------------------------

def _check_unit_order(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")


def rl_integral_weights(alpha: float, n: int, dt: float) -> np.ndarray:
    """Exact kernel moments over node-centred cells.

    ``w[m] = (1/Gamma(alpha)) * int (t_j - s)**(alpha-1) ds`` over the cell of
    node ``j - m``; for ``m = 0`` only the half cell below ``t_j`` counts.
    """
    m = np.arange(n, dtype=float)
    hi = (m + 0.5) ** alpha
    lo = np.where(m > 0, np.abs(m - 0.5) ** alpha, 0.0)
    return (hi - lo) * dt**alpha / gamma_fn(alpha + 1.0)


def rl_integral_oracle(alpha: float, u: Signal) -> Signal:
    """Product-integration quadrature of ``(1/Gamma(a)) int_{-inf}^t (t-s)**(a-1) u(s) ds``.

    ``u`` is treated as piecewise constant on node-centred cells and zero
    before the first cell, so node ``j`` of the output only reads nodes
    ``<= j``.  First order for general inputs.
    """
    _check_unit_order("alpha", alpha)
    w = rl_integral_weights(alpha, u.grid.n_steps, u.grid.dt)
    return Signal(u.grid, _accel.causal_convolve(w, u.values))


def _cutoff(u: Signal, a: float) -> np.ndarray:
    mask = u.grid.times >= a - 1e-9 * u.grid.dt
    return np.where(mask[:, None], u.values, 0.0)


def _time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    return np.gradient(values, dt, axis=0)


def riemann_liouville_derivative_oracle(gamma: float, a: float, u: Signal) -> Signal:
    """``d/dt`` of the order ``1-gamma`` integral of ``u`` cut off below ``a``."""
    _check_unit_order("gamma", gamma)
    cut = Signal(u.grid, _cutoff(u, a))
    integral = rl_integral_oracle(1.0 - gamma, cut)
    return Signal(u.grid, _time_derivative(integral.values, u.grid.dt))


def caputo_derivative_oracle(gamma: float, a: float, u: Signal) -> Signal:
    """Order ``1-gamma`` integral of ``du/dt`` cut off below ``a``."""
    _check_unit_order("gamma", gamma)
    du = Signal(u.grid, _time_derivative(u.values, u.grid.dt))
    cut = Signal(u.grid, _cutoff(du, a))
    return rl_integral_oracle(1.0 - gamma, cut)


# ---------------------------------------------------------------------------
# scalar quantities used by the positivity analysis
# ---------------------------------------------------------------------------

def phi_alpha(alpha: float, rho, t):
    """``Re((i t + rho)**(1 - alpha))``."""
    return np.real(symbol_power(1.0 - alpha, t, rho))


def rho0_for(interval_max: float) -> float:
    """Weight above which ``Re((it+rho)**a)`` is nondecreasing in ``a <= interval_max``."""
    if not 0.0 < interval_max < 1.0:
        raise ValueError(f"interval_max must lie in (0, 1), got {interval_max}")
    return math.exp(0.5 * math.pi * math.tan(0.5 * math.pi * interval_max))


def monotonicity_violations(rho: float, lam, exponents, rtol: float = 0.0) -> int:
    """Count ``(t, a < b)`` with ``Re((it+rho)**a) > Re((it+rho)**b)`` beyond ``rtol``.

    Every ordered pair of ``exponents`` is checked at every ``t`` in ``lam``.
    """
    lam = np.asarray(lam, dtype=float)
    exps = sorted(exponents)
    vals = np.stack([np.real(symbol_power(a, lam, rho)) for a in exps])
    count = 0
    for i in range(len(exps)):
        for j in range(i + 1, len(exps)):
            if exps[i] == exps[j]:
                continue
            scale = np.maximum(np.abs(vals[i]), np.abs(vals[j]))
            count += int(np.count_nonzero(vals[i] > vals[j] + rtol * scale))
    return count
