"""Acceptance criteria, one test each, at the stated tolerances.

Each test prints ``criterion N: PASS|FAIL  <measurement>`` so a plain
``pytest`` run shows the whole scorecard.
"""

import math
import time

import numpy as np
import pytest

from conftest import bandlimited_signal, smooth_bump
from oracles import crank_nicolson_heat, dirichlet_laplacian, relaxation_step_response
from evofrac.fraccalc import apply_frac_power, monotonicity_violations, rho0_for, rl_integral_oracle
from evofrac.material import MaterialLaw, fokker_planck_material, kelvin_voigt_material, three_block_example
from evofrac.solver import (
    DeltaSource,
    EvolutionaryProblem,
    causality_check,
    ivp_solve_delta,
    ivp_solve_history,
    solve,
    time_stepping_oracle,
)
from evofrac.spatial import build_grad_div_1d, zero_operator
from evofrac.timegrid import Signal, TimeGrid, forward_transform, weighted_inner, weighted_norm
from evofrac.wellposed import (
    ProjectorTriple,
    m2_tail_norms,
    positivity_lower_bound,
    positivity_threshold,
    sampled_symbol_positivity,
    verify_condition,
)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"

    return emit


def canonical():
    return ProjectorTriple(np.diag([1.0, 0, 0]), np.diag([0, 1.0, 0]), np.diag([0, 0, 1.0]))


def forbidden():
    return ProjectorTriple(np.diag([1.0, 1, 0]), np.zeros((3, 3)), np.diag([0, 0, 1.0]))


def fp_setup(n_cells, grid, alpha):
    a = build_grad_div_1d(n_cells, 1.0 / n_cells)
    d0, d1 = a.block_dims
    mu = [[np.zeros((d0, d0)), np.zeros((d0, d1))], [np.zeros((d1, d0)), np.eye(d1)]]
    p = EvolutionaryProblem(fokker_planck_material(np.eye(d0), mu, alpha), a, grid)
    shape = np.zeros(p.dim)
    shape[:d0] = np.sin(np.pi * np.arange(1, d0 + 1) / n_cells)
    return p, shape


def test_criterion_01_parseval(report):
    rng = np.random.default_rng(1)
    g = TimeGrid.spanning(-1.0, 7.0, 4096, 3.0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        u = Signal(g, rng.standard_normal((4096, 4)) + 1j * rng.standard_normal((4096, 4)))
        lhs = weighted_inner(u, u).real
        rhs = np.vdot(forward_transform(u).coefficients, forward_transform(u).coefficients).real
        worst = max(worst, abs(lhs - rhs) / lhs)
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-10 and elapsed < 2.0, f"max relative defect {worst:.2e}, {elapsed:.2f} s")


def test_criterion_02_fractional_bounds(report):
    rng = np.random.default_rng(2)
    g = TimeGrid.spanning(-1.0, 7.0, 1024, 4.0)
    rho = g.rho
    worst_norm, worst_acc = -math.inf, -math.inf
    for _ in range(100):
        u = bandlimited_signal(g, 2, rng, keep=64)
        nu = weighted_norm(u)
        for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
            # both margins must be <= 0
            worst_norm = max(worst_norm, weighted_norm(apply_frac_power(-alpha, u)) - rho**-alpha * nu * (1 + 1e-8))
            re = weighted_inner(u, apply_frac_power(alpha, u)).real
            worst_acc = max(worst_acc, (rho**alpha - 1e-8) * nu**2 - re)
    ok = worst_norm <= 0 and worst_acc <= 0
    report(2, ok, f"norm margin {worst_norm:.2e}, accretivity margin {worst_acc:.2e} (both must be <= 0)")


def test_criterion_03_monotonicity(report):
    rho0 = rho0_for(0.9)
    closed = math.exp(0.5 * math.pi * math.tan(0.45 * math.pi))
    alphas = np.linspace(0.1, 0.9, 9)
    total = 0
    for rho in np.geomspace(rho0 * 1.001, 10 * rho0, 5):
        lam = TimeGrid.spanning(0.0, 30.0 / rho, 4096, rho).frequencies
        total += monotonicity_violations(rho, lam, alphas)
    witness = monotonicity_violations(0.5, np.linspace(-10, 10, 201), alphas)
    ok = abs(rho0 - closed) <= 1e-12 * closed and total == 0 and witness > 0
    report(3, ok, f"rho0 {rho0:.6g}, violations above rho0 {total}, violations at rho=0.5 {witness}")


def test_criterion_04_kernel_equivalence(report):
    g = TimeGrid.spanning(-2.0, 10.0, 8192, 3.0)
    diffs = {}
    for alpha in (0.25, 0.5, 0.75):
        for a, b in ((0.0, 1.0), (0.5, 3.0)):
            u = Signal(g, smooth_bump(g.times, a, b))
            spec = apply_frac_power(-alpha, u)
            rl = rl_integral_oracle(alpha, u)
            diffs[alpha, a, b] = weighted_norm(spec - rl) / weighted_norm(rl)
    worst = max(diffs.values())
    report(4, worst <= 1e-3 and g.rho * g.span >= 30, f"max relative difference {worst:.2e} (rho*T = {g.rho * g.span:g})")


def test_criterion_05_semigroup(report):
    rng = np.random.default_rng(5)
    g = TimeGrid.spanning(-1.0, 7.0, 1024, 4.0)
    worst = 0.0
    pairs = 0
    while pairs < 40:
        alpha, beta = rng.uniform(0.0, 2.0, 2)
        if alpha + beta >= 2.0:
            continue
        pairs += 1
        u = Signal(g, rng.standard_normal((1024, 2)))
        lhs = apply_frac_power(-alpha, apply_frac_power(-beta, u))
        rhs = apply_frac_power(-(alpha + beta), u)
        worst = max(worst, weighted_norm(lhs - rhs) / weighted_norm(rhs))
    report(5, worst <= 1e-10, f"max relative defect {worst:.2e} over {pairs} pairs")


def test_criterion_06_condition_on_example(report):
    start = time.perf_counter()
    good = [verify_condition(three_block_example(0.3, 0.6, b), canonical()) for b in (1.0, -0.5)]
    bad = verify_condition(three_block_example(0.3, 0.6, -0.5), forbidden())
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in good) and not bad.passed and elapsed < 1.0
    report(6, ok, f"canonical {[r.passed for r in good]}, forbidden passed={bad.passed} "
                  f"failing {bad.failed_clauses()}, {elapsed * 1e3:.1f} ms")


def test_criterion_07_bound_below_sampled(report):
    mu = [[np.array([[0.5]]), np.array([[0.3]])], [np.array([[-0.3]]), np.array([[1.0]])]]
    fp_proj = ProjectorTriple(np.zeros((2, 2)), np.diag([1.0, 0]), np.diag([0, 1.0]))
    cases = [
        ("example b=1", three_block_example(0.3, 0.6, 1.0), canonical()),
        ("example b=-0.5", three_block_example(0.3, 0.6, -0.5), canonical()),
        ("fokker-planck", fokker_planck_material(1.0, mu, 0.5), fp_proj),
    ]
    worst = -math.inf
    for _, law, proj in cases:
        base = max(positivity_threshold(law, proj), 1e-2)
        for rho in np.geomspace(base * 1.01, base * 1e3, 20):
            gap = positivity_lower_bound(law, proj, rho) - sampled_symbol_positivity(law, rho)
            worst = max(worst, gap)
    report(7, worst <= 1e-8, f"max(bound - sampled) {worst:.3e} over 3 laws x 20 rho")


def test_criterion_08_kelvin_voigt_remainder(report):
    law = kelvin_voigt_material(1.0, 1.0, 1.0, 0.5)
    rhos = [4.0, 16.0, 64.0]
    norms = m2_tail_norms(law, rhos)
    # scalar C = D = 1: K0 = K1 = 1 and ceil(1/alpha) = 2
    bounds = [r**-0.5 * 1.0**2 / (1.0 - r**-0.5) for r in rhos]
    further = m2_tail_norms(law, [256.0, 1024.0])
    ok = all(n <= b for n, b in zip(norms, bounds)) and np.all(np.diff(np.r_[norms, further]) < 0)
    report(8, ok, f"norms {np.round(norms, 4).tolist()} <= bounds {np.round(bounds, 4).tolist()}; "
                  f"at 256, 1024: {np.round(further, 4).tolist()}")


def test_criterion_09_causality(report):
    T = 8.0
    g = TimeGrid.spanning(-T / 4, T, 4096, 40.0 / T)
    p, shape = fp_setup(32, g, 0.5)
    f = Signal(g, smooth_bump(g.times, 0.0, T / 4)[:, None] * shape[None, :])
    start = time.perf_counter()
    ratio = causality_check(p, f, 0.0)
    elapsed = time.perf_counter() - start
    report(9, ratio <= 1e-6 and elapsed < 10.0, f"causality ratio {ratio:.2e}, {elapsed:.2f} s")


def test_criterion_10_oracle_cross_validation(report):
    law = MaterialLaw.build(1, frac={0.5: 1.0}, m1=1.0)
    T = 12.0
    g = TimeGrid.spanning(-T / 8, T, 16384, 3.0)
    p = EvolutionaryProblem(law, zero_operator(1), g)
    f = Signal(g, smooth_bump(g.times, 0.0, 3.0))
    u = solve(p, f)
    diff = weighted_norm(u - time_stepping_oracle(p, f, 0.0)) / weighted_norm(u)
    errs = []
    for n in (1024, 2048, 4096, 8192, 16384):
        h = TimeGrid(0.0, 4.0 / n, n, 3.0)
        q = EvolutionaryProblem(law, zero_operator(1), h)
        exact = Signal(h, relaxation_step_response(h.times))
        errs.append(weighted_norm(time_stepping_oracle(q, Signal(h, np.ones(n)), 0.0) - exact) / weighted_norm(exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = diff <= 1e-3 and np.all((rates >= 0.8) & (rates <= 1.2))
    report(10, ok, f"spectral vs oracle {diff:.2e}; oracle rates {np.round(rates, 3).tolist()}")


def test_criterion_11_classical_limit(report):
    nc = 64
    h = 1.0 / nc
    g = TimeGrid.spanning(-0.25, 1.0, 4096, 24.0)
    p, shape = fp_setup(nc, g, 0.0)
    d0 = p.a.block_dims[0]
    f = Signal(g, smooth_bump(g.times, 0.0, 0.25)[:, None] * shape[None, :])
    theta = solve(p, f).values[:, :d0].real
    k0 = int(np.searchsorted(g.times, 0.0))
    ref = np.zeros_like(theta)
    ref[k0:] = crank_nicolson_heat(dirichlet_laplacian(nc, h), 1.0, 1.0, f.values[k0:, :d0].real, g.dt)
    err = np.abs(theta - ref).max()
    report(11, err <= 1e-3, f"L-inf difference {err:.2e} (solution max {np.abs(ref).max():.3g})")


def test_criterion_12_ivp(report):
    alpha = 0.1
    eqs, defects = [], []
    for n in (1024, 2048, 4096, 8192):
        g = TimeGrid.spanning(-1.0, 4.0, n, 10.0)
        p, w = fp_setup(16, g, alpha)
        node = g.node_index(0.0)
        f = Signal(g, smooth_bump(g.times, 0.0, 1.0)[:, None] * w[None, :])
        res = ivp_solve_delta(p, f, DeltaSource(node, w))
        v = ivp_solve_history(p, apply_frac_power(-alpha, f), w, node)
        u = res.solution
        eqs.append(weighted_norm(v - apply_frac_power(-alpha, u)) / weighted_norm(u))
        defects.append(res.jump_defect)
    orders = np.log2(np.array(defects[:-1]) / np.array(defects[1:]))
    ok = max(eqs) <= 1e-6 and np.all(orders >= 0.8)
    report(12, ok, f"equivalence {max(eqs):.2e}; jump defects {np.round(defects, 4).tolist()}, "
                   f"orders {np.round(orders, 3).tolist()}")
