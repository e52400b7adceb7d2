import numpy as np
import pytest

from conftest import bandlimited_signal, random_signal, smooth_bump
from oracles import dirichlet_laplacian, relaxation_step_response
from evofrac.errors import DimensionError, GridError, LawError, SingularSystemError
from evofrac.fraccalc import apply_frac_power
from evofrac.material import MaterialLaw, fokker_planck_material, three_block_example
from evofrac.solver import (
    DeltaSource,
    EvolutionaryProblem,
    causality_check,
    cq_weights,
    discrete_delta,
    fokker_planck_reduce,
    ivp_solve_delta,
    ivp_solve_history,
    residual_norms,
    solve,
    time_stepping_oracle,
    worker_count,
)
from evofrac.spatial import SkewOperator, build_grad_div_1d, parse_spatial, zero_operator
from evofrac.timegrid import Signal, TimeGrid, weighted_norm
from evofrac.wellposed import ProjectorTriple, verify_condition


def relaxation_law():
    return MaterialLaw.build(1, frac={0.5: 1.0}, m1=1.0)


def fp_problem(n_cells, grid, alpha, mu10=0.0):
    a = build_grad_div_1d(n_cells, 1.0 / n_cells)
    d0, d1 = a.block_dims
    mu = [[np.zeros((d0, d0)), np.zeros((d0, d1))], [mu10 * np.eye(d1, d0), np.eye(d1)]]
    return EvolutionaryProblem(fokker_planck_material(np.eye(d0), mu, alpha), a, grid)


def fp_forcing(p, profile):
    d0 = p.a.block_dims[0]
    x = np.arange(1, d0 + 1) / (d0 + 1)
    vals = np.zeros((p.grid.n_steps, p.dim))
    vals[:, :d0] = profile[:, None] * np.sin(np.pi * x)[None, :]
    return Signal(p.grid, vals)


def test_zero_rhs_gives_zero():
    g = TimeGrid.spanning(-1.0, 5.0, 256, 6.0)
    p = EvolutionaryProblem(three_block_example(0.3, 0.6, 1.0), zero_operator(3), g)
    assert not np.any(solve(p, Signal.zeros(g, 3)).values)


def test_identity_law_integrates():
    # d0 U = f with a step f gives the ramp
    g = TimeGrid.spanning(-3.0, 9.0, 16384, 3.0)
    p = EvolutionaryProblem(MaterialLaw.build(1, m0=1.0), zero_operator(1), g)
    u = solve(p, Signal(g, (g.times >= 0).astype(float))).values[:, 0].real
    t = g.times
    inside = (t > 0.2) & (t < 3.0)
    assert np.abs(u[inside] - t[inside]).max() <= g.dt


def test_relaxation_step_response():
    g = TimeGrid.spanning(-1.0, 5.0, 16384, 6.0)
    p = EvolutionaryProblem(relaxation_law(), zero_operator(1), g)
    u = solve(p, Signal(g, (g.times >= -1e-12).astype(float)))
    exact = Signal(g, relaxation_step_response(g.times + 0.5 * g.dt))
    assert weighted_norm(u - exact) <= 5e-3 * weighted_norm(exact)


def test_residuals_are_small(rng):
    # full-spectrum data: an empty band would turn round-off into huge relative residuals
    g = TimeGrid.spanning(-1.0, 5.0, 512, 6.0)
    p = EvolutionaryProblem(three_block_example(0.3, 0.6, 1.0), parse_spatial("grad1d:2:0.5"), g)
    f = random_signal(g, 3, rng)
    u = solve(p, f)
    assert residual_norms(p, u, f).max() <= 1e-10


def test_a_priori_bound(rng):
    law = three_block_example(0.3, 0.6, 1.0)
    proj = ProjectorTriple(np.diag([1.0, 0, 0]), np.diag([0, 1.0, 0]), np.diag([0, 0, 1.0]))
    g = TimeGrid.spanning(-1.0, 5.0, 1024, 6.0)
    rep = verify_condition(law, proj, rho=g.rho)
    a = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 2.0], [0.0, -2.0, 0.0]])
    p = EvolutionaryProblem(law, SkewOperator(a, (3, 0)), g, certificate=rep)
    f = bandlimited_signal(g, 3, rng, keep=200)
    assert weighted_norm(solve(p, f)) <= weighted_norm(f) / rep.c0_estimate * (1 + 1e-9)


def test_certificate_threshold_is_enforced():
    law = three_block_example(0.3, 0.6, -0.5)
    proj = ProjectorTriple(np.diag([1.0, 0, 0]), np.diag([0, 1.0, 0]), np.diag([0, 0, 1.0]))
    rep = verify_condition(law, proj)
    g = TimeGrid.spanning(0.0, 1.0, 64, 0.5 * rep.rho_threshold)
    with pytest.raises(GridError, match="threshold"):
        EvolutionaryProblem(law, zero_operator(3), g, certificate=rep)


def test_time_shift_equivariance():
    g = TimeGrid.spanning(-2.0, 10.0, 4096, 3.0)
    p = fp_problem(8, g, 0.5)
    f = fp_forcing(p, smooth_bump(g.times, 0.0, 2.0))
    shift = 256
    u = solve(p, f)
    us = solve(p, f.shifted(shift))
    keep = g.times < 5.0
    a = us.values[shift:][keep[:-shift]]
    b = u.values[:-shift][keep[:-shift]]
    assert np.linalg.norm(a - b) <= 1e-6 * np.linalg.norm(b)


def test_causality_ratio_and_guards():
    g = TimeGrid.spanning(-2.0, 6.0, 2048, 5.0)
    p = fp_problem(8, g, 0.5)
    f = fp_forcing(p, smooth_bump(g.times, 1.0, 2.0))
    assert causality_check(p, f, 1.0) <= 1e-6
    assert causality_check(p, Signal.zeros(g, p.dim), 0.0) == 0.0
    with pytest.raises(ValueError, match="before"):
        causality_check(p, f, 1.5)


def test_rhs_must_match_problem():
    g = TimeGrid.spanning(0.0, 1.0, 64, 40.0)
    p = EvolutionaryProblem(relaxation_law(), zero_operator(1), g)
    with pytest.raises(DimensionError):
        solve(p, Signal.zeros(g, 2))
    with pytest.raises(GridError):
        solve(p, Signal.zeros(g.with_rho(50.0), 1))
    with pytest.raises(DimensionError):
        EvolutionaryProblem(relaxation_law(), zero_operator(2), g)


def test_singular_system_reports_frequency():
    g = TimeGrid.spanning(0.0, 1.0, 64, 40.0)
    law = MaterialLaw.build(2, m0=np.diag([1.0, 0.0]))
    p = EvolutionaryProblem(law, zero_operator(2), g)
    with pytest.raises(SingularSystemError) as info:
        solve(p, Signal(g, np.ones((64, 2))))
    assert info.value.frequency is not None


def test_worker_count(monkeypatch):
    monkeypatch.setenv("EVOFRAC_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("EVOFRAC_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()


def test_result_independent_of_thread_count(monkeypatch, rng):
    g = TimeGrid.spanning(-1.0, 5.0, 2048, 6.0)
    p = fp_problem(6, g, 0.3)
    f = bandlimited_signal(g, p.dim, rng, keep=100)
    monkeypatch.setenv("EVOFRAC_THREADS", "1")
    one = solve(p, f).values
    monkeypatch.setenv("EVOFRAC_THREADS", "4")
    assert np.array_equal(solve(p, f).values, one)


def test_cq_weights():
    assert np.allclose(cq_weights(1.0, 4), [1, -1, 0, 0])
    assert np.allclose(cq_weights(0.5, 3), [1, -0.5, -0.125])
    assert np.allclose(cq_weights(0.0, 5), [1, 0, 0, 0, 0])


def test_oracle_matches_backward_euler_heat():
    g = TimeGrid(0.0, 1e-3, 512, 1.0)
    p = fp_problem(10, g, 0.0)
    f = fp_forcing(p, np.where(g.times > 0, 1.0, 0.0))
    u = time_stepping_oracle(p, f, 0.0).values[:, :9].real
    lap = dirichlet_laplacian(10, 0.1)
    theta = np.zeros(9)
    for k in range(1, 512):
        theta = np.linalg.solve(np.eye(9) / g.dt + lap, theta / g.dt + f.values[k, :9].real)
        assert np.allclose(u[k], theta, rtol=1e-10, atol=1e-13)


def test_oracle_converges_to_spectral_heat():
    errs = []
    for n in (2048, 4096):
        g = TimeGrid.spanning(-0.25, 1.0, n, 24.0)
        p = fp_problem(16, g, 0.0)
        f = fp_forcing(p, smooth_bump(g.times, 0.0, 0.25))
        spec = solve(p, f)
        errs.append(weighted_norm(spec - time_stepping_oracle(p, f, 0.0)) / weighted_norm(spec))
    assert errs[1] < 1e-2
    # first order in dt
    assert 1.7 < errs[0] / errs[1] < 2.3


def test_oracle_guards():
    g = TimeGrid.spanning(0.0, 1.0, 64, 40.0)
    p = EvolutionaryProblem(relaxation_law(), zero_operator(1), g)
    with pytest.raises(GridError):
        time_stepping_oracle(p, Signal.zeros(g, 1), 2.0)
    with pytest.raises(ValueError):
        time_stepping_oracle(p, Signal(g, np.ones(64)), 0.5)
    tailed = MaterialLaw.build(1, m0=1.0, tail={0.5: 1.0}, radius=0.5)
    with pytest.raises(LawError):
        time_stepping_oracle(EvolutionaryProblem(tailed, zero_operator(1), g), Signal.zeros(g, 1), 0.0)


def test_oracle_backends_agree(backend):
    g = TimeGrid.spanning(-0.5, 4.0, 1024, 8.0)
    p = EvolutionaryProblem(three_block_example(0.3, 0.6, 1.0), zero_operator(3), g)
    vals = np.zeros((1024, 3))
    vals[:, 1] = smooth_bump(g.times, 0.0, 1.0)
    vals[:, 0] = smooth_bump(g.times, 0.5, 2.0)
    out = time_stepping_oracle(p, Signal(g, vals), 0.0).values
    import os

    os.environ["EVOFRAC_NUMBA"] = "0"
    try:
        ref = time_stepping_oracle(p, Signal(g, vals), 0.0).values
    finally:
        os.environ["EVOFRAC_NUMBA"] = "1" if backend == "numba" else "0"
    assert np.allclose(out, ref, rtol=1e-12, atol=1e-14)


def test_fokker_planck_flux_identity():
    g = TimeGrid.spanning(-1.0, 3.0, 1024, 10.0)
    p = fp_problem(12, g, 0.4, mu10=0.3)
    f = fp_forcing(p, smooth_bump(g.times, 0.0, 1.0))
    u = solve(p, f)
    res = fokker_planck_reduce(p, u)
    assert weighted_norm(res) <= 1e-12 * weighted_norm(u)
    # a perturbed flux shows up in the residual at its own size
    d0 = p.a.block_dims[0]
    bump = np.zeros((g.n_steps, p.dim))
    bump[:, d0:] = 1e-3 * smooth_bump(g.times, 0.0, 1.0)[:, None]
    delta = Signal(g, bump)
    got = weighted_norm(fokker_planck_reduce(p, u + delta))
    assert got == pytest.approx(weighted_norm(delta), rel=1e-6)


def test_fokker_planck_reduce_checks_structure():
    g = TimeGrid.spanning(0.0, 1.0, 64, 40.0)
    p = EvolutionaryProblem(three_block_example(0.3, 0.6, 1.0), zero_operator(3), g)
    with pytest.raises(DimensionError):
        fokker_planck_reduce(p, Signal.zeros(g, 3))


def test_delta_source_and_discrete_delta():
    g = TimeGrid(0.0, 0.5, 8, 1.0)
    d = discrete_delta(g, 3, [1.0, 2.0])
    assert np.array_equal(d.values[3], [2.0, 4.0])
    assert np.count_nonzero(d.values) == 2
    with pytest.raises(GridError):
        discrete_delta(g, 8, [1.0])
    with pytest.raises(DimensionError):
        DeltaSource(0, np.eye(2))


def test_ivp_with_zero_weight_is_plain_solve():
    g = TimeGrid.spanning(-1.0, 3.0, 1024, 10.0)
    p = fp_problem(8, g, 0.3)
    f = fp_forcing(p, smooth_bump(g.times, 0.0, 1.0))
    res = ivp_solve_delta(p, f, DeltaSource(g.node_index(0.0), np.zeros(p.dim)))
    assert np.array_equal(res.solution.values, solve(p, f).values)


def test_ivp_requires_range_and_single_block():
    g = TimeGrid.spanning(-1.0, 3.0, 256, 10.0)
    p = fp_problem(4, g, 0.3)
    w = np.ones(p.dim)  # has a flux component, outside ran M_alpha
    with pytest.raises(LawError, match="range"):
        ivp_solve_delta(p, Signal.zeros(g, p.dim), DeltaSource(10, w))
    q = EvolutionaryProblem(three_block_example(0.3, 0.6, 1.0), zero_operator(3), g)
    with pytest.raises(LawError):
        ivp_solve_history(q, Signal.zeros(g, 3), np.zeros(3))


def _ivp_pair(n_cells, grid, alpha):
    p = fp_problem(n_cells, grid, alpha)
    d0 = p.a.block_dims[0]
    w = np.zeros(p.dim)
    w[:d0] = np.sin(np.pi * np.arange(1, d0 + 1) / (d0 + 1))
    return p, w


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.0])
def test_history_form_matches_delta_form(alpha):
    g = TimeGrid.spanning(-1.0, 3.0, 2048, 10.0)
    p, w = _ivp_pair(8, g, alpha)
    node = g.node_index(0.0)
    f = fp_forcing(p, smooth_bump(g.times, 0.0, 1.0))
    u = ivp_solve_delta(p, f, DeltaSource(node, w)).solution
    v = ivp_solve_history(p, apply_frac_power(-alpha, f), w, node)
    target = apply_frac_power(-alpha, u)
    assert weighted_norm(v - target) <= 1e-10 * weighted_norm(u)


def test_jump_defect_shrinks_with_resolution():
    defects = []
    for n in (1024, 2048, 4096):
        g = TimeGrid.spanning(-1.0, 3.0, n, 10.0)
        p, w = _ivp_pair(8, g, 0.1)
        res = ivp_solve_delta(p, Signal.zeros(g, p.dim), DeltaSource(g.node_index(0.0), w))
        defects.append(res.jump_defect)
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] < 0.05


def test_relaxation_step_matches_oracle():
    # the step makes the oracle error O(dt) in the weighted norm; 1e-3 needs a fine grid
    g = TimeGrid.spanning(-1.5, 12.0, 65536, 3.0)
    p = EvolutionaryProblem(relaxation_law(), zero_operator(1), g)
    f = Signal(g, (g.times >= -1e-12).astype(float))
    u = solve(p, f)
    assert weighted_norm(u - time_stepping_oracle(p, f, 0.0)) <= 1e-3 * weighted_norm(u)


def test_later_forcing_does_not_raise_causality_ratio():
    g = TimeGrid.spanning(-2.0, 10.0, 4096, 3.0)
    p = fp_problem(8, g, 0.5)
    ratios = [causality_check(p, fp_forcing(p, smooth_bump(g.times, a, a + 2.0)), a) for a in (0.0, 1.0, 2.0)]
    # all ratios sit at round-off, where wrap-around of order exp(-2 rho T) can reorder them
    floor = 1e-20
    assert ratios[1] <= ratios[0] + floor and ratios[2] <= ratios[0] + floor
    assert max(ratios) <= 1e-6


@pytest.mark.parametrize("alpha", [0.2, 0.5])
def test_impulse_problem_matches_oracle(alpha):
    # U ~ t**-alpha is singular at the source, so compare the time integrals
    g = TimeGrid.spanning(-0.5, 4.0, 32768, 8.0)
    p = EvolutionaryProblem(MaterialLaw.build(1, frac={alpha: 1.0}), zero_operator(1), g)
    node = g.node_index(0.0)
    u = ivp_solve_delta(p, Signal.zeros(g, 1), DeltaSource(node, [1.0])).solution
    o = time_stepping_oracle(p, discrete_delta(g, node, [1.0]), g.times[node])
    iu = apply_frac_power(-1.0, u)
    assert weighted_norm(iu - apply_frac_power(-1.0, o)) <= 1e-3 * weighted_norm(iu)


def test_jump_defect_below_tolerance_at_8192():
    g = TimeGrid.spanning(-0.1, 0.4, 8192, 100.0)
    p, w = _ivp_pair(16, g, 0.1)
    res = ivp_solve_delta(p, Signal.zeros(g, p.dim), DeltaSource(g.node_index(0.0), w))
    assert res.jump_defect <= 1e-3


def test_history_with_zero_data_is_zero():
    g = TimeGrid.spanning(-1.0, 3.0, 256, 10.0)
    p, w = _ivp_pair(4, g, 0.3)
    assert not np.any(ivp_solve_history(p, Signal.zeros(g, p.dim), np.zeros(p.dim)).values)


def test_scalar_relaxation_ivp_equivalence():
    g = TimeGrid.spanning(-1.0, 5.0, 4096, 6.0)
    p = EvolutionaryProblem(MaterialLaw.build(1, frac={0.4: 1.0}, m1=1.0), zero_operator(1), g)
    node = g.node_index(0.0)
    f = Signal(g, smooth_bump(g.times, 0.0, 1.0))
    u = ivp_solve_delta(p, f, DeltaSource(node, [2.0])).solution
    v = ivp_solve_history(p, apply_frac_power(-0.4, f), [2.0], node)
    assert weighted_norm(v - apply_frac_power(-0.4, u)) <= 1e-6 * weighted_norm(v)


def test_classical_case_is_the_impulse_problem():
    g = TimeGrid.spanning(-1.0, 3.0, 1024, 10.0)
    p, w = _ivp_pair(8, g, 0.0)
    node = g.node_index(0.0)
    f = fp_forcing(p, smooth_bump(g.times, 0.0, 1.0))
    u = ivp_solve_delta(p, f, DeltaSource(node, w)).solution
    v = ivp_solve_history(p, f, w, node)
    direct = solve(p, f + discrete_delta(g, node, w))
    assert weighted_norm(u - direct) == 0.0
    assert weighted_norm(v - u) <= 1e-12 * weighted_norm(u)


def test_oracle_heat_matches_crank_nicolson():
    from oracles import crank_nicolson_heat

    nc = 64
    g = TimeGrid.spanning(-0.25, 1.0, 4096, 24.0)
    p = fp_problem(nc, g, 0.0)
    d0 = p.a.block_dims[0]
    f = fp_forcing(p, smooth_bump(g.times, 0.0, 0.25))
    k0 = int(np.searchsorted(g.times, 0.0))
    cq = time_stepping_oracle(p, f, g.times[k0]).values[:, :d0].real
    ref = np.zeros_like(cq)
    ref[k0:] = crank_nicolson_heat(dirichlet_laplacian(nc, 1.0 / nc), 1.0, 1.0, f.values[k0:, :d0].real, g.dt)
    assert np.abs(cq - ref).max() <= 1e-3


def test_oracle_of_zero_is_zero():
    g = TimeGrid.spanning(0.0, 1.0, 64, 40.0)
    p = EvolutionaryProblem(relaxation_law(), zero_operator(1), g)
    assert not np.any(time_stepping_oracle(p, Signal.zeros(g, 1), 0.0).values)
