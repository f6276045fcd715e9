import numpy as np
import pytest

from indefbvp import certify
from indefbvp.model import Nonlinearity, ProblemSpec, Weight, sign_structure
from indefbvp.ode import integrate, make_field
from indefbvp.shoot import (NO_SOLUTION, SOLUTIONS, ConsistencyError, SolutionProfile, displacement_map,
                            find_neumann_solutions, find_periodic_solutions, homotopy_sweep_alpha,
                            homotopy_sweep_theta, make_profile, neumann_shoot, nu_sweep, periodic_displacement,
                            scan_neumann, validate_solution)
from oracles import grid_cell_windings, rk4

NEUMANN_U0 = "pi^2*cos(pi*x)/(2 + cos(pi*x))^2"  # a := -u0''/u0^2 for u0 = 2 + cos(pi x)
PERIODIC_U0 = "4*pi^2*cos(2*pi*x)/(2 + cos(2*pi*x))^2"  # same with u0 = 2 + cos(2 pi x)


def mk(w, bc="periodic", g="s^2", nu=1.0, T=1.0):
    weight = w if isinstance(w, Weight) else Weight.from_expr(w, T)
    return ProblemSpec(bc, weight, Nonlinearity.from_text(g), nu)


def sup_error(sol, exact):
    x, u, _ = sol.sample(2001)
    return float(np.max(np.abs(u - exact(x))))


def test_convex_case_has_increasing_slope():
    p = mk("-1", "neumann")
    slope, tr = neumann_shoot(p, 1.0)
    assert slope > 0 and tr.completed


def test_zero_weight_keeps_constants():
    p = mk("0", "neumann")
    for c in (0.5, 2.0, 7.0):
        _, tr = neumann_shoot(p, c)
        assert tr.end == pytest.approx((c, 0.0), abs=1e-12)
    assert scan_neumann(p, (0.1, 10.0), 20).degenerate
    assert not scan_neumann(mk("-1", "neumann"), (0.1, 10.0), 20).degenerate


def test_convex_case_has_no_solutions():
    assert find_neumann_solutions(mk("-1", "neumann")) == []
    assert find_periodic_solutions(mk("-1")).solutions == []


def test_neumann_manufactured_recovery():
    sols = find_neumann_solutions(mk(NEUMANN_U0, "neumann"))
    best = min(sols, key=lambda s: abs(s.initial[0] - 3.0))
    assert sup_error(best, lambda x: 2 + np.cos(np.pi * x)) <= 1e-6
    assert best.validation.passed


def test_neumann_cosine_weight_against_slope_scan():
    p = mk("cos(2*pi*x) - 0.3", "neumann")
    sols = find_neumann_solutions(p)
    assert sols
    # brute force: fixed-step RK4 on a dense c grid; every found c sits at a sign change of u'(T)
    cs = np.linspace(0.5, 40.0, 4000)
    accel = lambda x, u, v: np.where(u > 0, -(np.cos(2 * np.pi * x) - 0.3) * u * u, u)
    _, vT, gone, _ = rk4(accel, 0.0, (cs, np.zeros_like(cs)), 1.0, 4000, escape=1e8)
    flips = cs[:-1][(np.sign(vT[:-1]) != np.sign(vT[1:])) & ~gone[:-1] & ~gone[1:]]
    for s in sols:
        if s.initial[0] <= 40.0:
            assert np.min(np.abs(flips - s.initial[0])) < 0.02
        assert s.min_u > 0 and s.bc_residual <= 1e-7


def test_periodic_fixed_point_of_manufactured_problem():
    vec, escaped = periodic_displacement(mk(PERIODIC_U0), (3.0, 0.0))
    assert not escaped
    assert np.max(np.abs(vec)) <= 1e-6


def test_origin_is_a_fixed_point():
    vec, _ = periodic_displacement(mk("sin(2*pi*x) - 0.3"), (0.0, 0.0))
    assert vec.tolist() == [0.0, 0.0]


def test_zero_weight_displacement_is_the_drift():
    vec, _ = periodic_displacement(mk("0", T=2.0), (1.0, 0.3))
    assert vec == pytest.approx([0.6, 0.0], abs=1e-12)


def test_periodic_manufactured_recovery():
    res = find_periodic_solutions(mk(PERIODIC_U0))
    best = min(res.solutions, key=lambda s: abs(s.initial[0] - 3.0))
    assert sup_error(best, lambda x: 2 + np.cos(2 * np.pi * x)) <= 1e-6
    assert best.winding != 0


def test_large_nu_sine_weight_has_a_solution():
    p = mk("sin(2*pi*x) - 0.3", nu=30.0)
    res = find_periodic_solutions(p)
    assert res.solutions
    s = res.solutions[0]
    assert s.min_u > 0 and s.winding != 0
    # brute force: 400 x 400 displacement grid by fixed-step RK4, look for a nonzero cell near the zero
    c = np.linspace(0.02, 2.0, 400)
    d = np.linspace(-2.0, 2.0, 400)
    C, D = np.meshgrid(c, d, indexing="ij")
    accel = lambda x, u, v: np.where(u > 0, -30.0 * (np.sin(2 * np.pi * x) - 0.3) * u * u, u)
    uT, vT, gone, _ = rk4(accel, 0.0, (C, D), 1.0, 2000, escape=1e6)
    cells = grid_cell_windings(uT - C, vT - D)
    cells[gone[:-1, :-1] | gone[1:, 1:] | gone[1:, :-1] | gone[:-1, 1:]] = 0
    hits = np.argwhere(cells != 0)
    assert len(hits)
    near = [abs(c[i] - s.initial[0]) < 0.02 and abs(d[j] - s.initial[1]) < 0.02 for i, j in hits]
    assert any(near)


def test_every_periodic_solution_has_nonzero_winding():
    res = find_periodic_solutions(mk("sin(2*pi*x) - 0.1"))
    assert res.solutions
    F = displacement_map(mk("sin(2*pi*x) - 0.1"))
    from indefbvp.degree import Loop, winding_number
    for s in res.solutions:
        assert s.winding != 0
        rep = winding_number(F, Loop.rectangle(s.located_box))
        assert rep.certified and rep.winding != 0
        assert validate_solution(mk("sin(2*pi*x) - 0.1"), s).passed


def _fake_profile(p_traj, c, d, T=1.0):
    tr = integrate(make_field(p_traj), 0.0, (c, d), T, profile=True)
    lo, hi = tr.extrema()
    return SolutionProfile(tr, "periodic", (c, d), 0.0, lo, hi, tr.residual())


def test_constant_profile_fails_balance():
    p = mk("sin(2*pi*x) - 0.3")
    const = _fake_profile(mk("0"), 2.0, 0.0)
    rep = validate_solution(p, const)
    assert not rep["balance"]["passed"]
    assert not rep.passed


def test_profile_touching_zero_fails_positivity():
    p = mk("0", T=2.0)
    touching = _fake_profile(p, 0.5, -1.0, T=2.0)
    rep = validate_solution(p, touching)
    assert not rep.passed
    assert not rep["positive"]["passed"]


def test_reflected_neumann_solution_is_periodic():
    # weight symmetric about x = 1/2, so reflection at x = 1 is a smooth periodic extension
    w = "cos(2*pi*x) - 0.3"
    s = find_neumann_solutions(mk(w, "neumann"))[0]
    doubled = Weight.piecewise([(0.0, 1.0, w), (1.0, 2.0, "cos(2*pi*(2 - x)) - 0.3")], 2.0)
    prof = make_profile(mk(doubled), s.initial[0], 0.0)
    assert prof.bc_residual <= 1e-6 and prof.residual <= 1e-6
    assert prof.min_u > 0


def test_labels_are_deterministic():
    p = mk("cos(2*pi*x) - 0.3", "neumann")
    a = [round(s.initial[0], 6) for s in find_neumann_solutions(p)]
    b = [round(s.initial[0], 6) for s in find_neumann_solutions(p)]
    assert a == b


# -- sweeps --------------------------------------------------------------------

def test_theta_sweep_small_amplitude_has_nothing():
    rep = homotopy_sweep_theta(mk("sin(2*pi*x) - 0.3"), [1e-3], np.linspace(0.1, 1.0, 10))
    assert set(rep.outcomes()) == {NO_SOLUTION}


def test_theta_sweep_at_the_solution_amplitude():
    p = mk("sin(2*pi*x) - 0.1")
    s = find_periodic_solutions(p).solutions[0]
    rep = homotopy_sweep_theta(p, [s.max_u], [1.0])
    assert rep.outcomes() == [SOLUTIONS]
    assert rep.points[0].amplitude == pytest.approx(s.max_u, rel=1e-6)


def test_theta_to_zero_admits_no_constant():
    rep = homotopy_sweep_theta(mk("sin(2*pi*x) - 0.3"), [0.5, 2.0], [1e-3])
    assert set(rep.outcomes()) == {NO_SOLUTION}


def test_alpha_sweep_endpoints():
    p = mk("sin(2*pi*x) - 0.3")
    v = certify.default_forcing(sign_structure(p.weight))
    R = 30.0
    a0 = certify.alpha0_bound(p, R, v)
    above = 1.001 * p.weight.l1_norm * 900.0 / v.l1_norm  # just past the integral bound
    rep = homotopy_sweep_alpha(p, R, v, [0.0, a0, above])
    assert rep.outcomes() == [SOLUTIONS, NO_SOLUTION, NO_SOLUTION]
    base = find_periodic_solutions(p).solutions
    assert rep.points[0].solutions[0].initial == pytest.approx(base[0].initial, rel=1e-6)


@pytest.mark.slow
def test_nu_sweep_below_threshold():
    p = mk("sin(2*pi*x) - 0.3", g="2*s*arctan(s^2)")
    star = certify.nonexistence_threshold(p).nu_star
    rep = nu_sweep(p, (0.1 * star, 0.9 * star), 5, nu_star=star)
    assert rep.outcomes() == [NO_SOLUTION] * 5


def test_nu_sweep_flags_inconsistent_threshold():
    p = mk(NEUMANN_U0, "neumann")
    with pytest.raises(ConsistencyError):
        nu_sweep(p, (1.0, 1.0), 1, nu_star=2.0)


@pytest.mark.slow
def test_nu_sweep_refinement_keeps_outcomes():
    p = mk("cos(2*pi*x) - 0.3", "neumann")
    coarse = nu_sweep(p, (0.05, 2.0), 2)
    fine = nu_sweep(p, (0.05, 2.0), 3)
    assert coarse.outcomes() == [fine.outcomes()[0], fine.outcomes()[2]]
