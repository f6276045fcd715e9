import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from indefbvp.config import DEFAULTS, Tolerances
from indefbvp.model import ModelError, Nonlinearity, ProblemSpec, Weight
from indefbvp.ode import escape_bound, integrate, make_field
from oracles import rk4


def spec(weight, g="s^2", T=1.0, bc="neumann"):
    w = weight if isinstance(weight, Weight) else Weight.from_expr(weight, T)
    return ProblemSpec(bc, w, Nonlinearity.from_text(g), 1.0)


def harmonic(T=math.pi):
    # u'' = -(u - 2), so u - 2 is a cosine while u stays positive
    return make_field(spec("1", "s - 2", T))


def test_cosine():
    tr = integrate(harmonic(), 0.0, (3.0, 0.0), math.pi)
    assert tr.completed
    assert tr.end[0] - 2 == pytest.approx(-1.0, abs=1e-8)
    assert tr.end[1] == pytest.approx(0.0, abs=1e-8)


def test_hyperbolic_cosine_below_zero():
    tr = integrate(make_field(spec("-1")), 0.0, (-1.0, 0.0), 1.0)
    assert tr.end[0] == pytest.approx(-math.cosh(1.0), abs=1e-8)


def test_extended_field_is_linear_below_zero():
    fld = make_field(spec("sin(2*pi*x)"))
    assert fld(0.3, -2.0, 5.0) == -2.0
    assert fld(0.3, 0.0, 5.0) == 0.0


def test_modes_reduce_to_each_other():
    p = spec("sin(2*pi*x) - 0.3")
    ext, theta1 = make_field(p), make_field(p, "theta", theta=1.0)
    raw = make_field(p, "raw")
    forced0 = make_field(p, "alpha", alpha=0.0, forcing=Weight.from_expr("1", 1.0))
    for x, u, v in [(0.1, 0.5, 1.0), (0.7, 2.0, -1.0), (0.3, 1e-3, 0.0)]:
        assert ext(x, u, v) == theta1(x, u, v) == raw(x, u, v) == forced0(x, u, v)


def test_bad_mode_parameters():
    p = spec("x - 0.6")
    with pytest.raises(ModelError):
        make_field(p, "theta", theta=0.0)
    with pytest.raises(ModelError):
        make_field(p, "alpha", alpha=1.0)
    with pytest.raises(ModelError):
        make_field(p, "lienard")


def test_blowup_matches_fixed_step_escape():
    p = spec("-1", T=3.0)
    tr = integrate(make_field(p), 0.0, (10.0, 10.0), 3.0)
    assert tr.termination.kind == "blowup"
    bound = escape_bound()
    _, _, gone, esc_x = rk4(lambda x, u, v: u * u, 0.0, (np.array([10.0]), np.array([10.0])), 3.0, 300_000,
                            escape=bound)
    assert gone[0]
    assert tr.termination.x == pytest.approx(esc_x[0], abs=1e-4)


def test_raw_mode_stops_at_zero():
    tr = integrate(make_field(spec("1", "s", T=3.0), "raw"), 0.0, (1.0, 0.0), 3.0)
    assert not tr.completed
    assert tr.termination.x == pytest.approx(math.pi / 2, abs=1e-6)


def test_order_of_the_stepper():
    fld = harmonic(20.0)
    loose = Tolerances(abs=1e-1, rel=1e-1)
    hs = np.array([1.0, 0.5, 0.25])
    errs = [abs(integrate(fld, 0.0, (3.0, 0.0), 20.0, loose, max_step=h, dense=False).end[0] - 2 - math.cos(20))
            for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 7.0  # eighth-order method, nominal order minus one


def test_breakpoints_are_in_the_mesh():
    w = Weight.piecewise([(0.0, 0.37, "2"), (0.37, 0.81, "-1"), (0.81, 1.0, "0.5")], 1.0)
    tr = integrate(make_field(spec(w)), 0.0, (0.6, 0.0), 1.0)
    for b in w.breakpoints:
        assert np.min(np.abs(tr.x - b)) == 0.0


def test_breakpoint_honesty():
    w = Weight.piecewise([(0.0, 0.37, "2"), (0.37, 1.0, "-1")], 1.0)
    fld = make_field(spec(w))
    whole = integrate(fld, 0.0, (0.6, 0.2), 1.0).end
    first = integrate(fld, 0.0, (0.6, 0.2), 0.37).end
    split = integrate(fld, 0.37, first, 1.0).end
    assert np.allclose(whole, split, atol=DEFAULTS.tol.residual, rtol=0)


def test_sign_barrier_follows_sinh_after_crossing():
    # a = 0: straight line down to zero, then u'' = u below
    eps, slope = 0.1, -1.0
    tr = integrate(make_field(spec("0", T=2.0)), 0.0, (eps, slope), 2.0)
    x0 = eps / -slope
    x = np.linspace(x0 + 0.05, 2.0, 50)
    xs, u, _ = tr.sample(2001)
    want = slope * np.sinh(x - x0)
    assert np.interp(x, xs, u) == pytest.approx(want, abs=1e-6)


@given(st.floats(0.05, 3.0), st.floats(-2.0, 2.0))
def test_time_reversal(c, d):
    fld = make_field(spec("sin(2*pi*x) - 0.3", T=1.0))
    fwd = integrate(fld, 0.0, (c, d), 1.0, escape=1e4)
    if not fwd.completed:
        return
    back = integrate(fld, 1.0, fwd.end, 0.0, escape=1e4)
    scale = 1 + max(abs(c), abs(d))
    tol = 10 * (DEFAULTS.tol.abs + DEFAULTS.tol.rel * np.abs(np.concatenate([fwd.u, fwd.v])).max())
    assert abs(back.end[0] - c) <= tol * scale and abs(back.end[1] - d) <= tol * scale


def test_profile_residual_is_small():
    tr = integrate(make_field(spec("sin(2*pi*x) - 0.3")), 0.0, (1.0, 0.5), 1.0, profile=True)
    assert tr.residual() <= DEFAULTS.tol.residual


def test_csv_and_sidecar(tmp_path):
    tr = integrate(harmonic(), 0.0, (3.0, 0.0), math.pi)
    path = tr.write_csv(tmp_path / "traj.csv", n=11)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,u,uprime" and len(lines) == 12
    side = json.loads(path.with_suffix(".json").read_text())
    assert side["termination"]["kind"] == "completed"
