import math

import numpy as np
import pytest

from indefbvp.model import Nonlinearity
from indefbvp.probes import (derivative_bound, probe_g1, probe_growth, probe_increasing, probe_regular_oscillation,
                             probe_smooth_at_zero)


def g(text, **decl):
    return Nonlinearity.from_text(text, **decl)


def test_square_limits():
    rep = probe_growth(g("s^2"))
    assert rep.zero.value == pytest.approx(0.0, abs=1e-6)
    assert rep.infinity.value == math.inf


def test_arctan_limits():
    rep = probe_growth(g("2*s*arctan(s^2)"))
    assert rep.zero.value == pytest.approx(0.0, abs=1e-6)
    assert rep.infinity.value == pytest.approx(math.pi, rel=1e-6)


def test_rational_limit():
    assert probe_growth(g("3*s^2/(s + 1)")).infinity.value == pytest.approx(3.0, rel=1e-6)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_linear_limits_equal_the_slope(c):
    rep = probe_growth(g(f"{c}*s"))
    assert rep.zero.value == pytest.approx(c, rel=1e-9)
    assert rep.infinity.value == pytest.approx(c, rel=1e-9)


def test_declarations_are_compared_not_overridden():
    rep = probe_growth(g("s^2", declared_zero_limit=0.0, declared_inf_liminf=math.inf))
    assert rep.zero_limit == "consistent" and rep.inf_liminf == "consistent"
    bad = probe_growth(g("s^2", declared_zero_limit=1.0))
    assert bad.zero_limit == "inconsistent"


def test_regular_oscillation():
    assert probe_regular_oscillation(g("s^2")).verdict.value is True
    assert probe_regular_oscillation(g("s^2*exp(-1/s)")).verdict.value is False
    assert probe_regular_oscillation(g("s^2.5*sin(1/s)^2 + s^3")).verdict.value is False


def test_declared_oscillation_flag_wins():
    with pytest.warns(RuntimeWarning, match="declared"):
        v = probe_regular_oscillation(g("s^2*exp(-1/s)", regular_oscillation=True)).verdict
    assert v.value is True and v.source == "declared"


def test_derivative_bounds():
    ident = derivative_bound(g("s"))
    assert ident.raw_sup == pytest.approx(1.0) and ident.value == pytest.approx(1.05)
    assert derivative_bound(g("s^2"), (0.0, 10.0)).value == pytest.approx(21.0)


def test_arctan_derivative_bound_matches_finite_differences():
    gg = g("2*s*arctan(s^2)")
    s = np.logspace(-6, 4, 1_000_000)
    vals = gg.evaluate(s)
    fd = np.abs(np.gradient(vals, s)).max()
    assert derivative_bound(gg).raw_sup == pytest.approx(fd, rel=1e-2)


def test_unbounded_derivative_is_reported():
    rep = derivative_bound(g("s^2"))
    assert rep.unbounded and rep.value == math.inf


def test_g1_and_monotonicity():
    assert probe_g1(g("s^2")).value is True
    assert probe_g1(g("s^2 - s")).value is False
    assert probe_increasing(g("s^3")).value is True
    assert probe_increasing(g("s^2*(2 + sin(s))")).value is False


def test_smooth_at_zero():
    assert probe_smooth_at_zero(g("s^2")).value is True
    assert probe_smooth_at_zero(g("s^1.5*(1 + abs(sin(1/s)))")).value is not True
