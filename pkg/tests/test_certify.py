import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indefbvp.certify import (DAMPED_RESULTS, EXISTENCE_RESULTS, EXISTS, LARGE_NU_RESULTS,
                              NONEXISTENCE, PROVEN, alpha0_bound, check_hypotheses, default_forcing,
                              nonexistence_threshold, rotate_weight_periodic)
from indefbvp.eigen import lambda_thresholds
from indefbvp.model import ModelError, Nonlinearity, ProblemSpec, Weight, sign_structure

STEP = Weight.piecewise([(0, 1 / 3, "1"), (1 / 3, 1, "-1")], 1.0)


def mk(w, g="s^2", bc="periodic", T=1.0, nu=1.0):
    weight = w if isinstance(w, Weight) else Weight.from_expr(w, T)
    return ProblemSpec(bc, weight, Nonlinearity.from_text(g), nu)


def test_pure_power_instance_exists():
    c = check_hypotheses(mk("sin(2*pi*x) - 0.3"))
    assert c.conclusion == EXISTS and c.strength == PROVEN
    assert "pure-power" in c.routing
    assert c.m == 1 and c.mean == pytest.approx(-0.3)
    assert c.recheck()


def test_positive_mean_with_increasing_g_is_nonexistence():
    c = check_hypotheses(mk("sin(2*pi*x) + 0.3"))
    assert c.conclusion == NONEXISTENCE and c.routing == []


def test_weight_without_sign_change_is_nonexistence():
    assert check_hypotheses(mk("-1")).conclusion == NONEXISTENCE


def test_zero_mean_is_nonexistence():
    assert check_hypotheses(mk("sin(2*pi*x)")).conclusion == NONEXISTENCE


def test_small_nu_with_bounded_derivative_is_not_existence():
    c = check_hypotheses(mk("sin(2*pi*x) - 0.5", "2*s*arctan(s^2)", nu=0.01))
    assert c.nu_star is not None and 0.01 < c.nu_star.nu_star
    assert c.conclusion == NONEXISTENCE


def test_report_names_routes_and_serialises():
    c = check_hypotheses(mk("sin(2*pi*x) - 0.3"))
    text = c.report()
    assert "pure-power" in text and EXISTS in text
    d = c.to_dict()
    for key in ("conclusion", "strength", "verdicts", "routing", "eigenvalues", "nu_star", "necessary"):
        assert key in d


def test_rotation_examples():
    w, off = rotate_weight_periodic(Weight.from_expr("cos(x) - 0.5", 2 * math.pi))
    assert off == pytest.approx(math.pi, abs=1e-8)
    assert sign_structure(w).intervals[0] == pytest.approx((2 * math.pi / 3, 4 * math.pi / 3), abs=1e-8)
    assert rotate_weight_periodic(Weight.from_expr("sin(2*pi*x) - 0.2", 1.0))[1] == 0.0
    with pytest.raises(ModelError):
        rotate_weight_periodic(Weight.from_expr("x", 1.0), "neumann")


def test_nonexistence_threshold_spot_value():
    b = nonexistence_threshold(mk("sin(2*pi*x) - 0.5"), 1.0, mean=-0.5, l1_norm=1.0)
    assert b.M == pytest.approx(1.5, rel=1e-9)
    assert b.nu_star == pytest.approx(2 / 9, rel=1e-12)
    # dense scan of the free parameter
    M = np.linspace(1.0 + 1e-9, 100.0, 2_000_001)
    scan = np.minimum((M - 1.0) / M ** 2, 0.5 / M ** 2)
    assert b.nu_star == pytest.approx(scan.max(), rel=1e-6)
    assert b.nu_star >= scan.max()
    assert M[np.argmax(scan)] == pytest.approx(1.5, abs=1e-4)


def test_threshold_vanishes_with_the_mean():
    b = nonexistence_threshold(mk("sin(2*pi*x) - 0.5"), 1.0, mean=-1e-9, l1_norm=1.0)
    assert b.nu_star < 1e-8


@settings(max_examples=20)
@given(st.floats(-3, -0.01), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.2, 3))
def test_threshold_plugs_back(mean, L, D, T):
    b = nonexistence_threshold(mk("sin(2*pi*x) - 0.5", T=T), D, mean=mean, l1_norm=L)
    assert b.M > L
    assert b.nu_star <= (b.M - L) / (D * b.M ** 2 * T) * (1 + 1e-12)
    assert b.nu_star <= -mean / (D * b.M ** 2) * (1 + 1e-12)


def test_alpha0_formula():
    v = Weight.indicator([(0.0, 0.5)], 1.0)
    assert alpha0_bound(mk(STEP), 2.0, v) == pytest.approx(8.08, rel=1e-12)


def test_alpha0_shrinks_with_R():
    v = Weight.indicator([(0.0, 0.5)], 1.0)
    assert alpha0_bound(mk(STEP), 1e-6, v) < 1e-10


def test_default_forcing_mass():
    ss = sign_structure(Weight.from_expr("sin(2*pi*x) - 0.2", 1.0))
    assert default_forcing(ss).l1_norm == pytest.approx(0.5 - 2 * math.asin(0.2) / (2 * math.pi), abs=1e-8)
    two = sign_structure(Weight.piecewise([(0, .1, "1"), (.1, .5, "-1"), (.5, .7, "1"), (.7, 1, "-1")], 1.0))
    assert default_forcing(two).l1_norm == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(ValueError):
        default_forcing(sign_structure(Weight.from_expr("-1", 1.0)))


@settings(max_examples=15)
@given(st.floats(-0.9, 0.9), st.sampled_from(["s^2", "s^3", "2*s*arctan(s^2)", "s^2/(1+s)"]),
       st.sampled_from(["periodic", "neumann"]))
def test_existence_claims_cite_true_premises(k, g, bc):
    c = check_hypotheses(mk(f"sin(2*pi*x) - {k!r}", g, bc))
    if c.conclusion == EXISTS:
        assert c.routing or c.large_nu_routing
        table = {**EXISTENCE_RESULTS, **LARGE_NU_RESULTS, **DAMPED_RESULTS}
        for name in c.routing + c.large_nu_routing:
            assert all(c.verdicts[k].value is True for k in table[name])
        assert c.recheck()
    if k <= 0:  # mean -k >= 0 with increasing g rules out positive solutions
        assert c.conclusion == NONEXISTENCE


@settings(max_examples=10)
@given(st.floats(0.1, 20.0))
def test_thresholds_scale_with_nu(nu):
    p = mk("sin(2*pi*x) - 0.3")
    base = lambda_thresholds(p).max
    scaled = lambda_thresholds(p.with_weight(p.weight.scaled(nu))).max
    assert scaled == pytest.approx(base / nu, rel=1e-8)
