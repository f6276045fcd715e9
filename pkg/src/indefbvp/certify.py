"""Hypothesis checks, result routing and explicit thresholds.

:func:`check_hypotheses` evaluates every condition on the weight and the
nonlinearity, computes the eigenvalue thresholds and decides which existence
or nonexistence results apply. Each condition carries a :class:`Verdict`
whose ``source`` records how it was established; a conclusion built only on
declared, analytic or computed facts is ``PROVEN``, one that relies on a
numeric limit probe is ``SUPPORTED``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import probes
from .config import DEFAULTS
from .eigen import Thresholds, lambda_thresholds
from .model import ModelError, ProblemSpec, SignStructure, Weight, periodic_rotation, sign_structure
from .probes import Verdict

EXISTS = "EXISTS"
NONEXISTENCE = "NONEXISTENCE"
INCONCLUSIVE = "INCONCLUSIVE"
PROVEN = "PROVEN"
SUPPORTED = "SUPPORTED"

_STRONG = ("declared", "analytic", "computed")

# premises of each result, by verdict name
EXISTENCE_RESULTS = {
    "superlinear-regular-oscillation": ("g1", "a1", "a2", "g2_zero", "regular_oscillation", "g2_infinity"),
    "superlinear-smooth-at-zero": ("g1", "a1", "a2", "g2_zero", "smooth_at_zero", "g2_infinity"),
    "superlinear-at-infinity": ("g1", "a1", "a2", "g2_zero", "regular_oscillation", "g_inf_infinite"),
    "pure-power": ("pure_power", "a1", "a2"),
    "bounded-growth-min-eigenvalue": ("g1", "a1", "a2", "g2_zero", "regular_oscillation", "g_inf_above_min", "limsup_finite"),
    "increasing-superlinear": ("g1", "c1_increasing", "a1", "a2", "g2_zero", "g_inf_infinite"),
}
# results that give existence only for nu beyond an unspecified threshold
LARGE_NU_RESULTS = {
    "large-nu-positive-growth": ("g1", "a1", "a2", "g2_zero", "regular_oscillation", "g_inf_positive"),
    "large-nu-single-interval": ("g1", "interval_J", "a2", "g2_zero", "regular_oscillation", "g_inf_positive",
                      "limsup_finite"),
    "large-nu-smooth-single-interval": ("g1", "interval_J", "a2", "smooth", "derivative_zero_at_zero",
                      "derivative_inf_positive_finite"),
    "large-nu-asymptotically-linear": ("g1", "interval_J", "a2", "smooth", "derivative_zero_at_zero",
                    "derivative_limit_positive_finite"),
}
# the damped periodic equation; damping_bounded is added by the Liénard path
DAMPED_RESULTS = {
    "damped-superlinear": ("g1", "a1", "a2", "g2_zero", "regular_oscillation", "g_inf_infinite", "damping_bounded"),
}


def _tri_and(*vs: Verdict, note: str = "") -> Verdict:
    """Three-valued conjunction; the weakest source wins."""
    if any(v.value is False for v in vs):
        return Verdict(False, _weakest(vs), note)
    if any(v.value is None for v in vs):
        return Verdict(None, _weakest(vs), note)
    return Verdict(True, _weakest(vs), note)


def _weakest(vs) -> str:
    order = ["probe", "computed", "analytic", "declared"]
    return min((v.source for v in vs), key=lambda s: order.index(s) if s in order else 0)


def _num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


@dataclass(frozen=True)
class NonexistenceBound:
    nu_star: float
    M: float
    D: float
    l1_norm: float
    mean: float
    T: float

    def to_dict(self) -> dict:
        return {"nu_star": _num(self.nu_star), "M": _num(self.M), "D": _num(self.D)}


@dataclass
class Certificate:
    conclusion: str
    strength: str | None
    verdicts: dict[str, Verdict]
    mean: float
    l1_norm: float
    intervals: tuple[tuple[float, float], ...]
    nu: float
    thresholds: Thresholds | None
    g_inf: float
    g_sup: float
    derivative_bound: float
    routing: list[str]
    large_nu_routing: list[str]
    nonexistence: list[str]
    nu_star: NonexistenceBound | None
    nu_crossover: float | None
    necessary: dict
    warnings: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.intervals)

    @property
    def lambda_max(self) -> float | None:
        return self.thresholds.max / self.nu if self.thresholds else None

    @property
    def lambda_min(self) -> float | None:
        return self.thresholds.min / self.nu if self.thresholds else None

    def premises_hold(self, result: str) -> bool:
        table = {**EXISTENCE_RESULTS, **LARGE_NU_RESULTS, **DAMPED_RESULTS}
        return all(self.verdicts[name].value is True for name in table[result])

    def recheck(self) -> bool:
        """Independent pass: every routed result has all premises true."""
        return all(self.premises_hold(r) for r in self.routing + self.large_nu_routing)

    def to_dict(self) -> dict:
        th = self.thresholds
        return {
            "conclusion": self.conclusion,
            "strength": self.strength,
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "weight": {"mean": self.mean, "l1_norm": self.l1_norm, "m": self.m,
                       "intervals": [list(iv) for iv in self.intervals]},
            "nu": self.nu,
            "eigenvalues": None if th is None else {
                "weight": th.to_dict(),
                "scaled_max": _num(self.lambda_max), "scaled_min": _num(self.lambda_min)},
            "g_inf": _num(self.g_inf),
            "g_sup": _num(self.g_sup),
            "derivative_bound": _num(self.derivative_bound),
            "routing": list(self.routing),
            "large_nu_routing": list(self.large_nu_routing),
            "nonexistence": list(self.nonexistence),
            "nu_star": self.nu_star.to_dict() if self.nu_star else None,
            "nu_crossover": _num(self.nu_crossover) if self.nu_crossover is not None else None,
            "necessary": self.necessary,
            "warnings": list(self.warnings),
            "details": self.details,
        }

    def report(self) -> str:
        lines = [f"conclusion: {self.conclusion}" + (f" ({self.strength})" if self.strength else "")]
        lines.append(f"mean of a: {self.mean:.10g}   L1 norm: {self.l1_norm:.10g}   m = {self.m}")
        for iv in self.intervals:
            lines.append(f"  positivity interval [{iv[0]:.10g}, {iv[1]:.10g}]")
        if self.thresholds:
            for t in self.thresholds.intervals:
                lines.append(f"  lambda_1 on [{t.interval[0]:.6g}, {t.interval[1]:.6g}] ({t.left_bc}/{t.right_bc}):"
                             f" {t.value:.10g}")
        lines.append(f"g_inf (liminf g(s)/s): {self.g_inf}   nu: {self.nu}")
        lines.append("conditions:")
        for k, v in self.verdicts.items():
            lines.append(f"  {k:32s} {str(v.value):5s} [{v.source}] {v.note}")
        if self.routing:
            lines.append("existence at this nu: " + ", ".join(self.routing))
        if self.large_nu_routing:
            lines.append("existence for large nu: " + ", ".join(self.large_nu_routing))
        if self.nonexistence:
            lines.append("nonexistence: " + ", ".join(self.nonexistence))
        if self.nu_star:
            lines.append(f"no positive solutions for nu < {self.nu_star.nu_star:.10g} (M = {self.nu_star.M:.10g})")
        if self.nu_crossover is not None:
            lines.append(f"eigenvalue crossover nu_c = {self.nu_crossover:.10g}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------


def rotate_weight_periodic(w: Weight, bc: str = "periodic") -> tuple[Weight, float]:
    """Cyclic shift putting a negative stretch of ``w`` at the seam ``0 ~ T``.

    Returns the shifted weight and the offset; a solution ``u`` of the shifted
    problem corresponds to ``x -> u((x - offset) mod T)`` for the original.
    """
    if bc != "periodic":
        raise ModelError("rotation is only meaningful for periodic boundary conditions")
    offset = periodic_rotation(w)
    return (w.shifted(offset) if offset else w), offset


def nonexistence_threshold(p: ProblemSpec, D: float | None = None, *, mean: float | None = None,
                           l1_norm: float | None = None) -> NonexistenceBound:
    """Largest ``nu_*`` from the bound ``min((M - |a|_1)/(D M^2 T), -mean/(D M^2))``.

    The free parameter ``M > |a|_1`` is optimised by a ternary search on
    ``log M``; the analytic crossover ``M = |a|_1 - mean T`` is also tried and
    the better of the two is kept.
    """
    if D is None:
        D = probes.derivative_bound(p.g).value
    if not math.isfinite(D) or D <= 0:
        raise ValueError("nonexistence bound needs a finite positive derivative bound")
    mean = p.weight.mean if mean is None else mean
    L = p.weight.l1_norm if l1_norm is None else l1_norm
    T = p.T
    if mean >= 0:
        raise ValueError("nonexistence bound needs a negative mean")

    def phi(M):
        return min((M - L) / (D * M * M * T), -mean / (D * M * M))

    lo, hi = math.log(L * (1 + 1e-12)), math.log(100 * L + 100 * abs(mean) * T + 1.0)
    for _ in range(200):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if phi(math.exp(m1)) < phi(math.exp(m2)):
            lo = m1
        else:
            hi = m2
    best_M = math.exp(0.5 * (lo + hi))
    crossover = L - mean * T
    if phi(crossover) >= phi(best_M):
        best_M = crossover
    return NonexistenceBound(phi(best_M), best_M, D, L, mean, T)


def _max_g(p: ProblemSpec, R: float) -> float:
    s = np.linspace(0.0, R, 2001)
    vals = p.g.evaluate(s)
    k = int(np.argmax(vals))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, len(s) - 1)]
    best = float(vals[k])
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: -p.g(x), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * (1 + R)})
        best = max(best, -float(res.fun))
    return best


def alpha0_bound(p: ProblemSpec, R: float, v: Weight) -> float:
    """Forcing level beyond which no solution with ``0 <= u <= R`` exists.

    ``(1 + margin) nu |a|_1 max_{[0,R]} g / |v|_1``: integrating the forced
    equation over a period leaves ``alpha |v|_1 = -nu int a g(u)``, whose
    right side is at most ``nu |a|_1 max g``.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    vn = v.l1_norm
    if vn <= 0:
        raise ValueError("forcing must not vanish identically")
    return (1 + DEFAULTS.alpha_margin) * p.nu * p.weight.l1_norm * _max_g(p, R) / vn


def default_forcing(ss: SignStructure, T: float | None = None) -> Weight:
    """Indicator of the union of the positivity intervals."""
    if not ss.intervals:
        raise ValueError("no positivity interval to support the forcing")
    T = ss.T if T is None else T
    return Weight.indicator(ss.intervals, T)


# ---------------------------------------------------------------------------


def _limit_verdicts(p: ProblemSpec, growth: probes.GrowthReport | None, power):
    g = p.g
    if power is not None:
        K, gam = power
        g_zero = 0.0 if gam > 1 else (K if gam == 1 else math.inf)
        g_inf = math.inf if gam > 1 else (K if gam == 1 else 0.0)
        return g_zero, g_inf, g_inf, "analytic"
    if g.declared_zero_limit is not None:
        g_zero, src0 = g.declared_zero_limit, "declared"
    else:
        g_zero, src0 = growth.zero.value, "probe"
    if g.declared_inf_liminf is not None:
        g_inf = g.declared_inf_liminf
        src = "declared"
    else:
        g_inf, src = growth.infinity.liminf, "probe"
    if g.declared_inf_limsup is not None:
        g_sup = g.declared_inf_limsup
    elif g.declared_inf_liminf is not None and math.isinf(g.declared_inf_liminf):
        g_sup = math.inf
    else:
        g_sup = growth.infinity.limsup
    return g_zero, g_inf, g_sup, (src0, src)


def check_hypotheses(p: ProblemSpec, *, with_eigen: bool = True) -> Certificate:
    """Evaluate all conditions for ``p`` and route to the applicable results."""
    w, g, nu = p.weight, p.g, p.nu
    warnings_: list[str] = []
    mean, l1 = w.mean, w.l1_norm
    ss = sign_structure(w)
    has_negative = bool(ss.negative_intervals)
    V: dict[str, Verdict] = {}

    power = g.power_law
    pure_power = power is not None and power[0] > 0 and power[1] > 1
    V["pure_power"] = Verdict(pure_power, "analytic", f"g = {power[0]:g} s^{power[1]:g}" if power else "")

    V["a1"] = Verdict(ss.a1, "computed", f"m = {ss.m}")
    # a mean within quadrature error of zero counts as nonnegative
    mean_tol = DEFAULTS.quad_abs * (1 + l1) / w.T
    negative_mean = mean < -mean_tol
    V["a2"] = Verdict(negative_mean, "computed", f"mean = {mean:.6g}")
    V["interval_J"] = Verdict(bool(ss.intervals), "computed")
    V["sign_change"] = Verdict(bool(ss.intervals) and has_negative, "computed")

    if power is not None:
        V["g1"] = Verdict(power[0] > 0, "analytic")
        V["regular_oscillation"] = Verdict(True, "analytic", "power law")
        V["smooth_at_zero"] = Verdict(power[1] >= 1, "analytic")
        V["g_increasing"] = Verdict(power[0] > 0 and power[1] > 0, "analytic")
        growth = None
    else:
        V["g1"] = probes.probe_g1(g)
        growth = probes.probe_growth(g)
        ro = probes.probe_regular_oscillation(g)
        V["regular_oscillation"] = ro.verdict
        V["smooth_at_zero"] = probes.probe_smooth_at_zero(g)
        V["g_increasing"] = probes.probe_increasing(g)
        for key, status in (("zero_limit", growth.zero_limit), ("inf_liminf", growth.inf_liminf),
                            ("inf_limsup", growth.inf_limsup)):
            if status == "inconsistent":
                warnings_.append(f"declared {key} disagrees with the numeric probe")
        if ro.verdict.note:
            warnings_.append(f"regular oscillation: {ro.verdict.note}")

    g_zero, g_inf, g_sup, srcs = _limit_verdicts(p, growth, power)
    src0, src_inf = (srcs, srcs) if isinstance(srcs, str) else srcs
    V["g2_zero"] = Verdict(None if math.isnan(g_zero) else g_zero == 0.0, src0, f"lim g(s)/s at 0 = {g_zero}")
    inf_known = not math.isnan(g_inf)
    V["g_inf_infinite"] = Verdict(math.isinf(g_inf) if inf_known else None, src_inf, f"g_inf = {g_inf}")
    V["g_inf_positive"] = Verdict(g_inf > 0 if inf_known else None, src_inf)
    V["limsup_finite"] = Verdict(None if math.isnan(g_sup) else math.isfinite(g_sup), src_inf,
                                 f"limsup g(s)/s = {g_sup}")

    # smoothness on the whole half line and derivative limits for the linear-growth results
    smooth_all = V["smooth_at_zero"] if power is not None else Verdict(
        V["smooth_at_zero"].value, "probe", "symbolic derivative exists")
    V["smooth"] = smooth_all
    if power is not None:
        gam = power[1]
        V["derivative_zero_at_zero"] = Verdict(gam > 1, "analytic")
        V["derivative_inf_positive_finite"] = Verdict(gam == 1, "analytic")
        V["derivative_limit_positive_finite"] = Verdict(gam == 1, "analytic")
        V["c1_increasing"] = Verdict(gam >= 1 and power[0] > 0, "analytic")
    else:
        dl = probes.probe_derivative_limits(g)
        z, inf = dl.at_zero, dl.at_infinity
        V["derivative_zero_at_zero"] = Verdict(None if math.isnan(z.value) else z.value == 0.0, "probe")
        lo_ok = inf.liminf > 0 and math.isfinite(inf.limsup) if not math.isnan(inf.liminf) else None
        V["derivative_inf_positive_finite"] = Verdict(lo_ok, "probe")
        V["derivative_limit_positive_finite"] = Verdict(
            None if math.isnan(inf.value) and lo_ok is not False else
            (bool(lo_ok) and not math.isnan(inf.value) and 0 < inf.value < math.inf), "probe")
        V["c1_increasing"] = _tri_and(V["smooth"], V["g_increasing"])

    D = probes.derivative_bound(g)
    thresholds = None
    if with_eigen and ss.a1:
        thresholds = lambda_thresholds(p, ss)
    lam_max = thresholds.max / nu if thresholds else math.nan
    lam_min = thresholds.min / nu if thresholds else math.nan
    if thresholds is None:
        V["g2_infinity"] = Verdict(None, "computed", "no eigenvalue thresholds")
        V["g_inf_above_min"] = Verdict(None, "computed")
    else:
        V["g2_infinity"] = Verdict(g_inf > lam_max if inf_known else None, _weakest([Verdict(True, src_inf)]),
                                   f"g_inf = {g_inf} vs max lambda = {lam_max:.10g}")
        V["g_inf_above_min"] = Verdict(g_inf > lam_min if inf_known else None, src_inf,
                                       f"g_inf = {g_inf} vs min lambda = {lam_min:.10g}")

    # -- nonexistence ------------------------------------------------------
    nonexistence: list[str] = []
    necessary = {"sign_change": V["sign_change"].value,
                 "negative_mean_required": V["g_increasing"].value is True,
                 "negative_mean": negative_mean}
    zero_weight = l1 <= 1e-14
    if zero_weight:
        warnings_.append("weight vanishes identically: every constant solves the problem")
    elif not V["sign_change"].value:
        nonexistence.append("weight must change sign")
    if V["g_increasing"].value is True and not negative_mean and not zero_weight:
        nonexistence.append("increasing g needs a negative mean")
    if pure_power and V["a1"].value and not negative_mean:
        nonexistence.append("pure-power")
    nu_star = None
    if math.isfinite(D.value) and negative_mean and not zero_weight:
        nu_star = nonexistence_threshold(p.with_nu(1.0), D.value, mean=mean, l1_norm=l1)
        if nu < nu_star.nu_star:
            nonexistence.append("small-nu-bounded-derivative")

    # -- existence ---------------------------------------------------------
    routing = [r for r, prem in EXISTENCE_RESULTS.items() if all(V[k].value is True for k in prem)]
    large = [r for r, prem in LARGE_NU_RESULTS.items() if all(V[k].value is True for k in prem)]
    if not ss.a1 and ss.intervals:
        warnings_.append("complement of the positivity intervals is not nonpositive; "
                         "only the single-interval results are attempted")
    if V["regular_oscillation"].value is False and V["g2_zero"].value:
        warnings_.append("g is not regularly oscillating at zero; if g(s)/s tends to zero fast the "
                         "regular-oscillation results may still extend (not certified)")

    def strength_of(names, table):
        srcs = [V[k] for r in names for k in table[r]]
        return PROVEN if all(v.source in _STRONG for v in srcs) else SUPPORTED

    if routing and nonexistence:
        warnings_.append("existence and nonexistence both routed; inputs are inconsistent")
        conclusion, strength = INCONCLUSIVE, None
    elif routing:
        best = [r for r in routing if strength_of([r], EXISTENCE_RESULTS) == PROVEN] or routing
        routing = best + [r for r in routing if r not in best]
        conclusion, strength = EXISTS, strength_of(best[:1], EXISTENCE_RESULTS)
    elif nonexistence:
        conclusion = NONEXISTENCE
        weak = (nonexistence == ["increasing g needs a negative mean"] and V["g_increasing"].source == "probe") \
            or (nonexistence == ["small-nu-bounded-derivative"] and D.method != "declared")
        strength = SUPPORTED if weak else PROVEN
    else:
        conclusion, strength = INCONCLUSIVE, None

    crossover = None
    if thresholds is not None and inf_known and g_inf > 0:
        crossover = 0.0 if math.isinf(g_inf) else thresholds.max / g_inf

    details = {"derivative_bound": D.to_dict(), "sign_tolerance": ss.sign_tolerance,
               "negative_intervals": [list(iv) for iv in ss.negative_intervals]}
    if growth is not None:
        details["growth"] = growth.to_dict()
    return Certificate(conclusion, strength, V, mean, l1, ss.intervals, nu, thresholds, g_inf, g_sup,
                       D.value, routing, large, nonexistence, nu_star, crossover, necessary, warnings_, details)
