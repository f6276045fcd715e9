"""Numeric probes for the behaviour of ``g`` near zero and at infinity.

Limits are not finitely computable, so every probe returns an estimate plus a
verdict that may be ``None`` (inconclusive). Declarations on the
:class:`~indefbvp.model.Nonlinearity` are never overridden, only checked.
Small arguments are evaluated in multiprecision so that functions such as
``s^2 exp(-1/s)`` do not underflow to zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .config import DEFAULTS
from .expr import DomainError, ExprError
from .model import Nonlinearity


@dataclass(frozen=True)
class Verdict:
    """Tri-state verdict with the kind of evidence behind it.

    ``source`` is one of ``declared``, ``analytic``, ``computed`` or ``probe``.
    """

    value: bool | None
    source: str = "probe"
    note: str = ""

    def __bool__(self) -> bool:
        return self.value is True

    def to_dict(self) -> dict:
        out = {"value": self.value, "source": self.source}
        if self.note:
            out["note"] = self.note
        return out


def _g_mp(g: Nonlinearity, s: float) -> mpmath.mpf:
    with mpmath.workdps(30):
        return g.expr.evaluate_mp(mpmath.mpf(s))


def _ratio(g: Nonlinearity, s: float) -> float:
    with mpmath.workdps(30):
        return float(g.expr.evaluate_mp(mpmath.mpf(s)) / s)


# ---------------------------------------------------------------------------
# positivity


def probe_g1(g: Nonlinearity, s_max: float | None = None, samples: int = 400) -> Verdict:
    """Check ``g(s) > 0`` on a log grid over ``(0, s_max]``."""
    s_max = DEFAULTS.probe_s_large if s_max is None else s_max
    grid = np.logspace(-8, math.log10(s_max), samples)
    try:
        for s in grid:
            if not _g_mp(g, s) > 0:
                return Verdict(False, "probe", f"g({s:.3g}) <= 0")
    except (DomainError, ExprError, ZeroDivisionError) as exc:
        return Verdict(False, "probe", f"g fails to evaluate: {exc}")
    return Verdict(True, "probe", f"g > 0 on {samples} points in [1e-8, {s_max:.3g}]")


def probe_increasing(g: Nonlinearity, s_max: float | None = None, samples: int = 400) -> Verdict:
    """Check ``g'(s) > 0`` on a log grid; used for the integral identity."""
    s_max = DEFAULTS.probe_s_large if s_max is None else s_max
    grid = np.logspace(-8, math.log10(s_max), samples)
    deriv = g.derivative
    try:
        with mpmath.workdps(30):
            ok = all(deriv.evaluate_mp(mpmath.mpf(s)) > 0 for s in grid)
    except (DomainError, ExprError, ZeroDivisionError) as exc:
        return Verdict(None, "probe", f"g' fails to evaluate: {exc}")
    return Verdict(ok, "probe")


# ---------------------------------------------------------------------------
# growth limits


@dataclass(frozen=True)
class LimitEstimate:
    value: float  # nan when unknown
    liminf: float
    limsup: float
    slope: float  # d log(g/s) / d log s over the last decade
    samples: tuple[tuple[float, float], ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {"value": _jsonable(self.value), "liminf": _jsonable(self.liminf),
                "limsup": _jsonable(self.limsup), "slope": self.slope}


def _jsonable(v: float):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


@dataclass(frozen=True)
class GrowthReport:
    zero: LimitEstimate
    infinity: LimitEstimate
    zero_limit: str  # consistent / inconsistent / inconclusive / undeclared
    inf_liminf: str
    inf_limsup: str
    overflow_at: float | None = None

    def to_dict(self) -> dict:
        return {"zero": self.zero.to_dict(), "infinity": self.infinity.to_dict(),
                "declarations": {"zero_limit": self.zero_limit, "inf_liminf": self.inf_liminf,
                                 "inf_limsup": self.inf_limsup},
                "overflow_at": self.overflow_at}


def _aitken(r0: float, r1: float, r2: float) -> float:
    den = r2 - 2 * r1 + r0
    if den == 0 or not math.isfinite(den):
        return r2
    est = r2 - (r2 - r1) ** 2 / den
    # only trust the acceleration when it stays near the data
    spread = max(abs(r2 - r1), abs(r1 - r0))
    return est if abs(est - r2) <= 10 * spread else r2


def _estimate_limit(s_vals: np.ndarray, ratios: np.ndarray, toward_zero: bool, dense=None) -> LimitEstimate:
    """Estimate the limit of ``ratios`` as ``s`` goes to 0 or to infinity.

    ``s_vals`` are ordered so that the last entries are closest to the limit.
    The last two decades decide: a power-law trend of ``g/s`` whose last
    decade lies entirely beyond the previous one means the limit is 0 or
    infinity, otherwise a finite value is extrapolated. ``dense`` maps an
    array of ``s`` to ratios and is used to resolve oscillation.
    """
    pairs = tuple(zip(s_vals.tolist(), ratios.tolist()))
    logs = np.log10(s_vals)
    end = logs[-1]
    step = 1.0 if toward_zero else -1.0  # direction away from the limit in log10 s
    last_s = np.logspace(end, end + step, 201)
    prev_s = np.logspace(end + step, end + 2 * step, 201)
    if dense is not None:
        last_r, prev_r = dense(last_s), dense(prev_s)
    else:
        tail = np.abs(logs - end) <= 1.0 + 1e-12
        prior = (np.abs(logs - end) > 1.0 + 1e-12) & (np.abs(logs - end) <= 2.0 + 1e-12)
        last_s, last_r, prev_r = s_vals[tail], ratios[tail], ratios[prior]
    lo, hi = float(last_r.min()), float(last_r.max())
    if lo <= 0 or len(prev_r) == 0:
        return LimitEstimate(float(ratios[-1]), lo, hi, float("nan"), pairs)
    slope = float(np.polyfit(np.log(last_s), np.log(last_r), 1)[0])
    trend = -slope if toward_zero else slope
    # envelope test: the liminf (limsup) itself must move by a clear factor
    if trend > 0.1 and (lo >= prev_r.max() or lo >= 2 * prev_r.min()):
        return LimitEstimate(math.inf, math.inf, math.inf, slope, pairs)
    if trend < -0.1 and (hi <= prev_r.min() or hi <= 0.5 * prev_r.max()):
        return LimitEstimate(0.0, 0.0, 0.0, slope, pairs)
    if hi - lo <= 1e-3 * max(abs(hi), 1e-300):
        v = _aitken(*ratios[-3:].tolist())
        return LimitEstimate(v, v, v, slope, pairs)
    # oscillating or slowly varying: report the observed range only
    return LimitEstimate(float("nan"), lo, hi, slope, pairs)


def _compare(declared: float | None, estimate: float, decreasing_gap: bool) -> str:
    if declared is None:
        return "undeclared"
    if math.isnan(estimate):
        return "inconclusive"
    if math.isinf(declared) or math.isinf(estimate):
        return "consistent" if declared == estimate else "inconsistent"
    if abs(estimate - declared) <= 1e-3 * (1 + abs(declared)):
        return "consistent"
    return "inconclusive" if decreasing_gap else "inconsistent"


def probe_growth(g: Nonlinearity, s_small: tuple[float, float] | None = None,
                 s_large: float | None = None) -> GrowthReport:
    """Estimate ``lim g(s)/s`` at ``0+`` and the lower/upper limits at infinity.

    Ratios are sampled on dyadic grids from ``s_small[0]`` down to
    ``s_small[1]`` and from 100 up to ``s_large``. Each estimate is compared
    with the corresponding declaration on ``g``.
    """
    hi0, lo0 = s_small or DEFAULTS.probe_s_small
    s_large = DEFAULTS.probe_s_large if s_large is None else s_large
    n0 = int(math.floor(math.log2(hi0 / lo0))) + 1
    s0 = hi0 * 0.5 ** np.arange(n0)
    r0 = np.array([_ratio(g, s) for s in s0])

    def dense(xs):
        return np.array([_ratio(g, x) for x in xs])

    zero = _estimate_limit(s0, r0, toward_zero=True, dense=dense)

    s1, r1, overflow_at = [], [], None
    s = 100.0
    while s <= s_large * (1 + 1e-12):
        try:
            r = _ratio(g, s)
        except (DomainError, ExprError, OverflowError):
            r = math.inf
        if not math.isfinite(r):
            overflow_at = s
            break
        s1.append(s)
        r1.append(r)
        s *= 2.0
    if overflow_at is not None:
        warnings.warn(f"g/s overflows at s={overflow_at:.3g}; growth probe truncated", RuntimeWarning)
    if overflow_at is not None and len(s1) < 8:
        inf = LimitEstimate(math.inf, math.inf, math.inf, float("nan"), tuple(zip(s1, r1)))
    elif len(s1) >= 8:
        inf = _estimate_limit(np.array(s1), np.array(r1), toward_zero=False, dense=dense)
    else:
        inf = LimitEstimate(float("nan"), float("nan"), float("nan"), float("nan"), tuple(zip(s1, r1)))

    gaps = np.abs(r0 - g.declared_zero_limit) if g.declared_zero_limit is not None else None
    zero_mono = bool(gaps is not None and np.all(np.diff(gaps[-8:]) <= 1e-12 * (1 + gaps[-8:-1])))
    return GrowthReport(
        zero=zero,
        infinity=inf,
        zero_limit=_compare(g.declared_zero_limit, zero.value, zero_mono),
        inf_liminf=_compare(g.declared_inf_liminf, inf.liminf, False),
        inf_limsup=_compare(g.declared_inf_limsup, inf.limsup, False),
        overflow_at=overflow_at,
    )


# ---------------------------------------------------------------------------
# regular oscillation at zero


@dataclass(frozen=True)
class OscillationReport:
    verdict: Verdict
    score: float
    window_max: tuple[float, ...]
    windows: tuple[tuple[float, float], ...]  # (s upper end, omega half-width)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.to_dict(), "score": self.score,
                "window_max": list(self.window_max),
                "windows": [list(w) for w in self.windows]}


def probe_regular_oscillation(g: Nonlinearity, s_grid=None, omega_grid=None,
                              tolerance: float | None = None) -> OscillationReport:
    """Probe ``g(w s)/g(s) -> 1`` as ``s -> 0+`` and ``w -> 1``.

    Nested windows shrink ``s`` by a decade and halve the ``w`` half-width at
    each step. For window ``j`` the reported value is the largest
    ``|g(w s)/g(s) - 1|`` over the sampled points. The verdict is true when
    the last value is below ``tolerance`` and the tail is non-increasing.
    ``s_grid`` gives the window upper ends; ``omega_grid`` the half-widths.
    """
    tolerance = DEFAULTS.ro_tolerance if tolerance is None else tolerance
    s_tops = list(s_grid) if s_grid is not None else [10.0 ** (-2 - j) for j in range(6)]
    halfw = list(omega_grid) if omega_grid is not None else [0.1 * 2.0 ** -j for j in range(len(s_tops))]
    if len(halfw) != len(s_tops):
        raise ValueError("s_grid and omega_grid must have the same length")
    maxima = []
    with mpmath.workdps(30):
        for top, dw in zip(s_tops, halfw):
            ss = np.logspace(math.log10(top) - 1, math.log10(top), 61)
            ws = np.linspace(1 - dw, 1 + dw, 21)
            worst = 0.0
            for s in ss:
                base = g.expr.evaluate_mp(mpmath.mpf(s))
                if base == 0:
                    verdict = Verdict(None, "probe", f"g({s:.3g}) underflows to zero")
                    return OscillationReport(verdict, 1.0, tuple(maxima), tuple(zip(s_tops, halfw)))
                for w in ws:
                    val = abs(float(g.expr.evaluate_mp(mpmath.mpf(w * s)) / base) - 1.0)
                    worst = max(worst, val)
            maxima.append(worst)
    tail_ok = all(maxima[i + 1] <= maxima[i] * (1 + 1e-9) + 1e-15 for i in range(len(maxima) - 3, len(maxima) - 1))
    probed = maxima[-1] < tolerance and tail_ok
    note = ""
    if g.regular_oscillation is not None:
        if g.regular_oscillation != probed:
            note = "declaration disagrees with probe"
            warnings.warn(f"regular oscillation declared {g.regular_oscillation} but probe gives {probed}",
                          RuntimeWarning)
        verdict = Verdict(g.regular_oscillation, "declared", note)
    else:
        verdict = Verdict(probed, "probe")
    score = min(1.0, maxima[-1])
    return OscillationReport(verdict, score, tuple(maxima), tuple(zip(s_tops, halfw)))


# ---------------------------------------------------------------------------
# derivative bound


@dataclass(frozen=True)
class DerivativeBound:
    value: float  # inflated sup |g'|, inf when unbounded
    raw_sup: float
    argmax: float
    method: str  # symbolic / finite-difference
    unbounded: bool = False

    def to_dict(self) -> dict:
        return {"value": _jsonable(self.value), "raw_sup": _jsonable(self.raw_sup),
                "argmax": self.argmax, "method": self.method, "unbounded": self.unbounded}


def _derivative_values(g: Nonlinearity, s: np.ndarray) -> tuple[np.ndarray, str]:
    try:
        d = g.derivative
        return np.abs(d.evaluate(s, strict=False)), "symbolic"
    except ExprError:
        pass
    h = np.sqrt(np.finfo(float).eps) * (1 + s)
    lo = np.maximum(s - h, 0.0)
    vals = (g.evaluate(s + h, strict=False) - g.evaluate(lo, strict=False)) / (s + h - lo)
    return np.abs(vals), "finite-difference"


def derivative_bound(g: Nonlinearity, s_range: tuple[float, float] | None = None,
                     inflation: float | None = None) -> DerivativeBound:
    """Upper bound for ``sup |g'|`` on ``s_range`` from a dense grid.

    The sampled supremum is inflated by ``inflation`` (5% by default). With
    the default range, which stands in for the whole half line, growth of the
    supremum over the last decade marks the derivative as unbounded.
    """
    inflation = DEFAULTS.derivative_inflation if inflation is None else inflation
    check_unbounded = s_range is None
    lo, hi = s_range if s_range is not None else (0.0, DEFAULTS.probe_s_large)
    if g.derivative_bound is not None and s_range is None:
        D = float(g.derivative_bound)
        return DerivativeBound(D, D, float("nan"), "declared", math.isinf(D))
    lin_hi = min(hi, max(lo, 0.0) + 10.0)
    grid = [np.linspace(lo, lin_hi, 20001)]
    if hi > lin_hi:
        grid.append(np.logspace(math.log10(lin_hi), math.log10(hi), 20001))
    if lo <= 0:
        grid.append(np.logspace(-12, math.log10(min(hi, 1.0)), 2001))
    s = np.unique(np.concatenate(grid))
    s = s[s > 0] if lo <= 0 else s
    vals, method = _derivative_values(g, s)
    vals = np.where(np.isfinite(vals), vals, np.inf)
    k = int(np.argmax(vals))
    sup = float(vals[k])
    unbounded = math.isinf(sup)
    if check_unbounded and not unbounded and hi >= 1e3:
        last = vals[s >= hi / 10].max()
        prev = vals[(s >= hi / 100) & (s < hi / 10)].max()
        unbounded = bool(last > 1.5 * prev)
    if unbounded:
        return DerivativeBound(math.inf, sup, float(s[k]), method, True)
    return DerivativeBound(sup * inflation, sup, float(s[k]), method)


# ---------------------------------------------------------------------------
# smoothness and derivative limits


def probe_smooth_at_zero(g: Nonlinearity, s_top: float = 1e-2, s_bottom: float = 1e-8) -> Verdict:
    """Check that ``g'`` stays finite and does not grow as ``s`` decreases to 0.

    A declared ``smooth_at_zero`` flag is returned as is.
    """
    if g.smooth_at_zero is not None:
        return Verdict(bool(g.smooth_at_zero), "declared")
    try:
        d = g.derivative
    except ExprError as exc:
        return Verdict(None, "probe", f"no symbolic derivative: {exc}")
    ss = np.logspace(math.log10(s_bottom), math.log10(s_top), 301)
    with mpmath.workdps(30):
        try:
            vals = np.array([abs(float(d.evaluate_mp(mpmath.mpf(s)))) for s in ss])
        except (DomainError, ExprError, ZeroDivisionError) as exc:
            return Verdict(False, "probe", f"g' fails near zero: {exc}")
    if not np.all(np.isfinite(vals)):
        return Verdict(False, "probe", "g' is not finite near zero")
    n = len(ss) // 3
    low, high = vals[:n].max(), vals[-n:].max()
    if low > 2 * high + 1e-12:
        return Verdict(False, "probe", "g' grows toward zero")
    return Verdict(True, "probe")


@dataclass(frozen=True)
class DerivativeLimits:
    at_zero: LimitEstimate
    at_infinity: LimitEstimate

    def to_dict(self) -> dict:
        return {"zero": self.at_zero.to_dict(), "infinity": self.at_infinity.to_dict()}


def probe_derivative_limits(g: Nonlinearity, s_small: tuple[float, float] | None = None,
                            s_large: float | None = None) -> DerivativeLimits:
    """Estimate ``g'(0+)`` and the lower/upper limits of ``g'`` at infinity."""
    hi0, lo0 = s_small or DEFAULTS.probe_s_small
    s_large = DEFAULTS.probe_s_large if s_large is None else s_large
    d = g.derivative

    def dense(xs):
        with mpmath.workdps(30):
            return np.array([abs(float(d.evaluate_mp(mpmath.mpf(x)))) for x in xs])

    s0 = hi0 * 0.5 ** np.arange(int(math.floor(math.log2(hi0 / lo0))) + 1)
    zero = _estimate_limit(s0, dense(s0), toward_zero=True, dense=dense)
    s1 = 100.0 * 2.0 ** np.arange(int(math.floor(math.log2(s_large / 100.0))) + 1)
    vals = dense(s1)
    if not np.all(np.isfinite(vals)):
        inf = LimitEstimate(math.inf, math.inf, math.inf, float("nan"))
    else:
        inf = _estimate_limit(s1, vals, toward_zero=False, dense=dense)
    return DerivativeLimits(zero, inf)
