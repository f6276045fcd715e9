"""Weights, nonlinearities and problem specifications.

A :class:`Weight` is a piecewise closed-form coefficient on ``[0, T]``; the
positivity structure, mean and L1 norm are computed here. A
:class:`Nonlinearity` wraps ``g(s)`` together with whatever the user declares
about its limits. :class:`ProblemSpec` bundles both with the boundary
condition, the scale ``nu`` and an optional Liénard damping term.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .config import DEFAULTS
from .expr import Expr, Num, parse_expr, DomainError
from . import expr as ex


class ModelError(ValueError):
    pass


class QuadratureError(ArithmeticError):
    pass


class RootIsolationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    expr: Expr


def _as_expr(e, var) -> Expr:
    return e if isinstance(e, Expr) else parse_expr(str(e), var)


@dataclass(frozen=True, eq=False)
class Weight:
    """Piecewise closed-form weight ``a(x)`` on ``[0, T]``.

    Pieces are closed-form expressions in ``x`` over consecutive intervals.
    At an interior breakpoint the value is taken from the piece on the right.
    """

    T: float
    pieces: tuple[Piece, ...]

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ModelError(f"horizon T must be positive, got {self.T}")
        if not self.pieces:
            raise ModelError("weight needs at least one piece")
        prev = 0.0
        for i, p in enumerate(self.pieces):
            if not p.lo < p.hi:
                raise ModelError(f"piece {i} is empty: [{p.lo}, {p.hi}]")
            if p.lo < prev - 1e-15 * self.T:
                raise ModelError(f"piece {i} overlaps the previous piece")
            if abs(p.lo - prev) > 1e-15 * self.T:
                raise ModelError(f"gap before piece {i} at x={prev}")
            if p.expr.variables() - {"x"}:
                raise ModelError(f"piece {i} must be an expression in x")
            prev = p.hi
        if abs(prev - self.T) > 1e-15 * self.T:
            raise ModelError(f"pieces end at {prev}, expected T={self.T}")

    # -- construction -------------------------------------------------------
    @classmethod
    def from_expr(cls, e, T: float) -> Weight:
        return cls(float(T), (Piece(0.0, float(T), _as_expr(e, "x")),))

    @classmethod
    def piecewise(cls, pieces: Sequence[tuple], T: float | None = None) -> Weight:
        T = float(pieces[-1][1] if T is None else T)
        return cls(T, tuple(Piece(float(lo), float(hi), _as_expr(e, "x")) for lo, hi, e in pieces))

    @classmethod
    def indicator(cls, intervals: Sequence[tuple[float, float]], T: float) -> Weight:
        """1 on each interval, 0 elsewhere."""
        pieces, x = [], 0.0
        for lo, hi in sorted(intervals):
            if lo > x:
                pieces.append((x, lo, Num(0.0)))
            pieces.append((max(lo, x), hi, Num(1.0)))
            x = hi
        if x < T:
            pieces.append((x, T, Num(0.0)))
        return cls.piecewise(pieces, T)

    # -- basic queries ------------------------------------------------------
    @cached_property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(p.lo for p in self.pieces[1:])

    def piece_index(self, x: float) -> int:
        return min(bisect.bisect_right(self.breakpoints, x), len(self.pieces) - 1)

    def __call__(self, x: float) -> float:
        return self.pieces[self.piece_index(x)].expr(x)

    def evaluate(self, xs, strict: bool = True) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.minimum(np.searchsorted(self.breakpoints, xs, side="right"), len(self.pieces) - 1)
        out = np.empty_like(xs)
        for j, p in enumerate(self.pieces):
            m = idx == j
            if m.any():
                out[m] = p.expr.evaluate(xs[m], strict=strict)
        return out

    def map_exprs(self, fn) -> Weight:
        return Weight(self.T, tuple(Piece(p.lo, p.hi, fn(p.expr)) for p in self.pieces))

    def scaled(self, c: float) -> Weight:
        return self.map_exprs(lambda e: ex.mul(ex.num(c), e))

    def positive_part(self) -> Weight:
        return self.map_exprs(lambda e: ex.call("max", e, ex.num(0)))

    def negative_part(self) -> Weight:
        return self.map_exprs(lambda e: ex.call("max", ex.neg(e), ex.num(0)))

    def shifted(self, offset: float) -> Weight:
        """Periodic shift: the returned weight is ``x -> a((x + offset) mod T)``."""
        T = self.T
        offset = offset % T
        if offset == 0:
            return self
        pieces = []
        for lo_shift, hi_shift, delta in ((0.0, T - offset, offset), (T - offset, T, offset - T)):
            for p in self.pieces:
                lo = max(p.lo - delta, lo_shift)
                hi = min(p.hi - delta, hi_shift)
                if hi - lo > 1e-14 * T:
                    moved = p.expr.subs("x", ex.add(ex.Var("x"), ex.num(delta)))
                    pieces.append((lo, hi, moved))
        pieces.sort(key=lambda q: q[0])
        # snap tiny rounding gaps
        fixed, x = [], 0.0
        for lo, hi, e in pieces:
            fixed.append((x, hi, e))
            x = hi
        fixed[-1] = (fixed[-1][0], T, fixed[-1][2])
        return Weight.piecewise(fixed, T)

    @cached_property
    def sup_norm_estimate(self) -> float:
        xs = np.concatenate([np.linspace(p.lo, p.hi, 257) for p in self.pieces])
        vals = np.concatenate([p.expr.evaluate(np.linspace(p.lo, p.hi, 257), strict=False)
                               for p in self.pieces])
        del xs
        return float(np.nanmax(np.abs(vals)))

    @cached_property
    def _moments(self) -> tuple[float, float]:
        return mean_and_norm(self)

    @property
    def mean(self) -> float:
        return self._moments[0]

    @property
    def l1_norm(self) -> float:
        return self._moments[1]

    def integral(self, lo: float = 0.0, hi: float | None = None) -> float:
        hi = self.T if hi is None else hi
        return _integrate_weight(self, lo, hi, absolute=False)

    def to_dict(self) -> dict:
        return {"T": self.T, "pieces": [{"from": p.lo, "to": p.hi, "expr": str(p.expr)}
                                        for p in self.pieces]}


# ---------------------------------------------------------------------------
# quadrature and sign structure


def _piece_sign_changes(e: Expr, lo: float, hi: float, n: int) -> list[float]:
    xs = np.linspace(lo, hi, n + 1)
    vals = e.evaluate(xs)
    roots = []
    for i in range(n):
        a, b = vals[i], vals[i + 1]
        if a == 0.0 and 0 < i:
            roots.append(xs[i])
        elif a * b < 0:
            roots.append(optimize.brentq(e, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15))
    return roots


def _quad(f, lo, hi, tol):
    val, err = integrate.quad(f, lo, hi, epsabs=tol * 1e-3, epsrel=1e-13, limit=400)
    if not err <= tol:
        raise QuadratureError(f"quadrature on [{lo}, {hi}] did not converge (err {err:.2e})")
    return val


def _integrate_weight(w: Weight, lo: float, hi: float, absolute: bool, tol: float | None = None) -> float:
    tol = DEFAULTS.quad_abs if tol is None else tol
    total = 0.0
    for p in w.pieces:
        a, b = max(p.lo, lo), min(p.hi, hi)
        if b <= a:
            continue
        cuts = [a, *_piece_sign_changes(p.expr, a, b, 64), b] if absolute else [a, b]
        for x0, x1 in zip(cuts[:-1], cuts[1:]):
            if x1 > x0:
                v = _quad(p.expr, x0, x1, tol)
                total += abs(v) if absolute else v
    return total


def mean_and_norm(w: Weight, tol: float | None = None) -> tuple[float, float]:
    """Mean value ``(1/T) int a`` and L1 norm of the weight.

    Quadrature is split at breakpoints and, for the norm, at sign changes, so
    that each sub-integral has a smooth, sign-definite integrand.
    """
    tol = DEFAULTS.quad_abs if tol is None else tol
    norm = _integrate_weight(w, 0.0, w.T, absolute=True, tol=tol)
    total = _integrate_weight(w, 0.0, w.T, absolute=False, tol=tol * (1 + norm))
    return total / w.T, norm


@dataclass(frozen=True)
class SignStructure:
    intervals: tuple[tuple[float, float], ...]
    integrals: tuple[float, ...]
    complement_nonpositive: bool
    touches_left: bool
    touches_right: bool
    sign_tolerance: float
    negative_intervals: tuple[tuple[float, float], ...] = ()
    T: float = float("nan")

    @property
    def m(self) -> int:
        return len(self.intervals)

    @property
    def a1(self) -> bool:
        return self.complement_nonpositive and self.m >= 1


def _classify(vals: np.ndarray, tol: float) -> np.ndarray:
    return np.where(vals > tol, 1, np.where(vals < -tol, -1, 0))


def _locate_transition(e: Expr, x0: float, x1: float, c0: int, tol: float) -> float:
    """Bisect for the point where the class of ``e`` stops being ``c0``."""
    for _ in range(200):
        mid = 0.5 * (x0 + x1)
        if mid in (x0, x1):
            break
        if _classify(np.array([e(mid)]), tol)[0] == c0:
            x0 = mid
        else:
            x1 = mid
    return 0.5 * (x0 + x1)


def _elementary_intervals(w: Weight, tol: float, n: int) -> list[tuple[float, float, int]]:
    out: list[tuple[float, float, int]] = []
    for p in w.pieces:
        xs = np.linspace(p.lo, p.hi, n + 1)
        cls = _classify(p.expr.evaluate(xs), tol)
        changes = np.count_nonzero(cls[1:] != cls[:-1])
        if changes > n // 4:
            raise RootIsolationError(
                f"{changes} sign changes among {n} samples on [{p.lo}, {p.hi}]; "
                "increase the sample count or split the piece")
        start, label = p.lo, int(cls[0])
        for i in range(n):
            if cls[i + 1] != cls[i]:
                if cls[i] * cls[i + 1] < 0:
                    xb = optimize.brentq(p.expr, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15)
                else:
                    xb = _locate_transition(p.expr, xs[i], xs[i + 1], int(cls[i]), tol)
                if xb > start:
                    out.append((start, xb, label))
                start, label = xb, int(cls[i + 1])
        out.append((start, p.hi, label))
    # merge neighbours with equal labels
    merged: list[tuple[float, float, int]] = []
    for lo, hi, lab in out:
        if merged and merged[-1][2] == lab:
            merged[-1] = (merged[-1][0], hi, lab)
        else:
            merged.append((lo, hi, lab))
    return _absorb_thin_zero_strips(w, merged)


def _absorb_thin_zero_strips(w: Weight, elem):
    # a transversal crossing shows up as a zero strip of width ~ tol/|a'|;
    # replace it by the actual root so interval ends are exact
    thin = 1e-6 * w.T
    out = list(elem)
    i = 0
    while i < len(out):
        lo, hi, lab = out[i]
        if lab != 0 or hi - lo > thin or len(out) == 1:
            i += 1
            continue
        left = out[i - 1] if i > 0 else None
        right = out[i + 1] if i + 1 < len(out) else None
        if left and right and left[2] * right[2] < 0:
            fa, fb = w(lo), w(hi)
            x = optimize.brentq(w, lo, hi, xtol=1e-15, rtol=1e-15) if fa * fb < 0 else 0.5 * (lo + hi)
            out[i - 1] = (left[0], x, left[2])
            out[i + 1] = (x, right[1], right[2])
            del out[i]
        elif left is None and right is not None:
            out[i + 1] = (lo, right[1], right[2])
            del out[i]
        elif right is None and left is not None:
            out[i - 1] = (left[0], hi, left[2])
            del out[i]
        else:
            i += 1
    return out


def _max_on(w: Weight, lo: float, hi: float) -> float:
    best = -math.inf
    for p in w.pieces:
        a, b = max(p.lo, lo), min(p.hi, hi)
        if b <= a:
            continue
        xs = np.linspace(a, b, 65)
        vals = p.expr.evaluate(xs)
        best = max(best, float(vals.max()))
        k = int(np.argmax(vals))
        res = optimize.minimize_scalar(lambda x: -p.expr(x), bounds=(xs[max(k - 1, 0)], xs[min(k + 1, 64)]),
                                       method="bounded", options={"xatol": 1e-12 * (b - a)})
        best = max(best, -float(res.fun))
    return best


def sign_structure(w: Weight, sign_tolerance: float | None = None,
                   samples: int | None = None) -> SignStructure:
    """Maximal closed intervals where ``a >= 0`` with positive integral.

    Components of ``{a >= -tol}`` are collected from a sampled classification
    with bisected class boundaries; those whose integral is positive are kept.
    The complement is then checked for ``a <= tol`` by local maximisation.
    """
    tol = 1e-9 * (1 + w.sup_norm_estimate) if sign_tolerance is None else sign_tolerance
    n = samples or DEFAULTS.sign_samples
    for attempt in range(4):
        elem = _elementary_intervals(w, tol, n)
        comps: list[list[tuple[float, float, int]]] = []
        for item in elem:
            if item[2] >= 0 and comps and comps[-1][-1][2] >= 0 and comps[-1][-1][1] == item[0]:
                comps[-1].append(item)
            elif item[2] >= 0:
                comps.append([item])
        intervals, integrals = [], []
        for comp in comps:
            if not any(lab == 1 for _, _, lab in comp):
                continue
            lo, hi = comp[0][0], comp[-1][1]
            val = w.integral(lo, hi)
            if val > 0:
                intervals.append((lo, hi))
                integrals.append(val)
        negatives = [(lo, hi) for lo, hi, lab in elem if lab < 0]
        complement_ok = all(_max_on(w, lo, hi) <= tol for lo, hi in negatives)
        if complement_ok:
            break
        n *= 2
    else:
        raise RootIsolationError("complement still has positive values after refinement; "
                                 "split the weight into more pieces")
    T = w.T
    return SignStructure(
        intervals=tuple((float(a), float(b)) for a, b in intervals),
        integrals=tuple(integrals),
        complement_nonpositive=complement_ok,
        touches_left=bool(intervals) and intervals[0][0] <= 0.0,
        touches_right=bool(intervals) and intervals[-1][1] >= T,
        sign_tolerance=tol,
        negative_intervals=tuple((float(a), float(b)) for a, b in negatives),
        T=float(T),
    )


# ---------------------------------------------------------------------------
# nonlinearity and problem


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """``g(s)`` on ``[0, inf)`` plus optional declarations about its limits.

    ``g(0)`` is taken to be 0; the expression itself is only evaluated for
    ``s > 0``. Negative arguments raise :class:`DomainError`.
    """

    expr: Expr
    declared_zero_limit: float | None = None
    declared_inf_liminf: float | None = None
    declared_inf_limsup: float | None = None
    smooth_at_zero: bool | None = None
    regular_oscillation: bool | None = None
    derivative_bound: float | None = None

    def __post_init__(self):
        if self.expr.variables() - {"s"}:
            raise ModelError("g must be an expression in s")

    @classmethod
    def from_text(cls, text: str, **decl) -> Nonlinearity:
        return cls(parse_expr(text, "s"), **decl)

    def __call__(self, s: float) -> float:
        if s > 0:
            return self.expr(s)
        if s == 0:
            return 0.0
        raise DomainError(f"g is defined on s >= 0, got {s}")

    def evaluate(self, s, strict: bool = True) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if strict and np.any(s < 0):
            raise DomainError("g is defined on s >= 0")
        out = np.zeros_like(s)
        m = s > 0
        if m.any():
            out[m] = self.expr.evaluate(s[m], strict=strict)
        out[s < 0] = np.nan
        return out

    @cached_property
    def derivative(self) -> Expr:
        return self.expr.diff("s")

    def deriv(self, s) -> np.ndarray:
        return self.derivative.evaluate(np.asarray(s, dtype=float))

    @cached_property
    def power_law(self) -> tuple[float, float] | None:
        return ex.as_power_law(self.expr, "s")

    def to_dict(self) -> dict:
        out = {"expr": str(self.expr)}
        for key, attr in (("zero_limit", "declared_zero_limit"), ("inf_liminf", "declared_inf_liminf"),
                          ("inf_limsup", "declared_inf_limsup"), ("smooth_at_zero", "smooth_at_zero"),
                          ("regular_oscillation", "regular_oscillation"),
                          ("derivative_bound", "derivative_bound")):
            val = getattr(self, attr)
            if val is not None:
                out[key] = val if not (isinstance(val, float) and math.isinf(val)) else (
                    "inf" if val > 0 else "-inf")
        return out


@dataclass(frozen=True, eq=False)
class Damping:
    """Bounded Liénard damping ``h(s)`` with its declared bound."""

    expr: Expr
    bound: float | None = None

    def __call__(self, s: float) -> float:
        return self.expr(s)

    def evaluate(self, s, strict: bool = True):
        return self.expr.evaluate(s, strict=strict)

    @property
    def is_zero(self) -> bool:
        return isinstance(self.expr, Num) and self.expr.value == 0.0


BCS = ("neumann", "periodic")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    bc: str
    weight: Weight
    g: Nonlinearity
    nu: float = 1.0
    damping: Damping | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bc not in BCS:
            raise ModelError(f"bc must be one of {BCS}, got {self.bc!r}")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ModelError(f"nu must be positive, got {self.nu}")
        if self.damping is not None and self.bc != "periodic":
            raise ModelError("damping is only supported with periodic boundary conditions")

    @property
    def T(self) -> float:
        return self.weight.T

    def with_nu(self, nu: float) -> ProblemSpec:
        return ProblemSpec(self.bc, self.weight, self.g, nu, self.damping, dict(self.meta))

    def with_weight(self, weight: Weight) -> ProblemSpec:
        return ProblemSpec(self.bc, weight, self.g, self.nu, self.damping, dict(self.meta))

    def to_dict(self) -> dict:
        out = {"bc": self.bc, "T": self.T, "nu": self.nu,
               "weight": {"pieces": self.weight.to_dict()["pieces"]},
               "g": self.g.to_dict()}
        if self.damping is not None:
            out["damping"] = {"expr": str(self.damping.expr)}
            if self.damping.bound is not None:
                out["damping"]["bound"] = self.damping.bound
        return out


def periodic_rotation(w: Weight, ss: SignStructure | None = None) -> float:
    """Offset that moves a negative stretch of ``w`` onto the seam ``0 ~ T``.

    Returns 0 when no positivity interval touches an endpoint. Otherwise the
    offset is the midpoint of the longest interval where ``w < 0``, so that
    ``x -> w((x + offset) mod T)`` is negative near both ends.
    """
    ss = ss or sign_structure(w)
    if not (ss.touches_left or ss.touches_right):
        return 0.0
    if not ss.negative_intervals:
        raise ModelError("weight has no negative stretch; no rotation puts the seam where it is negative")
    lo, hi = max(ss.negative_intervals, key=lambda iv: iv[1] - iv[0])
    return 0.5 * (lo + hi)
