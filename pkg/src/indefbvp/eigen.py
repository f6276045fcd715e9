"""First eigenvalue of ``(p phi')' + lam p^-1 a phi = 0`` on a subinterval.

``p(x) = exp(C x)``; ``C = 0`` gives the plain problem ``phi'' + lam a phi = 0``.
The eigenvalue is located by shooting the Prüfer angle: with
``phi = rho sin(theta)`` and ``p phi' = rho cos(theta)`` the angle obeys
``theta' = cos^2(theta) / p + lam a sin^2(theta) / p``, is non-decreasing in
``lam`` when ``a >= 0``, and the first eigenvalue is where the terminal angle
first reaches the target fixed by the boundary conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp

from .config import DEFAULTS
from .model import ModelError, ProblemSpec, SignStructure, Weight, periodic_rotation, sign_structure

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

_START = {DIRICHLET: 0.0, NEUMANN: 0.5 * math.pi}
_TARGET = {
    (DIRICHLET, DIRICHLET): math.pi,
    (NEUMANN, DIRICHLET): math.pi,
    (DIRICHLET, NEUMANN): 0.5 * math.pi,
    (NEUMANN, NEUMANN): 1.5 * math.pi,
}


class EigenError(ValueError):
    pass


class CeilingExceeded(EigenError):
    def __init__(self, ceiling: float, angle: float, target: float):
        super().__init__(f"first eigenvalue exceeds the search ceiling {ceiling:g} "
                         f"(terminal angle {angle:.6g} < target {target:.6g})")
        self.ceiling = ceiling


@dataclass(frozen=True)
class EigenQuery:
    weight: Weight
    interval: tuple[float, float]
    left_bc: str = DIRICHLET
    right_bc: str = DIRICHLET
    drift: float = 0.0
    ceiling: float = DEFAULTS.eig_ceiling

    def __post_init__(self):
        x1, x2 = self.interval
        if not (0 <= x1 < x2 <= self.weight.T * (1 + 1e-14)):
            raise EigenError(f"interval {self.interval} must lie inside [0, {self.weight.T}]")
        for bc in (self.left_bc, self.right_bc):
            if bc not in _START:
                raise EigenError(f"unknown boundary condition {bc!r}")
        if self.drift < 0:
            raise EigenError("drift must be nonnegative")

    @property
    def start_angle(self) -> float:
        return _START[self.left_bc]

    @property
    def target_angle(self) -> float:
        return _TARGET[(self.left_bc, self.right_bc)]

    def segments(self) -> list[tuple[float, float, object]]:
        x1, x2 = self.interval
        out = []
        for p in self.weight.pieces:
            lo, hi = max(p.lo, x1), min(p.hi, x2)
            if hi > lo:
                out.append((lo, hi, p.expr._scalar_fn))
        return out

    def check_weight(self) -> None:
        x1, x2 = self.interval
        tol = 1e-9 * (1 + self.weight.sup_norm_estimate)
        for lo, hi, _ in self.segments():
            piece = self.weight.pieces[self.weight.piece_index(0.5 * (lo + hi))]
            vals = piece.expr.evaluate(np.linspace(lo, hi, 257))
            if vals.min() < -tol:
                raise EigenError(f"weight is negative on [{lo}, {hi}] inside the query interval")
        if self.weight.integral(x1, x2) <= 0:
            raise EigenError("weight has no positive mass on the query interval")


@dataclass(frozen=True)
class EigenResult:
    value: float
    bracket: tuple[float, float]
    x: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    dphi: np.ndarray = field(repr=False)
    angle_lo: float = float("nan")
    angle_hi: float = float("nan")
    target: float = float("nan")
    residual: float = float("nan")
    endpoint_error: float = float("nan")
    query: EigenQuery | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        q = self.query
        return {"lambda": self.value, "bracket": list(self.bracket),
                "interval": list(q.interval) if q else None,
                "bc": [q.left_bc, q.right_bc] if q else None, "drift": q.drift if q else None,
                "terminal_angle": {"below": self.angle_lo, "above": self.angle_hi, "target": self.target},
                "residual": self.residual, "endpoint_error": self.endpoint_error}


def pruefer_terminal_angle(q: EigenQuery, lam: float) -> float:
    """Prüfer angle at the right end of the query interval for eigenvalue ``lam``."""
    if lam < 0:
        raise EigenError("lambda must be nonnegative")
    C = q.drift
    theta = np.array([q.start_angle])
    rtol = DEFAULTS.eig_ode_tol
    for lo, hi, a_fn in q.segments():
        def rhs(x, th, a_fn=a_fn):
            s, c = math.sin(th[0]), math.cos(th[0])
            e = math.exp(-C * x) if C else 1.0
            return [c * c * e + lam * a_fn(x) * e * s * s]

        res = solve_ivp(rhs, (lo, hi), theta, method="DOP853", rtol=rtol, atol=rtol)
        if res.status != 0:
            raise EigenError(f"angle integration failed on [{lo}, {hi}]: {res.message}")
        theta = res.y[:, -1]
    return float(theta[0])


def _eigenfunction(q: EigenQuery, lam: float, n: int = 401):
    C = q.drift
    y = np.array([0.0, 1.0]) if q.left_bc == DIRICHLET else np.array([1.0, 0.0])
    sols = []
    rtol = DEFAULTS.eig_ode_tol
    for lo, hi, a_fn in q.segments():
        def rhs(x, z, a_fn=a_fn):
            return [z[1], -C * z[1] - lam * a_fn(x) * math.exp(-2 * C * x) * z[0]]

        res = solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=rtol, atol=rtol * 1e-2, dense_output=True)
        sols.append((lo, hi, res.sol, rhs))
        y = res.y[:, -1]
    x1, x2 = q.interval
    xs = np.linspace(x1, x2, n)
    vals = np.empty((2, n))
    for j, xv in enumerate(xs):
        for lo, hi, sol, _ in sols:
            if lo <= xv <= hi:
                vals[:, j] = sol(xv)
                break
    k = int(np.argmax(np.abs(vals[0])))
    scale = vals[0, k]
    vals /= scale
    # residual of phi'' + C phi' + lam a e^{-2Cx} phi inside each segment
    worst = 0.0
    for lo, hi, sol, rhs in sols:
        h = 1e-5 * (hi - lo)
        for xv in np.linspace(lo, hi, 41)[1:-1]:
            z = sol(xv) / scale
            d2 = (sol(xv + h)[1] - sol(xv - h)[1]) / (2 * h) / scale
            worst = max(worst, abs(d2 - rhs(xv, z)[1]))
    end = vals[0, -1] if q.right_bc == DIRICHLET else vals[1, -1]
    return xs, vals[0], vals[1], worst, abs(float(end))


def first_eigenvalue(q: EigenQuery, with_profile: bool = True) -> EigenResult:
    """First eigenvalue for the query's boundary conditions.

    The upper end of the search starts at 1 and doubles until the terminal
    angle passes the target; :class:`CeilingExceeded` is raised when the
    ceiling is reached first. The root is then refined by Brent's method and
    the final bracket is checked on both sides.
    """
    q.check_weight()
    target = q.target_angle
    if q.left_bc == NEUMANN and q.right_bc == NEUMANN:
        raise EigenError("the Neumann/Neumann first eigenvalue is 0; not supported")
    lo, hi = 0.0, 1.0
    ang_hi = pruefer_terminal_angle(q, hi)
    while ang_hi <= target:
        lo = hi
        if hi >= q.ceiling:
            raise CeilingExceeded(q.ceiling, ang_hi, target)
        hi = min(2 * hi, q.ceiling)
        ang_hi = pruefer_terminal_angle(q, hi)
    rtol = DEFAULTS.eig_rtol
    lam = optimize.brentq(lambda L: pruefer_terminal_angle(q, L) - target, lo, hi,
                          xtol=0.25 * rtol, rtol=0.25 * rtol)
    half = 0.5 * rtol * (1 + lam)
    b_lo, b_hi = max(lam - half, 0.0), lam + half
    a_lo, a_hi = pruefer_terminal_angle(q, b_lo), pruefer_terminal_angle(q, b_hi)
    if not (a_lo <= target <= a_hi):
        raise EigenError(f"bracket check failed: angles {a_lo!r}, {a_hi!r} around target {target!r}")
    if with_profile:
        xs, phi, dphi, resid, end_err = _eigenfunction(q, lam)
    else:
        xs = phi = dphi = np.empty(0)
        resid = end_err = float("nan")
    return EigenResult(lam, (b_lo, b_hi), xs, phi, dphi, a_lo, a_hi, target, resid, end_err, q)


@dataclass(frozen=True)
class IntervalThreshold:
    interval: tuple[float, float]
    left_bc: str
    right_bc: str
    value: float  # inf when the ceiling was exceeded
    dirichlet_value: float
    refined: bool

    def to_dict(self) -> dict:
        def num(v):
            return "inf" if math.isinf(v) else v
        return {"interval": list(self.interval), "bc": [self.left_bc, self.right_bc],
                "lambda": num(self.value), "lambda_dirichlet": num(self.dirichlet_value),
                "refined": self.refined}


@dataclass(frozen=True)
class Thresholds:
    intervals: tuple[IntervalThreshold, ...]
    rotation: float = 0.0

    @property
    def max(self) -> float:
        return max(t.value for t in self.intervals)

    @property
    def min(self) -> float:
        return min(t.value for t in self.intervals)

    def to_dict(self) -> dict:
        def num(v):
            return "inf" if math.isinf(v) else v
        return {"per_interval": [t.to_dict() for t in self.intervals], "max": num(self.max),
                "min": num(self.min), "rotation": self.rotation}


def _value(q: EigenQuery) -> float:
    try:
        return first_eigenvalue(q, with_profile=False).value
    except CeilingExceeded:
        return math.inf


def lambda_thresholds(p: ProblemSpec, ss: SignStructure | None = None, drift: float = 0.0) -> Thresholds:
    """First eigenvalue on every positivity interval of the weight.

    Interior intervals use Dirichlet conditions at both ends. With Neumann
    conditions an interval touching ``x = 0`` (``x = T``) takes a Neumann
    condition at that end instead. With periodic conditions the weight is
    first rotated so that no interval touches the seam.
    """
    w = p.weight
    ss = ss or sign_structure(w)
    if not ss.a1 and not ss.intervals:
        raise ModelError("weight has no positivity interval")
    offset = 0.0
    if p.bc == "periodic":
        offset = periodic_rotation(w, ss)
        if offset:
            w = w.shifted(offset)
            ss = sign_structure(w)
    out = []
    for lo, hi in ss.intervals:
        left = NEUMANN if p.bc == "neumann" and lo <= 0.0 else DIRICHLET
        right = NEUMANN if p.bc == "neumann" and hi >= w.T else DIRICHLET
        if left == NEUMANN and right == NEUMANN:
            # the weight is nonnegative on all of [0, T]; nothing to refine
            left = right = DIRICHLET
        dir_val = _value(EigenQuery(w, (lo, hi), DIRICHLET, DIRICHLET, drift))
        refined = (left, right) != (DIRICHLET, DIRICHLET)
        val = _value(EigenQuery(w, (lo, hi), left, right, drift)) if refined else dir_val
        out.append(IntervalThreshold((lo, hi), left, right, val, dir_val, refined or bool(offset)))
    return Thresholds(tuple(out), offset)
