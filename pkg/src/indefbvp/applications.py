"""Radial solutions on an annulus and the periodic Liénard equation.

Radial solutions ``w(r)`` of ``w'' + (N-1)/r w' + nu Q(r) g(w) = 0`` on
``R1 <= r <= R2`` with ``w'(R1) = w'(R2) = 0`` become Neumann solutions of
``u'' + nu a(t) g(u) = 0`` under ``t = h(r) = int_{R1}^r xi^(1-N) dxi``,
with ``a(t) = r(t)^(2(N-1)) Q(r(t))``.

The damped equation ``u'' + h(u) u' + nu a(x) g(u) = 0`` with periodic
conditions is solved by the periodic search using the damped field.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import integrate as sp_integrate

from . import expr as ex
from .certify import (DAMPED_RESULTS, EXISTS, INCONCLUSIVE, NONEXISTENCE, PROVEN, SUPPORTED, Certificate,
                      check_hypotheses)
from .config import DEFAULTS
from .eigen import DIRICHLET, EigenQuery, EigenResult, first_eigenvalue
from .expr import Expr, parse_expr
from .model import Damping, ModelError, Nonlinearity, Piece, ProblemSpec, Weight
from .ode import make_field
from .probes import Verdict
from .shoot import SolutionProfile, find_neumann_solutions, find_periodic_solutions

# ---------------------------------------------------------------------------
# annulus


@dataclass(frozen=True, eq=False)
class AnnulusSpec:
    """Radial Neumann problem on ``R1 <= |x| <= R2`` in dimension ``N``.

    ``Q`` is a list of pieces in the variable ``r`` covering ``[R1, R2]``.
    """

    N: int
    R1: float
    R2: float
    Q: tuple[Piece, ...]
    g: Nonlinearity
    nu: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ModelError(f"dimension N must be an integer >= 2, got {self.N}")
        if not (0 < self.R1 < self.R2 and math.isfinite(self.R2)):
            raise ModelError(f"radii must satisfy 0 < R1 < R2, got {self.R1}, {self.R2}")
        if not self.Q:
            raise ModelError("Q needs at least one piece")
        prev = self.R1
        for i, p in enumerate(self.Q):
            if p.expr.variables() - {"r"}:
                raise ModelError(f"Q piece {i} must be an expression in r")
            if abs(p.lo - prev) > 1e-14 * self.R2 or not p.lo < p.hi:
                raise ModelError(f"Q piece {i} does not continue from r={prev}")
            prev = p.hi
        if abs(prev - self.R2) > 1e-14 * self.R2:
            raise ModelError(f"Q pieces end at {prev}, expected R2={self.R2}")
        if not self.nu > 0:
            raise ModelError("nu must be positive")

    @classmethod
    def from_expr(cls, N: int, R1: float, R2: float, Q, g, nu: float = 1.0) -> AnnulusSpec:
        q = Q if isinstance(Q, Expr) else parse_expr(str(Q), "r")
        g = g if isinstance(g, Nonlinearity) else Nonlinearity.from_text(str(g))
        return cls(int(N), float(R1), float(R2), (Piece(float(R1), float(R2), q),), g, float(nu))

    def Q_value(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        los = [p.lo for p in self.Q[1:]]
        idx = np.searchsorted(los, r, side="right")
        out = np.empty_like(r)
        for j, p in enumerate(self.Q):
            m = idx == j
            if m.any():
                out[m] = p.expr.evaluate(r[m])
        return out

    def to_dict(self) -> dict:
        return {"N": self.N, "R1": self.R1, "R2": self.R2, "nu": self.nu,
                "Q": {"pieces": [{"from": p.lo, "to": p.hi, "expr": str(p.expr)} for p in self.Q]},
                "g": self.g.to_dict()}


@dataclass(eq=False)
class RadialReduction:
    spec: AnnulusSpec
    T: float
    T_quadrature: float
    weight: Weight
    problem: ProblemSpec

    @property
    def N(self) -> int:
        return self.spec.N

    def forward(self, r):
        """``t = h(r)``."""
        N, R1 = self.N, self.spec.R1
        r = np.asarray(r, dtype=float)
        if N == 2:
            return np.log(r / R1)
        return (R1 ** (2 - N) - r ** (2 - N)) / (N - 2)

    def inverse(self, t):
        """``r = h^{-1}(t)``."""
        N, R1 = self.N, self.spec.R1
        t = np.asarray(t, dtype=float)
        if N == 2:
            return R1 * np.exp(t)
        return (R1 ** (2 - N) - (N - 2) * t) ** (1.0 / (2 - N))

    def dforward(self, r):
        return np.asarray(r, dtype=float) ** (1 - self.N)

    def roundtrip_error(self, n: int = 1001) -> float:
        r = np.linspace(self.spec.R1, self.spec.R2, n)
        return float(np.max(np.abs(self.inverse(self.forward(r)) - r) / r))

    def to_dict(self) -> dict:
        return {"annulus": self.spec.to_dict(), "T": self.T, "T_quadrature": self.T_quadrature,
                "reduced": self.problem.to_dict()}


def _radius_expr(N: int, R1: float) -> Expr:
    x = ex.Var("x")
    if N == 2:
        return ex.mul(ex.num(R1), ex.call("exp", x))
    base = ex.sub(ex.num(R1 ** (2 - N)), ex.mul(ex.num(N - 2), x))
    return ex.power(base, ex.num(1.0 / (2 - N)))


def radial_reduce(spec: AnnulusSpec) -> tuple[RadialReduction, ProblemSpec]:
    """Change of variables to a Neumann problem on ``[0, T]``."""
    N, R1, R2 = spec.N, spec.R1, spec.R2
    if N == 2:
        T = math.log(R2 / R1)
    else:
        T = (R1 ** (2 - N) - R2 ** (2 - N)) / (N - 2)
    Tq = sp_integrate.quad(lambda xi: xi ** (1 - N), R1, R2, epsabs=1e-13, epsrel=1e-13)[0]
    r_of_t = _radius_expr(N, R1)
    jac = ex.power(r_of_t, ex.num(2 * (N - 1)))

    def t_of(r):
        return math.log(r / R1) if N == 2 else (R1 ** (2 - N) - r ** (2 - N)) / (N - 2)

    pieces = []
    for i, p in enumerate(spec.Q):
        lo = 0.0 if i == 0 else t_of(p.lo)
        hi = T if i == len(spec.Q) - 1 else t_of(p.hi)
        pieces.append((lo, hi, ex.mul(jac, p.expr.subs("r", r_of_t))))
    # keep consecutive pieces exactly contiguous
    for i in range(1, len(pieces)):
        pieces[i] = (pieces[i - 1][1], pieces[i][1], pieces[i][2])
    w = Weight.piecewise(pieces, T)
    problem = ProblemSpec("neumann", w, spec.g, spec.nu, meta={"annulus": spec.to_dict()})
    red = RadialReduction(spec, T, Tq, w, problem)
    return red, problem


def radial_mass(spec: AnnulusSpec) -> float:
    """``int_{R1}^{R2} r^(N-1) Q(r) dr``, proportional to the integral of ``Q`` over the annulus."""
    total = 0.0
    for p in spec.Q:
        total += sp_integrate.quad(lambda r: r ** (spec.N - 1) * p.expr(r), p.lo, p.hi,
                                   epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return total


@dataclass
class RadialProfile:
    r: np.ndarray
    w: np.ndarray
    wprime: np.ndarray
    residual: float
    neumann_residual: float
    source: SolutionProfile = field(repr=False)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "neumann_residual": self.neumann_residual,
                "min_w": float(self.w.min()), "max_w": float(self.w.max()), "points": int(self.r.size)}

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["r", "w", "wprime"])
            for row in zip(self.r, self.w, self.wprime):
                out.writerow([repr(float(c)) for c in row])
        return path


def radial_backmap(red: RadialReduction, profile: SolutionProfile, n: int = 801) -> RadialProfile:
    """``w(r) = u(h(r))`` with a finite-difference residual of the radial equation."""
    spec = red.spec
    N, R1, R2 = spec.N, spec.R1, spec.R2
    r = np.linspace(R1, R2, n)
    t = np.clip(red.forward(r), 0.0, red.T)
    uv = profile(t)
    w = uv[0]
    wp = uv[1] * red.dforward(r)

    def wprime(rr):
        tt = np.clip(red.forward(rr), 0.0, red.T)
        return profile(tt)[1] * red.dforward(rr)

    # interior check grid for a central difference of w'
    delta = 1e-5 * (R2 - R1)
    rc = np.linspace(R1 + 2 * delta, R2 - 2 * delta, 401)
    wpp = (wprime(rc + delta) - wprime(rc - delta)) / (2 * delta)
    wc = profile(np.clip(red.forward(rc), 0.0, red.T))[0]
    resid = wpp + (N - 1) / rc * wprime(rc) + spec.nu * spec.Q_value(rc) * spec.g.evaluate(wc)
    return RadialProfile(r, w, wp, float(np.max(np.abs(resid))),
                         float(max(abs(wp[0]), abs(wp[-1]))), profile)


def radial_solve(spec: AnnulusSpec, c_range=None, n_seeds: int | None = None):
    """Reduce, solve the Neumann problem and map every solution back to ``r``."""
    red, problem = radial_reduce(spec)
    sols = find_neumann_solutions(problem, c_range, n_seeds)
    return red, sols, [radial_backmap(red, s) for s in sols]


# ---------------------------------------------------------------------------
# Liénard


class UnboundedDampingError(ModelError):
    pass


@dataclass(frozen=True)
class DampingBound:
    value: float
    argmax: float
    s_max: float
    extrapolated: bool = True

    def to_dict(self) -> dict:
        return {"C": self.value, "argmax": self.argmax, "checked_up_to": self.s_max,
                "extrapolated": self.extrapolated}


def damping_bound(h: Damping, s_max: float | None = None) -> DampingBound:
    """``sup |h|`` over ``[0, s_max]``; growth over the last decade means unbounded.

    Boundedness beyond ``s_max`` is an extrapolation and is flagged as such.
    """
    s_max = s_max or DEFAULTS.probe_s_large
    s = np.unique(np.concatenate([np.linspace(0.0, 100.0, 4001), np.geomspace(1e-8, s_max, 4001)]))
    with np.errstate(all="ignore"):
        vals = np.abs(h.expr.evaluate(s, strict=False))
    if not np.all(np.isfinite(vals)):
        bad = float(s[~np.isfinite(vals)][0])
        raise UnboundedDampingError(f"damping is not finite at s={bad:g}")
    last = vals[s >= s_max / 10]
    prev = vals[(s >= s_max / 100) & (s < s_max / 10)]
    if last.max() > 1.5 * max(prev.max(), 1e-300) and last.max() > 1.5 * vals[s <= 100].max():
        raise UnboundedDampingError(f"|h| keeps growing up to s={s_max:g}")
    k = int(np.argmax(vals))
    C = float(vals[k])
    if h.bound is not None and C > h.bound * (1 + 1e-9):
        raise ModelError(f"declared damping bound {h.bound} is exceeded: |h({s[k]:g})| = {C:g}")
    return DampingBound(C, float(s[k]), float(s_max))


def lienard_search(p: ProblemSpec, box=None, max_depth: int | None = None, **kw):
    """Run the periodic search with the damped field; returns the search report."""
    if p.bc != "periodic" or p.damping is None:
        raise ModelError("the Liénard solver needs periodic conditions and a damping term")
    bound = damping_bound(p.damping)
    res = find_periodic_solutions(p, box, max_depth, fld=make_field(p, "lienard"), **kw)
    for s in res.solutions:
        _add_damping_check(p, s)
    res.damping = bound  # type: ignore[attr-defined]
    return res


def lienard_solve(p: ProblemSpec, box=None, max_depth: int | None = None, **kw) -> list[SolutionProfile]:
    return lienard_search(p, box, max_depth, **kw).solutions


def _add_damping_check(p: ProblemSpec, s: SolutionProfile) -> None:
    h = p.damping
    val = s.trajectory.quad(lambda x, u, v: h.evaluate(u) * v)
    vmax = float(np.max(np.abs(s.trajectory.v)))
    hmax = float(np.max(np.abs(h.evaluate(s.trajectory.u))))
    lim = 1e-8 * max(1.0, hmax * vmax * p.T)
    s.validation.checks["damping_integral"] = {"passed": abs(val) <= lim, "value": val, "limit": lim}


@dataclass
class PhiReport:
    x: np.ndarray
    phi: np.ndarray
    runs: list[dict]
    tolerance: float

    @property
    def matches(self) -> bool:
        return all(r["matches"] for r in self.runs)

    def to_dict(self) -> dict:
        return {"matches": self.matches, "tolerance": self.tolerance, "runs": self.runs}


def lienard_phi_check(profile: SolutionProfile, h: Damping | None, weight: Weight, n: int = 4001,
                      slope_tol: float = 1e-7) -> PhiReport:
    """Monotonicity of ``Phi(x) = u'(x) exp(int_0^x h(u))`` against the sign of ``a``.

    ``Phi' = -exp(int h(u)) a(x) g(u)``, so ``Phi`` should not increase where
    ``a >= 0`` and not decrease where ``a <= 0``. The mesh is split into runs
    of constant sign of ``a`` and each run is classified by its difference
    quotients.
    """
    T = weight.T
    xs = np.unique(np.concatenate([np.linspace(0.0, T, n), weight.breakpoints]))
    u, v = profile(xs)
    if h is None or h.is_zero:
        H = np.zeros_like(xs)
    else:
        H = sp_integrate.cumulative_simpson(h.evaluate(u), x=xs, initial=0.0)
    phi = v * np.exp(H)
    slopes = np.diff(phi) / np.diff(xs)
    tol = slope_tol * max(1.0, float(np.max(np.abs(slopes))))
    mids = 0.5 * (xs[:-1] + xs[1:])
    a_mid = weight.evaluate(mids)
    eps = 1e-12 * max(1.0, weight.sup_norm_estimate)
    sign = np.where(a_mid > eps, 1, np.where(a_mid < -eps, -1, 0))
    runs = []
    i = 0
    while i < len(sign):
        j = i
        while j + 1 < len(sign) and sign[j + 1] == sign[i]:
            j += 1
        seg = slopes[i:j + 1]
        nonincreasing = bool(seg.max() <= tol)
        nondecreasing = bool(seg.min() >= -tol)
        if sign[i] > 0:
            ok = nonincreasing
        elif sign[i] < 0:
            ok = nondecreasing
        else:
            ok = nonincreasing and nondecreasing
        runs.append({"from": float(xs[i]), "to": float(xs[j + 1]), "sign_a": int(sign[i]),
                     "nonincreasing": nonincreasing, "nondecreasing": nondecreasing, "matches": ok})
        i = j + 1
    return PhiReport(xs, phi, runs, tol)


def shrink_interval(interval: tuple[float, float], fraction: float | None = None) -> tuple[float, float]:
    """Remove ``fraction |J| / 2`` from each end of ``J``."""
    fraction = DEFAULTS.lienard_shrink if fraction is None else fraction
    lo, hi = interval
    cut = 0.5 * fraction * (hi - lo)
    return (lo + cut, hi - cut)


def drift_eigen_threshold(weight: Weight, interval: tuple[float, float], drift: float,
                          shrink: float | None = None) -> EigenResult:
    """First Dirichlet eigenvalue of ``(e^{Cx} phi')' + lam a e^{-Cx} phi = 0`` on the shrunken interval."""
    J = shrink_interval(interval, 0.0 if shrink is None else shrink)
    return first_eigenvalue(EigenQuery(weight, J, DIRICHLET, DIRICHLET, drift=float(drift)))


def lienard_certificate(p: ProblemSpec, shrink: float | None = None) -> Certificate:
    """Certificate for the damped periodic problem.

    Existence is routed only through the damped superlinear result; the
    drift-weighted eigenvalues on the shrunken positivity intervals are
    diagnostics. The small-``nu`` bound does not carry over to the damped
    equation and is dropped.
    """
    if p.damping is None or p.bc != "periodic":
        raise ModelError("Liénard certificate needs periodic conditions and a damping term")
    cert = check_hypotheses(p)
    V = dict(cert.verdicts)
    warnings_ = list(cert.warnings)
    try:
        bound = damping_bound(p.damping)
        V["damping_bounded"] = Verdict(True, "probe" if p.damping.bound is None else "declared",
                                       f"sup |h| = {bound.value:.6g} on [0, {bound.s_max:g}]")
        warnings_.append("boundedness of h beyond the probe range is extrapolated")
    except UnboundedDampingError as exc:
        bound = None
        V["damping_bounded"] = Verdict(False, "probe", str(exc))
    shrink = DEFAULTS.lienard_shrink if shrink is None else shrink
    drift_rows = []
    if bound is not None:
        for iv in cert.intervals:
            J = shrink_interval(iv, shrink)
            try:
                lam = drift_eigen_threshold(p.weight, J, bound.value).value
            except Exception as exc:  # diagnostics only
                lam = None
                warnings_.append(f"drift eigenvalue on {J}: {exc}")
            drift_rows.append({"interval": list(J), "drift": bound.value, "lambda": lam})
    nonexistence = [r for r in cert.nonexistence if r != "small-nu-bounded-derivative"]
    routing = [r for r, prem in DAMPED_RESULTS.items() if all(V[k].value is True for k in prem)]
    if routing and nonexistence:
        conclusion, strength = INCONCLUSIVE, None
    elif routing:
        strong = all(V[k].source in ("declared", "analytic", "computed") for r in routing for k in DAMPED_RESULTS[r])
        conclusion, strength = EXISTS, PROVEN if strong else SUPPORTED
    elif nonexistence:
        conclusion, strength = NONEXISTENCE, cert.strength if cert.conclusion == NONEXISTENCE else PROVEN
    else:
        conclusion, strength = INCONCLUSIVE, None
    details = dict(cert.details)
    details["damping"] = bound.to_dict() if bound else None
    details["drift_eigenvalues"] = drift_rows
    details["shrink"] = shrink
    return replace(cert, conclusion=conclusion, strength=strength, verdicts=V, routing=routing,
                   large_nu_routing=[], nonexistence=nonexistence, nu_star=None, warnings=warnings_,
                   details=details)
