"""Positive solutions by shooting.

Neumann problems are one-parameter searches in the initial height ``c``
(with ``u'(0) = 0``). Periodic problems search the plane of initial data
``(c, d)`` for zeros of the displacement ``(u(T) - c, u'(T) - d)``: cells
with nonzero winding are located first and then polished by damped Newton.
All searches integrate the extended field, so trajectories may dip below
zero; only strictly positive profiles are reported as solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import degree as deg
from .config import DEFAULTS, Tolerances
from .expr import DomainError
from .model import ProblemSpec, Weight
from .ode import FieldSpec, Trajectory, escape_bound, integrate, make_field

TIGHT = Tolerances(abs=1e-12, rel=1e-12)

NO_SOLUTION = "NoSolution"
SOLUTIONS = "Solutions"
BLOWUP = "BlowUp"
UNDETERMINED = "Undetermined"


class ConsistencyError(AssertionError):
    """A sweep found a positive solution where a proven bound forbids one."""


# ---------------------------------------------------------------------------
# profiles and validation


@dataclass
class ValidationReport:
    checks: dict[str, dict]

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values() if c["passed"] is not None)

    def __getitem__(self, key) -> dict:
        return self.checks[key]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


@dataclass(eq=False)
class SolutionProfile:
    trajectory: Trajectory
    bc: str
    initial: tuple[float, float]
    bc_residual: float
    min_u: float
    max_u: float
    residual: float
    validation: ValidationReport | None = None
    winding: int | None = None
    located_box: tuple | None = None
    meta: dict = field(default_factory=dict)

    @property
    def norm_inf(self) -> float:
        return max(abs(self.min_u), abs(self.max_u))

    def __call__(self, x):
        return self.trajectory(x)

    def sample(self, n: int = 401):
        return self.trajectory.sample(n)

    def to_dict(self) -> dict:
        out = {"bc": self.bc, "initial": {"u": self.initial[0], "uprime": self.initial[1]},
               "bc_residual": self.bc_residual, "min_u": self.min_u, "max_u": self.max_u,
               "norm_inf": self.norm_inf, "residual": self.residual,
               "termination": self.trajectory.termination.to_dict()}
        if self.validation is not None:
            out["validation"] = self.validation.to_dict()
        if self.winding is not None:
            out["winding"] = self.winding
        if self.located_box is not None:
            out["located_box"] = list(self.located_box)
        out.update(self.meta)
        return out


def _bc_residual(bc: str, traj: Trajectory) -> float:
    u0, v0 = traj.y[:, 0]
    uT, vT = traj.end
    if bc == "neumann":
        return max(abs(v0), abs(vT))
    return max(abs(uT - u0), abs(vT - v0))


def make_profile(p: ProblemSpec, c: float, d: float = 0.0, fld: FieldSpec | None = None,
                 tol: Tolerances | None = None) -> SolutionProfile:
    """Integrate ``(c, d)`` at profile tolerances and collect diagnostics."""
    fld = fld or make_field(p)
    c, d = float(c), float(d)
    traj = integrate(fld, 0.0, (c, d), p.T, tol, profile=True)
    if not traj.completed:
        lo, hi = traj.extrema()
        return SolutionProfile(traj, p.bc, (c, d), math.inf, lo, hi, math.inf)
    lo, hi = traj.extrema()
    sp = SolutionProfile(traj, p.bc, (c, d), _bc_residual(p.bc, traj), lo, hi, traj.residual())
    sp.validation = validate_solution(p, sp)
    return sp


_INCREASING_CACHE: dict[int, bool | None] = {}


def _g_increasing(p: ProblemSpec) -> bool | None:
    key = id(p.g)
    if key not in _INCREASING_CACHE:
        power = p.g.power_law
        if power is not None:
            _INCREASING_CACHE[key] = power[0] > 0 and power[1] > 0
        else:
            from .probes import probe_increasing
            _INCREASING_CACHE[key] = probe_increasing(p.g).value
    return _INCREASING_CACHE[key]


def validate_solution(p: ProblemSpec, s: SolutionProfile, tol: Tolerances | None = None) -> ValidationReport:
    """Check positivity, boundary conditions, the equation and the integral identities.

    (iv) is the balance ``int (theta nu a g(u) + alpha v) = 0`` obtained by
    integrating the equation over the interval; (v), checked when ``g`` is
    increasing, follows from dividing the equation by ``g(u)`` and
    integrating: ``int g'(u) (u'/g(u))^2 = -nu int a``.
    """
    tol = tol or DEFAULTS.tol
    traj, fld = s.trajectory, s.trajectory.field
    nu, w, g = p.nu, p.weight, p.g
    checks: dict[str, dict] = {}

    def put(name, passed, value, limit):
        checks[name] = {"passed": None if passed is None else bool(passed), "value": value, "limit": limit}

    put("positive", s.min_u > 0, s.min_u, 0.0)
    put("boundary", s.bc_residual <= DEFAULTS.bc_tol, s.bc_residual, DEFAULTS.bc_tol)
    if not traj.completed or s.min_u <= 0:
        put("equation", s.residual <= tol.residual, s.residual, tol.residual)
        for name in ("balance", "identity", "nonconstant"):
            put(name, False, None, None)
        return ValidationReport(checks)

    g_max = float(g.evaluate(np.array([s.max_u]))[0])
    scale = max(1.0, nu * w.l1_norm * g_max)
    # residual relative to the size of u''
    accel = max(1.0, nu * w.sup_norm_estimate * g_max)
    put("equation", s.residual <= tol.residual * accel, s.residual, tol.residual * accel)
    th, al, vf = fld.theta, fld.alpha, fld.forcing

    def balance(x, u, v):
        out = th * nu * w.evaluate(x) * g.evaluate(u)
        if vf is not None and al:
            out = out + al * vf.evaluate(x)
        return out

    bal = traj.quad(balance)
    put("balance", abs(bal) <= 1e-6 * scale, bal, 1e-6 * scale)

    if _g_increasing(p) and fld.mode in ("extended", "lienard") and al == 0:
        def ident(x, u, v):
            gu = g.evaluate(u)
            return g.deriv(u) * (v / gu) ** 2
        lhs = traj.quad(ident)
        total = lhs + nu * w.integral()
        lim = 1e-5 * max(1.0, nu * w.l1_norm)
        put("identity", abs(total) <= lim, total, lim)
    else:
        put("identity", None, None, None)
    vmax = float(np.max(np.abs(traj.v)))
    put("nonconstant", vmax > 1e-8 * max(1.0, s.max_u), vmax, 1e-8 * max(1.0, s.max_u))
    return ValidationReport(checks)


def _accept(s: SolutionProfile, floor: float | None = None) -> bool:
    floor = DEFAULTS.positivity_floor if floor is None else floor
    amplitude_floor = 10 * DEFAULTS.box_c_min
    if not (s.trajectory.completed and s.max_u > amplitude_floor and s.min_u > floor * s.norm_inf
            and s.bc_residual <= DEFAULTS.bc_tol):
        return False
    v = s.validation
    return v is not None and all(v[k]["passed"] for k in ("equation", "balance", "nonconstant"))


def _dedupe(profiles: list[SolutionProfile]) -> list[SolutionProfile]:
    out: list[SolutionProfile] = []
    for s in sorted(profiles, key=lambda q: q.max_u):
        xs = np.linspace(0, s.trajectory.field.T, 201)
        us = s(xs)[0]
        dup = False
        for t in out:
            if np.max(np.abs(t(xs)[0] - us)) <= 1e-6 * (1 + s.norm_inf):
                dup = True
                break
        if not dup:
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# Neumann


def neumann_shoot(p: ProblemSpec, c: float, fld: FieldSpec | None = None, dense: bool = True,
                  tol: Tolerances | None = None, escape: float | None = None) -> tuple[float, Trajectory]:
    """Terminal slope ``u'(T)`` of the trajectory from ``(c, 0)``."""
    if c <= 0:
        raise ValueError("initial height must be positive")
    traj = integrate(fld or make_field(p), 0.0, (c, 0.0), p.T, tol, dense=dense, escape=escape)
    return traj.end[1], traj


@dataclass
class NeumannScan:
    c: np.ndarray
    slope: np.ndarray
    status: list[str]

    @property
    def degenerate(self) -> bool:
        """Every completed seed ends flat, so slopes carry no sign information."""
        done = np.isfinite(self.slope)
        return bool(done.any() and np.all(self.slope[done] == 0))

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "slope": self.slope.tolist(), "status": self.status,
                "degenerate": self.degenerate}


def scan_neumann(p: ProblemSpec, c_range, n_seeds: int, fld: FieldSpec | None = None,
                 escape: float | None = None) -> NeumannScan:
    fld = fld or make_field(p)
    cs = np.geomspace(c_range[0], c_range[1], n_seeds)
    slopes, status = np.full(n_seeds, np.nan), []
    for i, c in enumerate(cs):
        traj = integrate(fld, 0.0, (c, 0.0), p.T, dense=False, escape=escape)
        status.append(traj.termination.kind)
        if traj.completed:
            slopes[i] = traj.end[1]
    return NeumannScan(cs, slopes, status)


def find_neumann_solutions(p: ProblemSpec, c_range=None, n_seeds: int | None = None,
                           fld: FieldSpec | None = None, upper: float | None = None) -> list[SolutionProfile]:
    """Positive Neumann solutions with ``u(0)`` in ``c_range``.

    Adjacent completed seeds of a log grid whose terminal slopes differ in
    sign are refined by Brent's method; blow-up seeds are never bracketed
    across. ``upper`` rejects profiles with ``max u`` above it.
    """
    fld = fld or make_field(p)
    c_range = c_range or (DEFAULTS.box_c_min, DEFAULTS.box_size)
    n_seeds = n_seeds or DEFAULTS.neumann_seeds
    esc = escape_bound(c_range[1])
    scan = scan_neumann(p, c_range, n_seeds, fld, esc)
    found = []
    for i in range(n_seeds - 1):
        s0, s1 = scan.slope[i], scan.slope[i + 1]
        if not (np.isfinite(s0) and np.isfinite(s1)) or s0 * s1 > 0:
            continue
        c0, c1 = scan.c[i], scan.c[i + 1]
        if s0 == 0:
            root = c0
        elif s1 == 0:
            root = c1
        else:
            def slope(c):
                traj = integrate(fld, 0.0, (c, 0.0), p.T, TIGHT, dense=False, escape=esc)
                return traj.end[1] if traj.completed else math.nan
            try:
                root = optimize.brentq(slope, c0, c1, xtol=1e-15 * (1 + c1), rtol=4 * np.finfo(float).eps)
            except ValueError:
                continue
        prof = make_profile(p, root, 0.0, fld)
        prof.meta["bracket"] = [float(c0), float(c1)]
        if _accept(prof) and (upper is None or prof.max_u <= upper * (1 + 1e-9)):
            found.append(prof)
    return _dedupe(found)


# ---------------------------------------------------------------------------
# periodic


def periodic_displacement(p: ProblemSpec, cd, fld: FieldSpec | None = None, tol: Tolerances | None = None,
                          escape: float | None = None) -> tuple[np.ndarray, bool]:
    """``(u(T) - c, u'(T) - d)`` and a flag that is true when the orbit escaped.

    An escaping orbit returns its exit state minus the initial data, a large
    vector pointing in the direction of escape.
    """
    c, d = float(cd[0]), float(cd[1])
    traj = integrate(fld or make_field(p), 0.0, (c, d), p.T, tol, dense=False, escape=escape)
    uT, vT = traj.end
    return np.array([uT - c, vT - d]), not traj.completed


def displacement_map(p: ProblemSpec, fld: FieldSpec | None = None, escape: float | None = None,
                     neumann_form: bool = False) -> Callable:
    """Vectorised displacement for the degree routines.

    With ``neumann_form`` the map is ``(c, d) -> (d, u'(T))``, whose zeros
    are the Neumann solutions.
    """
    fld = fld or make_field(p)

    def F(pts):
        vals = np.empty((len(pts), 2))
        flags = np.zeros(len(pts), dtype=bool)
        for i, (c, d) in enumerate(pts):
            traj = integrate(fld, 0.0, (c, d), p.T, dense=False, escape=escape)
            uT, vT = traj.end
            vals[i] = (d, vT) if neumann_form else (uT - c, vT - d)
            flags[i] = not traj.completed
        return vals, flags

    return F


def _newton(fun, z0, box2, tol, max_iter):
    z = np.array(z0, dtype=float)
    f = fun(z)
    if f is None:
        return z, None, False
    for _ in range(max_iter):
        if np.linalg.norm(f) <= tol * (1 + np.linalg.norm(z)):
            return z, f, True
        J = np.empty((2, 2))
        for j in range(2):
            h = DEFAULTS.fd_step * (1 + abs(z[j]))
            zp = z.copy()
            zp[j] += h
            fp = fun(zp)
            if fp is None:
                return z, f, False
            J[:, j] = (fp - f) / h
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -f, rcond=None)[0]
        lam, improved = 1.0, False
        while lam >= 1 / 64:
            zn = z + lam * step
            if not (box2[0] <= zn[0] <= box2[1] and box2[2] <= zn[1] <= box2[3]):
                lam /= 2
                continue
            fn = fun(zn)
            if fn is not None and np.linalg.norm(fn) < np.linalg.norm(f):
                z, f, improved = zn, fn, True
                break
            lam /= 2
        if not improved:
            return z, f, np.linalg.norm(f) <= tol * (1 + np.linalg.norm(z))
    return z, f, np.linalg.norm(f) <= tol * (1 + np.linalg.norm(z))


def _enlarge(box, factor=2.0):
    x0, x1, y0, y1 = box
    cx, cy, hx, hy = 0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    return (cx - factor * hx, cx + factor * hx, cy - factor * hy, cy + factor * hy)


def polish_periodic(p: ProblemSpec, z0, box, fld: FieldSpec | None = None, escape: float | None = None):
    """Damped Newton on the displacement; ``None`` when it fails or leaves ``box``."""
    fld = fld or make_field(p)

    def make_fun(tol):
        def fun(z):
            val, esc = periodic_displacement(p, z, fld, tol, escape)
            return None if esc else val
        return fun

    z, f, ok = _newton(make_fun(None), z0, box, DEFAULTS.newton_tol * 10, DEFAULTS.newton_max_iter)
    if f is None:
        return None
    # finish at tight tolerances so the profile integration agrees with the root
    z, f, ok = _newton(make_fun(TIGHT), z, box, DEFAULTS.newton_tol, 8)
    return z if f is not None and np.linalg.norm(f) <= 1e-3 * DEFAULTS.bc_tol * (1 + np.linalg.norm(z)) or ok else None


@dataclass
class PeriodicSearch:
    solutions: list[SolutionProfile]
    boxes: list
    located: list
    evaluations: int
    rejected: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"boxes": [list(b) for b in self.boxes], "located": [b.to_dict() for b in self.located],
                "evaluations": self.evaluations, "rejected": self.rejected,
                "solutions": [s.to_dict() for s in self.solutions]}


def default_box(size: float | None = None) -> tuple[float, float, float, float]:
    R = DEFAULTS.box_size if size is None else size
    return (DEFAULTS.box_c_min, R, -R, R)


def search_periodic(p: ProblemSpec, box=None, max_depth: int | None = None, fld: FieldSpec | None = None,
                    grid: int | None = None, upper: float | None = None, lower: float | None = None) -> PeriodicSearch:
    """One pass of degree-guided search on ``box``; see :func:`find_periodic_solutions`."""
    fld = fld or make_field(p)
    box = tuple(map(float, box or default_box()))
    size = max(abs(c) for c in box)
    esc = escape_bound(size)
    F = displacement_map(p, fld, esc)
    res = deg.locate(F, box, max_depth, grid=grid)
    found, rejected = [], []
    for lb in res.boxes:
        z = polish_periodic(p, lb.center, _enlarge(lb.box), fld, esc)
        if z is None:
            rejected.append({"box": list(lb.box), "reason": "newton failed"})
            continue
        prof = make_profile(p, z[0], z[1], fld)
        if not _accept(prof, lower):
            rejected.append({"box": list(lb.box), "reason": "not a positive solution",
                             "min_u": prof.min_u, "max_u": prof.max_u, "bc_residual": prof.bc_residual})
            continue
        if upper is not None and prof.max_u > upper * (1 + 1e-9):
            rejected.append({"box": list(lb.box), "reason": "above the amplitude cap", "max_u": prof.max_u})
            continue
        # degree check on a small box around the polished zero
        r = 1e-3 * (1 + np.abs(z))
        small = (z[0] - r[0], z[0] + r[0], z[1] - r[1], z[1] + r[1])
        try:
            rep = deg.winding_number(F, deg.Loop.rectangle(small))
        except deg.ZeroOnBoundaryError:
            rep = None
        if rep is None or not rep.certified or rep.winding == 0:
            rejected.append({"box": list(lb.box), "reason": "no certified nonzero winding at the zero"})
            continue
        prof.winding = rep.winding
        prof.located_box = lb.box
        found.append(prof)
    return PeriodicSearch(_dedupe(found), [box], res.boxes, res.evaluations, rejected)


def find_periodic_solutions(p: ProblemSpec, box=None, max_depth: int | None = None, *,
                            fld: FieldSpec | None = None, doublings: int | None = None, expand: bool = False,
                            grid: int | None = None, upper: float | None = None) -> PeriodicSearch:
    """Positive periodic solutions with initial data in ``box``.

    When nothing is found and ``expand`` is set, the box size is doubled up
    to ``doublings`` times. Bounded boxes cannot certify absence: an empty
    result means none was found in the boxes listed in the report.
    """
    if p.bc != "periodic":
        raise ValueError("periodic search needs periodic boundary conditions")
    doublings = DEFAULTS.box_doublings if doublings is None else doublings
    box = tuple(map(float, box or default_box()))
    result = search_periodic(p, box, max_depth, fld, grid, upper)
    tried, evals, located, rejected = [box], result.evaluations, list(result.located), list(result.rejected)
    k = 0
    while not result.solutions and expand and k < doublings:
        k += 1
        c0, c1, d0, d1 = box
        box = (c0, c0 + 2 * (c1 - c0), 2 * d0, 2 * d1)
        result = search_periodic(p, box, max_depth, fld, grid, upper)
        tried.append(box)
        evals += result.evaluations
        located += result.located
        rejected += result.rejected
    return PeriodicSearch(result.solutions, tried, located, evals, rejected)


def find_solutions(p: ProblemSpec, size: float | None = None, **kwargs) -> list[SolutionProfile]:
    """Dispatch to the Neumann or periodic search with a default box of ``size``."""
    size = DEFAULTS.box_size if size is None else size
    if p.bc == "neumann":
        return find_neumann_solutions(p, (DEFAULTS.box_c_min, size), kwargs.get("n_seeds"))
    return find_periodic_solutions(p, default_box(size), kwargs.get("max_depth"),
                                   doublings=kwargs.get("doublings"), expand=kwargs.get("expand", False),
                                   grid=kwargs.get("grid")).solutions


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepPoint:
    params: dict
    outcome: str
    solutions: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def amplitude(self) -> float | None:
        if self.solutions:
            return max(s.max_u for s in self.solutions)
        # pinned sweeps find profiles of height r without keeping them
        return self.params.get("r") if self.outcome == SOLUTIONS else None

    def to_dict(self) -> dict:
        return {**self.params, "outcome": self.outcome, "amplitude": self.amplitude,
                "solutions": [s.to_dict() for s in self.solutions], **self.info}


@dataclass
class SweepReport:
    kind: str
    points: list[SweepPoint]
    brackets: dict = field(default_factory=dict)

    def outcomes(self) -> list[str]:
        return [pt.outcome for pt in self.points]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": [pt.to_dict() for pt in self.points], "brackets": self.brackets}


def _pinned_residuals(p: ProblemSpec, fld: FieldSpec, xstar: float, r: float, esc: float):
    """Start at the maximum ``(xstar, r, 0)`` and return the boundary mismatch.

    Neumann: ``(u'(0), u'(T))`` from integrating backward and forward.
    Periodic: ``(u(xstar + T) - r, u'(xstar + T))`` going once around.
    Also returns the largest ``u`` seen and whether the orbit escaped.
    """
    T = p.T
    top = r
    if p.bc == "neumann":
        ends = []
        for target in (0.0, T):
            if target == xstar:
                ends.append((r, 0.0))
                continue
            traj = integrate(fld, xstar, (r, 0.0), target, dense=False, escape=esc)
            if not traj.completed:
                return None, math.inf, True
            top = max(top, float(traj.u.max()))
            ends.append(traj.end)
        return np.array([ends[0][1], ends[1][1]]), top, False
    state = (r, 0.0)
    for a, b in ((xstar, T), (0.0, xstar)):
        if b <= a:
            continue
        traj = integrate(fld, a, state, b, dense=False, escape=esc)
        if not traj.completed:
            return None, math.inf, True
        top = max(top, float(traj.u.max()))
        state = traj.end
    return np.array([state[0] - r, state[1]]), top, False


def _amplitude_search(p: ProblemSpec, fld: FieldSpec, r: float, n: int = 200):
    """Solutions with ``max u = r``: scan the location ``xstar`` of the maximum.

    Every solution with ``|u|_inf = r`` passes through ``(r, 0)`` at its
    maximum, so the search is over one parameter. Sign changes of the second
    residual component are refined; a root counts as a solution when the
    first component is small too, relative to the natural scales ``r`` and
    ``theta nu |a|_1 g(r)``, and the orbit never exceeds ``r``.
    """
    T = p.T
    slope_scale = max(fld.theta * p.nu * p.weight.l1_norm * float(p.g.evaluate(np.array([r]))[0]), 1e-300)
    scales = np.array([slope_scale, slope_scale]) if p.bc == "neumann" else np.array([r, slope_scale])
    esc = escape_bound(r)
    xs = np.unique(np.concatenate([np.linspace(0, T, n + 1), p.weight.breakpoints]))
    if p.bc == "periodic":
        xs = xs[xs < T]
    vals, tops, blow = [], [], 0
    for x in xs:
        res, top, esc_flag = _pinned_residuals(p, fld, float(x), r, esc)
        blow += esc_flag
        vals.append(res / scales if res is not None else np.array([np.nan, np.nan]))
        tops.append(top)
    vals = np.array(vals)
    closest = float(np.nanmin(np.max(np.abs(vals), axis=1))) if np.isfinite(vals).any() else math.inf
    hits = []
    comp = 1  # refine on the second component, test the first
    for i in range(len(xs) - 1):
        a, b = vals[i, comp], vals[i + 1, comp]
        if not (np.isfinite(a) and np.isfinite(b)) or a * b > 0:
            continue

        def f(x):
            res, _, e = _pinned_residuals(p, fld, x, r, esc)
            return math.nan if e else res[comp] / scales[comp]
        try:
            xr = optimize.brentq(f, xs[i], xs[i + 1], xtol=1e-13 * T)
        except ValueError:
            continue
        res, top, e = _pinned_residuals(p, fld, xr, r, esc)
        if e:
            continue
        rel = np.abs(res) / scales
        closest = min(closest, float(rel.max()))
        if rel.max() <= 1e-6 and top <= r * (1 + 1e-7):
            hits.append({"xstar": float(xr), "residual": rel.tolist()})
    return hits, closest, blow


def homotopy_sweep_theta(p: ProblemSpec, r_grid, theta_grid, n_locations: int = 200) -> SweepReport:
    """Look for solutions of the theta-scaled problem with ``|u|_inf = r``.

    Each grid point reports ``NoSolution`` or ``Solutions``; ``info`` holds
    the smallest relative boundary mismatch met along the way, a measure of
    how far the point is from having a solution. The largest ``r`` below
    which every point is ``NoSolution`` is reported as ``r0_estimate``.
    """
    points = []
    for r in r_grid:
        for th in theta_grid:
            fld = make_field(p, "theta", theta=float(th))
            hits, closest, blow = _amplitude_search(p, fld, float(r), n_locations)
            if hits:
                outcome = SOLUTIONS
            elif blow and closest == math.inf:
                outcome = BLOWUP
            else:
                outcome = NO_SOLUTION
            points.append(SweepPoint({"r": float(r), "theta": float(th)}, outcome,
                                     info={"closest": closest, "hits": hits, "escaped": int(blow)}))
    r0 = None
    for r in sorted(set(float(x) for x in r_grid)):
        if all(pt.outcome == NO_SOLUTION for pt in points if pt.params["r"] == r):
            r0 = r
        else:
            break
    return SweepReport("theta", points, {"r0_estimate": r0})


def alpha_search_box(p: ProblemSpec, R: float, alpha: float, v: Weight) -> tuple[float, float, float, float]:
    """Initial data compatible with ``0 <= u <= R``: ``|u'|`` is bounded by the total forcing."""
    from .certify import _max_g
    dmax = p.nu * p.weight.l1_norm * _max_g(p, R) + alpha * v.l1_norm
    return (DEFAULTS.box_c_min, R, -dmax, dmax)


def homotopy_sweep_alpha(p: ProblemSpec, R: float, v: Weight, alpha_grid, max_depth: int | None = None,
                         grid: int | None = None) -> SweepReport:
    """Solutions with ``0 <= u <= R`` of the problem forced by ``alpha v``."""
    points = []
    for alpha in alpha_grid:
        alpha = float(alpha)
        fld = make_field(p, "alpha", alpha=alpha, forcing=v) if alpha > 0 else make_field(p)
        box = alpha_search_box(p, R, alpha, v)
        if p.bc == "neumann":
            sols = find_neumann_solutions(p, (box[0], R), fld=fld, upper=R)
            info = {"c_range": [box[0], R]}
        else:
            res = search_periodic(p, box, max_depth, fld, grid, upper=R, lower=-1.0)
            sols = [s for s in res.solutions if s.min_u >= 0]
            info = {"box": list(box), "located": len(res.located)}
        points.append(SweepPoint({"alpha": alpha}, SOLUTIONS if sols else NO_SOLUTION, sols, info))
    return SweepReport("alpha", points)


def nu_sweep(p: ProblemSpec, nu_range, n: int, *, nu_star: float | None = None, size: float | None = None,
             max_depth: int | None = None, grid: int | None = None, expand: bool = False,
             doublings: int | None = None) -> SweepReport:
    """Solve on a log grid of ``nu`` and bracket the empirical thresholds.

    ``nu_star`` is a proven nonexistence bound; a solution found below it
    raises :class:`ConsistencyError`.
    """
    nus = np.geomspace(nu_range[0], nu_range[1], n) if n > 1 else np.array([float(nu_range[0])])
    points = []
    for nu in nus:
        q = p.with_nu(float(nu))
        try:
            if p.bc == "neumann":
                sols = find_neumann_solutions(q, (DEFAULTS.box_c_min, size or DEFAULTS.box_size))
            else:
                sols = find_periodic_solutions(q, default_box(size), max_depth, grid=grid, expand=expand,
                                               doublings=doublings).solutions
            outcome = SOLUTIONS if sols else NO_SOLUTION
        except (DomainError, deg.ZeroOnBoundaryError):
            sols, outcome = [], UNDETERMINED
        if outcome == SOLUTIONS and nu_star is not None and nu < nu_star:
            raise ConsistencyError(f"positive solution found at nu={nu:.6g} below the bound {nu_star:.6g}")
        points.append(SweepPoint({"nu": float(nu)}, outcome, sols))
    outs = [pt.outcome for pt in points]
    prefix = 0
    while prefix < len(outs) and outs[prefix] == NO_SOLUTION:
        prefix += 1
    suffix = len(outs)
    while suffix > 0 and outs[suffix - 1] == SOLUTIONS:
        suffix -= 1
    brackets = {
        "no_solution_up_to": float(nus[prefix - 1]) if prefix else None,
        "solutions_from": float(nus[suffix]) if suffix < len(outs) else None,
        "nu_star": nu_star,
    }
    return SweepReport("nu", points, brackets)
