"""Initial value problems for ``u'' = F(x, u, u')``.

Integration runs scipy's DOP853 separately on every interval between weight
breakpoints, so no step ever straddles a discontinuity of the coefficients.
Trajectories keep the dense output of each interval for evaluation,
quadrature and residual checks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .config import DEFAULTS, Tolerances
from .expr import DomainError
from .model import ModelError, ProblemSpec, Weight

MODES = ("raw", "extended", "theta", "alpha", "lienard")


class IntegrationError(RuntimeError):
    pass


class _Escape(Exception):
    pass


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Right-hand side of ``u'' = F(x, u, u')`` built from a problem.

    For ``u >= 0`` the field is ``-(c v + theta ((h(u) - c) v + nu a(x) g(u)))
    - alpha v_f(x)`` where ``h`` is the damping (``c = h(0)``, both zero when
    undamped). For ``u < 0`` the nonlinear part is replaced by the linear
    extension ``theta u - c v``, which matches at ``u = 0`` because
    ``g(0) = 0``. In ``raw`` mode negative ``u`` is a domain error.
    """

    problem: ProblemSpec
    mode: str = "extended"
    theta: float = 1.0
    alpha: float = 0.0
    forcing: Weight | None = None
    damped: bool = False

    @cached_property
    def breakpoints(self) -> tuple[float, ...]:
        pts = set(self.problem.weight.breakpoints)
        if self.forcing is not None and self.alpha != 0:
            pts.update(self.forcing.breakpoints)
        return tuple(sorted(pts))

    @property
    def T(self) -> float:
        return self.problem.T

    def split(self, lo: float, hi: float) -> list[tuple[float, float]]:
        """Sub-intervals of ``[lo, hi]`` (or ``[hi, lo]`` reversed) between breakpoints."""
        a, b = min(lo, hi), max(lo, hi)
        cuts = [a] + [p for p in self.breakpoints if a < p < b] + [b]
        segs = list(zip(cuts[:-1], cuts[1:]))
        if hi < lo:
            segs = [(y, x) for x, y in reversed(segs)]
        return segs

    def accel_fn(self, x_mid: float) -> Callable[[float, float, float], float]:
        """Scalar ``F(x, u, v)`` valid on the breakpoint interval containing ``x_mid``."""
        p = self.problem
        a_fn = p.weight.pieces[p.weight.piece_index(x_mid)].expr._scalar_fn
        g_fn = p.g.expr._scalar_fn
        scale = p.nu
        th = self.theta
        extended = self.mode != "raw"
        h_fn = p.damping.expr._scalar_fn if self.damped and p.damping is not None else None
        c = float(h_fn(0.0)) if h_fn is not None else 0.0
        alpha = self.alpha
        v_fn = None
        if self.forcing is not None and alpha != 0:
            v_fn = self.forcing.pieces[self.forcing.piece_index(x_mid)].expr._scalar_fn

        def accel(x: float, u: float, v: float) -> float:
            if u > 0:
                inner = scale * a_fn(x) * g_fn(u)
                if h_fn is not None:
                    inner += (h_fn(u) - c) * v
                out = -(c * v + th * inner)
            elif u == 0 or extended:
                out = th * u - c * v
            else:
                raise DomainError(f"raw field undefined for u={u} < 0 at x={x}")
            if v_fn is not None:
                out -= alpha * v_fn(x)
            return out

        return accel

    def __call__(self, x: float, u: float, v: float) -> float:
        return self.accel_fn(x)(x, u, v)

    def evaluate(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorised ``F`` for arrays lying on one side of every breakpoint."""
        return np.array([self(xi, ui, vi) for xi, ui, vi in zip(x, u, v)])

    def describe(self) -> dict:
        out = {"mode": self.mode, "theta": self.theta, "alpha": self.alpha, "damped": self.damped}
        if self.forcing is not None:
            out["forcing"] = self.forcing.to_dict()
        return out


def make_field(p: ProblemSpec, mode: str = "extended", *, theta: float = 1.0, alpha: float = 0.0,
               forcing: Weight | None = None) -> FieldSpec:
    """Assemble the field for ``mode``.

    ``theta`` scales the nonlinear part (``theta`` mode), ``alpha`` with a
    nonnegative ``forcing`` adds ``-alpha v(x)`` (``alpha`` mode). ``lienard``
    mode adds the damping term and requires periodic conditions. The default
    ``extended`` mode includes damping too when the problem declares it.
    """
    if mode not in MODES:
        raise ModelError(f"unknown field mode {mode!r}")
    if not 0 < theta <= 1:
        raise ModelError(f"theta must lie in (0, 1], got {theta}")
    if alpha < 0:
        raise ModelError(f"alpha must be nonnegative, got {alpha}")
    if alpha > 0 and forcing is None:
        raise ModelError("alpha > 0 needs a forcing function")
    if mode == "lienard" and (p.damping is None or p.bc != "periodic"):
        raise ModelError("lienard mode needs a damping term and periodic boundary conditions")
    if forcing is not None and abs(forcing.T - p.T) > 1e-12 * p.T:
        raise ModelError("forcing must live on the same interval as the weight")
    damped = p.damping is not None and mode != "raw"
    return FieldSpec(p, mode, float(theta), float(alpha), forcing, damped)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Termination:
    kind: str  # completed / blowup / domain_error
    x: float | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x": self.x, "message": self.message}


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


@dataclass(eq=False)
class Trajectory:
    """Solution of an initial value problem.

    ``x`` and ``y`` hold the accepted steps (``y[0] = u``, ``y[1] = u'``);
    ``segments`` pairs each breakpoint interval with scipy's dense output when
    it was requested.
    """

    x: np.ndarray
    y: np.ndarray
    termination: Termination
    field: FieldSpec = dc_field(repr=False)
    segments: list = dc_field(default_factory=list, repr=False)
    interpolant: str = "DOP853 dense output (order 7)"

    @property
    def completed(self) -> bool:
        return self.termination.kind == "completed"

    @property
    def u(self) -> np.ndarray:
        return self.y[0]

    @property
    def v(self) -> np.ndarray:
        return self.y[1]

    @property
    def end(self) -> tuple[float, float]:
        return float(self.y[0, -1]), float(self.y[1, -1])

    @property
    def has_dense(self) -> bool:
        return bool(self.segments) and all(s[2] is not None for s in self.segments)

    def _segment_for(self, xq: float) -> int:
        for i, (a, b, _) in enumerate(self.segments):
            lo, hi = min(a, b), max(a, b)
            if lo - 1e-14 * (1 + abs(lo)) <= xq <= hi + 1e-14 * (1 + abs(hi)):
                return i
        raise ValueError(f"x={xq} outside the integrated span")

    def __call__(self, xq) -> np.ndarray:
        """Dense values ``(u, u')`` at ``xq`` (scalar or array)."""
        if not self.has_dense:
            raise ValueError("trajectory was integrated without dense output")
        xs = np.atleast_1d(np.asarray(xq, dtype=float))
        out = np.empty((2, xs.size))
        for j, xv in enumerate(xs):
            sol = self.segments[self._segment_for(xv)][2]
            out[:, j] = sol(xv)
        return out[:, 0] if np.ndim(xq) == 0 else out

    def steps(self):
        """Yield ``(lo, hi, dense)`` for every accepted step in increasing x."""
        for a, b, sol in self.segments:
            ts = np.asarray(sol.ts)
            if ts[0] > ts[-1]:
                ts = ts[::-1]
            for lo, hi in zip(ts[:-1], ts[1:]):
                yield float(lo), float(hi), sol

    def quad(self, fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> float:
        """``int fn(x, u, u') dx`` over the span with 10-point Gauss rules per step."""
        total = 0.0
        for lo, hi, sol in self.steps():
            xs = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
            uv = sol(xs)
            total += 0.5 * (hi - lo) * float(np.dot(_GL_WEIGHTS, fn(xs, uv[0], uv[1])))
        return total

    def extrema(self) -> tuple[float, float]:
        """``(min u, max u)`` including interior critical points between steps."""
        lo_u, hi_u = float(self.u.min()), float(self.u.max())
        if not self.has_dense:
            return lo_u, hi_u
        for a, b, sol in self.steps():
            xs = np.linspace(a, b, 9)
            uu = sol(xs)[0]
            lo_u, hi_u = min(lo_u, float(uu.min())), max(hi_u, float(uu.max()))
        return lo_u, hi_u

    def residual(self, refine: int = 10) -> float:
        """Largest ``|u'' - F(x, u, u')|`` on a grid ``refine`` times finer than the steps.

        ``u''`` is taken as the derivative of the interpolated ``u'`` by a
        central difference that stays inside a single step.
        """
        worst = 0.0
        span = abs(float(self.x[-1] - self.x[0]))
        for lo, hi, sol in self.steps():
            width = hi - lo
            # sliver steps left by landing on a breakpoint are too short to difference
            if width <= 1e-7 * span:
                continue
            accel = self.field.accel_fn(0.5 * (lo + hi))
            h = 1e-4 * width
            for k in range(refine):
                xk = lo + (k + 0.5) * width / refine
                up = sol(xk + h)[1]
                dn = sol(xk - h)[1]
                u, v = sol(xk)
                worst = max(worst, abs((up - dn) / (2 * h) - accel(xk, u, v)))
        return worst

    def sample(self, n: int = 401) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a, b = float(self.x[0]), float(self.x[-1])
        xs = np.linspace(min(a, b), max(a, b), n)
        uv = self(xs)
        return xs, uv[0], uv[1]

    def sidecar(self) -> dict:
        return {"termination": self.termination.to_dict(), "span": [float(self.x[0]), float(self.x[-1])],
                "steps": int(self.x.size - 1), "interpolant": self.interpolant,
                "field": self.field.describe(), "breakpoints": list(self.field.breakpoints)}

    def write_csv(self, path, n: int | None = None) -> Path:
        """Write ``x, u, uprime`` rows plus a JSON sidecar with the termination status."""
        path = Path(path)
        if n is not None and self.has_dense:
            xs, us, vs = self.sample(n)
        else:
            xs, us, vs = self.x, self.u, self.v
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "u", "uprime"])
            for row in zip(xs, us, vs):
                w.writerow([repr(float(c)) for c in row])
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2))
        return path


def escape_bound(box_size: float = 0.0) -> float:
    return DEFAULTS.escape_factor * (1.0 + box_size)


def integrate(fld: FieldSpec, x0: float, y0, x_end: float, tol: Tolerances | None = None, *,
              dense: bool = True, profile: bool = False, escape: float | None = None,
              max_step: float | None = None) -> Trajectory:
    """Integrate ``u'' = F`` from ``(x0, y0)`` to ``x_end``; ``x_end < x0`` runs backward.

    Stops early with a ``blowup`` termination when ``|u|`` or ``|u'|`` exceeds
    ``escape`` and with ``domain_error`` when the field cannot be evaluated
    (``raw`` mode below zero, or an expression off its domain). ``profile``
    switches to the tight tolerances used for final solution profiles.
    """
    tol = tol or DEFAULTS.tol
    if profile:
        rtol, atol = tol.profile_rel, tol.profile_abs
        max_step = max_step or fld.T / tol.profile_steps
    else:
        rtol, atol = tol.rel, tol.abs
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    if x0 == x_end:
        raise ValueError("empty integration span")
    escape = escape_bound() if escape is None else escape
    state = np.array([float(y0[0]), float(y0[1])])
    if not np.all(np.isfinite(state)):
        raise ValueError(f"initial data must be finite, got {y0}")
    xs, ys, segs = [np.array([x0])], [state[:, None]], []
    termination = Termination("completed")
    last_x = [x0]

    def escape_event(x, y):
        return escape - max(abs(y[0]), abs(y[1]))

    escape_event.terminal = True

    def zero_event(x, y):
        return y[0]

    zero_event.terminal = True
    zero_event.direction = -1 if x_end > x0 else 1

    raw = fld.mode == "raw"
    events = [escape_event] + ([zero_event] if raw else [])
    for a, b in fld.split(x0, x_end):
        accel = fld.accel_fn(0.5 * (a + b))

        def rhs(x, y, accel=accel):
            last_x[0] = x
            if raw and y[0] < 0:
                # trial stages may dip below zero before the zero event fires
                return np.array([y[1], y[0]])
            try:
                return np.array([y[1], accel(x, y[0], y[1])])
            except OverflowError:
                raise _Escape from None
            except (ValueError, ZeroDivisionError) as exc:
                raise DomainError(str(exc)) from None

        kwargs = {"max_step": max_step} if max_step else {}
        try:
            with np.errstate(over="raise", invalid="raise"):
                res = solve_ivp(rhs, (a, b), state, method="DOP853", rtol=rtol, atol=atol,
                                dense_output=dense, events=events, **kwargs)
        except DomainError as exc:
            termination = Termination("domain_error", float(last_x[0]), str(exc))
            break
        except (_Escape, FloatingPointError):
            termination = Termination("blowup", float(last_x[0]), "overflow in field evaluation")
            break
        xs.append(res.t[1:])
        ys.append(res.y[:, 1:])
        if dense:
            segs.append((a, float(res.t[-1]), res.sol))
        state = res.y[:, -1]
        if res.status == 1:
            if res.t_events[0].size:
                termination = Termination("blowup", float(res.t[-1]), f"|(u, u')| exceeded {escape:.3g}")
            else:
                termination = Termination("domain_error", float(res.t[-1]), "u reached zero in raw mode")
            break
        if res.status == -1:
            if np.max(np.abs(state)) > math.sqrt(escape):
                termination = Termination("blowup", float(res.t[-1]), res.message)
                break
            raise IntegrationError(f"integration failed at x={res.t[-1]}: {res.message}")
    x = np.concatenate(xs)
    y = np.concatenate(ys, axis=1)
    return Trajectory(x, y, termination, fld, segs)
