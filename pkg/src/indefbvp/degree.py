"""Winding numbers of planar maps and degree-guided zero localisation.

Maps take an ``(n, 2)`` array of points and return an ``(n, 2)`` array of
values, optionally paired with a boolean mask flagging samples that are not
trustworthy (for example blow-up surrogates). Flagged samples never produce
a certified result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import DEFAULTS

PlanarMap = Callable[[np.ndarray], "np.ndarray | tuple[np.ndarray, np.ndarray]"]


class ZeroOnBoundaryError(ArithmeticError):
    """The map vanishes (numerically) at a boundary sample; the degree is undefined there."""

    def __init__(self, point, value):
        super().__init__(f"map vanishes on the boundary near ({point[0]:.6g}, {point[1]:.6g}), "
                         f"|F| = {float(np.hypot(*value)):.3g}")
        self.point = tuple(float(c) for c in point)
        self.value = tuple(float(c) for c in value)


@dataclass(frozen=True)
class Loop:
    """Closed polygon given by its vertices; the last edge returns to the first vertex."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("a loop needs at least three 2-D vertices")
        object.__setattr__(self, "vertices", v)

    @classmethod
    def circle(cls, n: int = 64, center=(0.0, 0.0), radius: float = 1.0) -> Loop:
        t = 2 * np.pi * np.arange(n) / n
        return cls(np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)]))

    @classmethod
    def rectangle(cls, box) -> Loop:
        x0, x1, y0, y1 = box
        return cls(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))

    @property
    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def counterclockwise(self) -> bool:
        return self.signed_area > 0

    def reversed(self) -> Loop:
        return Loop(self.vertices[::-1].copy())

    def is_simple(self) -> bool:
        v = self.vertices
        n = len(v)
        a, b = v, np.roll(v, -1, axis=0)
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_cross(a[i], b[i], a[j], b[j]):
                    return False
        return True

    def points(self, s: np.ndarray) -> np.ndarray:
        """Points at loop parameter ``s`` in ``[0, n)``; edge ``k`` is ``[k, k+1)``."""
        v = self.vertices
        k = np.floor(s).astype(int) % len(v)
        frac = (s - np.floor(s))[:, None]
        return v[k] + frac * (v[(k + 1) % len(v)] - v[k])


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return (orient(p1, p2, p3) * orient(p1, p2, p4) < 0) and (orient(p3, p4, p1) * orient(p3, p4, p2) < 0)


@dataclass(frozen=True)
class DegreeReport:
    winding: int | None  # None when not certified
    raw: float  # angle sum / 2 pi
    min_norm: float
    depth: int
    certified: bool
    samples: int
    suspect: bool = False
    # midpoint of a non-flagged segment whose rotation stayed >= pi/2 after full refinement
    stalled_at: tuple[float, float] | None = None

    @property
    def value(self) -> int:
        """Nearest integer to the raw winding, certified or not."""
        return int(round(self.raw))

    def to_dict(self) -> dict:
        return {"winding": self.winding, "raw": self.raw, "min_norm": self.min_norm, "depth": self.depth,
                "certified": self.certified, "samples": self.samples, "suspect": self.suspect}


class CachedMap:
    """Memoises a planar map by point so shared box edges are evaluated once."""

    def __init__(self, F: PlanarMap):
        self.F = F
        self.cache: dict[tuple[float, float], tuple[float, float, bool]] = {}
        self.calls = 0

    def __call__(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=float)
        keys = [(float(x), float(y)) for x, y in pts]
        missing = [i for i, k in enumerate(keys) if k not in self.cache]
        if missing:
            vals, flags = _call_map(self.F, pts[missing])
            self.calls += len(missing)
            for i, val, fl in zip(missing, vals, flags):
                self.cache[keys[i]] = (float(val[0]), float(val[1]), bool(fl))
        out = np.array([self.cache[k][:2] for k in keys]).reshape(-1, 2)
        sus = np.array([self.cache[k][2] for k in keys], dtype=bool)
        return out, sus


def _call_map(F, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    res = F(pts)
    if isinstance(res, tuple):
        vals, flags = res
    else:
        vals, flags = res, np.zeros(len(pts), dtype=bool)
    vals = np.asarray(vals, dtype=float).reshape(-1, 2)
    return vals, np.asarray(flags, dtype=bool).reshape(-1)


def winding_number(F: PlanarMap, loop: Loop, samples: int | None = None, refine: int | None = None,
                   zero_floor: float = 0.0) -> DegreeReport:
    """Winding number of ``F`` along ``loop``.

    Each edge starts with ``samples`` sub-segments. A sub-segment whose angle
    increment is at least ``pi/2`` is bisected, at most ``refine`` times. The
    result is certified when every increment ends below ``pi/2`` and no
    sample is flagged. A sample with ``|F| <= zero_floor`` raises
    :class:`ZeroOnBoundaryError`, as does one below both ``1e-13`` times the
    largest sampled norm and ``1e-12 (1 + |z|)`` at the sample point ``z``.
    """
    samples = samples or DEFAULTS.winding_samples
    refine = DEFAULTS.winding_refine if refine is None else refine
    n_edges = len(loop.vertices)
    s = np.arange(n_edges * samples + 1) / samples  # closed: last equals first point
    level = np.zeros(len(s) - 1, dtype=int)
    pts = loop.points(s)
    vals, sus = _call_map(F, pts)
    depth = 0
    while True:
        _check_zero(pts, vals, zero_floor)
        ang = np.arctan2(vals[:, 1], vals[:, 0])
        d = np.diff(ang)
        d = (d + np.pi) % (2 * np.pi) - np.pi
        bad = (np.abs(d) >= 0.5 * np.pi) & (level < refine)
        if not bad.any():
            break
        idx = np.nonzero(bad)[0]
        mids = 0.5 * (s[idx] + s[idx + 1])
        new_vals, new_sus = _call_map(F, loop.points(mids))
        s = np.insert(s, idx + 1, mids)
        pts = np.insert(pts, idx + 1, loop.points(mids), axis=0)
        vals = np.insert(vals, idx + 1, new_vals, axis=0)
        sus = np.insert(sus, idx + 1, new_sus)
        level[idx] += 1
        level = np.insert(level, idx + 1, level[idx])
        depth = max(depth, int(level.max()))
    raw = float(d.sum() / (2 * np.pi))
    certified = bool(np.all(np.abs(d) < 0.5 * np.pi)) and not sus.any()
    norms = np.hypot(vals[:, 0], vals[:, 1])
    stalled = np.nonzero((np.abs(d) >= 0.5 * np.pi) & ~sus[:-1] & ~sus[1:])[0]
    stalled_at = None
    if stalled.size:
        k = stalled[0]
        stalled_at = tuple(float(c) for c in loop.points(np.array([0.5 * (s[k] + s[k + 1])]))[0])
    return DegreeReport(int(round(raw)) if certified else None, raw, float(norms.min()), depth, certified,
                        len(s) - 1, bool(sus.any()), stalled_at)


def _check_zero(pts, vals, zero_floor):
    norms = np.hypot(vals[:, 0], vals[:, 1])
    top = norms[np.isfinite(norms)].max(initial=0.0)
    # escaping samples inflate ``top``; a point scale keeps small true values near the origin
    scale = 1e-12 * (1.0 + np.hypot(pts[:, 0], pts[:, 1]))
    floor = np.maximum(zero_floor, np.minimum(1e-13 * top, scale))
    hit = np.nonzero(norms <= floor)[0]
    if hit.size:
        k = hit[0]
        raise ZeroOnBoundaryError(pts[k], vals[k])


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocatedBox:
    box: tuple[float, float, float, float]
    winding: int
    certified: bool
    depth: int
    raw: float

    @property
    def center(self) -> tuple[float, float]:
        x0, x1, y0, y1 = self.box
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)

    @property
    def diameter(self) -> float:
        x0, x1, y0, y1 = self.box
        return math.hypot(x1 - x0, y1 - y0)

    def to_dict(self) -> dict:
        return {"box": list(self.box), "winding": self.winding, "certified": self.certified,
                "depth": self.depth, "raw": self.raw}


@dataclass
class LocateResult:
    boxes: list[LocatedBox]
    whole: DegreeReport | None
    box: tuple[float, float, float, float]
    evaluations: int = 0
    perturbations: list = field(default_factory=list)
    dropped_uncertified: int = 0

    def to_dict(self) -> dict:
        return {"label": "shooting-map degree", "box": list(self.box),
                "whole": self.whole.to_dict() if self.whole else None,
                "boxes": [b.to_dict() for b in self.boxes], "evaluations": self.evaluations,
                "perturbations": self.perturbations, "dropped_uncertified": self.dropped_uncertified}


def _box_winding(F, box, samples, refine):
    # a rotation that refinement cannot resolve on a smooth stretch means a
    # zero sits on the edge between samples: handle it like a sampled zero
    rep = winding_number(F, Loop.rectangle(box), samples=samples, refine=refine)
    if rep.stalled_at is not None:
        raise ZeroOnBoundaryError(rep.stalled_at, (0.0, 0.0))
    return rep


def locate(F: PlanarMap, box, max_depth: int | None = None, grid: int | None = None,
           resolution: float | None = None, samples: int | None = None, refine: int | None = None) -> LocateResult:
    """Quadtree search for sub-boxes of ``box`` with nonzero winding.

    The box is first cut into a ``grid`` x ``grid`` array of cells; a zero
    winding of the whole box says nothing about cancelling zeros inside, so
    nothing is pruned at that level. Cells with certified winding 0 are then
    dropped and the others split in four until ``max_depth`` or
    ``resolution`` is reached. When the map vanishes on a cell edge the
    offending grid line or split point is moved by a small fraction of the
    cell diameter, and an outer edge carrying a zero is pulled inward.
    Uncertified cells whose rounded winding is nonzero are kept and flagged.
    """
    max_depth = DEFAULTS.max_depth if max_depth is None else max_depth
    grid = grid or DEFAULTS.grid_cells
    samples = samples or DEFAULTS.winding_samples
    refine = DEFAULTS.winding_refine if refine is None else refine
    frac, retries = DEFAULTS.perturb_fraction, DEFAULTS.perturb_retries
    Fc = F if isinstance(F, CachedMap) else CachedMap(F)
    x0, x1, y0, y1 = map(float, box)
    perturbations = []

    whole = None
    for attempt in range(retries + 1):
        try:
            whole = _box_winding(Fc, (x0, x1, y0, y1), samples, refine)
            break
        except ZeroOnBoundaryError as exc:
            if attempt == retries:
                raise
            # pull the edge carrying the zero inward; growing the box could
            # swallow a zero sitting just outside it (such as a trivial one)
            step = frac * math.hypot(x1 - x0, y1 - y0)
            px, py = exc.point
            near = [abs(px - x0), abs(px - x1), abs(py - y0), abs(py - y1)]
            edge = int(np.argmin(near))
            if edge == 0:
                x0 += step
            elif edge == 1:
                x1 -= step
            elif edge == 2:
                y0 += step
            else:
                y1 -= step
            perturbations.append({"kind": "outer edge moved inward", "at": exc.point, "by": step,
                                  "edge": ("left", "right", "bottom", "top")[edge]})

    xs = list(np.linspace(x0, x1, grid + 1))
    ys = list(np.linspace(y0, y1, grid + 1))
    cells = {}
    for attempt in range(retries + 1):
        try:
            cells = {}
            for i in range(grid):
                for j in range(grid):
                    b = (xs[i], xs[i + 1], ys[j], ys[j + 1])
                    cells[b] = _box_winding(Fc, b, samples, refine)
            break
        except ZeroOnBoundaryError as exc:
            if attempt == retries:
                raise
            px, py = exc.point
            hx, hy = (x1 - x0) / grid, (y1 - y0) / grid
            shift = frac * math.hypot(hx, hy)
            moved = False
            for k in range(1, grid):
                if abs(xs[k] - px) <= 1e-12 * (1 + abs(px)) + 1e-15:
                    xs[k] += shift
                    moved = True
                if abs(ys[k] - py) <= 1e-12 * (1 + abs(py)) + 1e-15:
                    ys[k] += shift
                    moved = True
            if not moved:
                raise
            perturbations.append({"kind": "grid line moved", "at": exc.point, "by": shift})

    located: list[LocatedBox] = []
    dropped = 0
    stack = [(b, rep, 0) for b, rep in cells.items()]
    while stack:
        b, rep, depth = stack.pop()
        if rep.certified and rep.winding == 0:
            continue
        if not rep.certified and rep.value == 0:
            dropped += 1
            continue
        diam = math.hypot(b[1] - b[0], b[3] - b[2])
        if depth >= max_depth or (resolution is not None and diam <= resolution):
            located.append(LocatedBox(tuple(map(float, b)), rep.value, rep.certified, depth, rep.raw))
            continue
        children = _split(Fc, b, samples, refine, frac, retries, perturbations)
        if children is None:
            located.append(LocatedBox(tuple(map(float, b)), rep.value, rep.certified, depth, rep.raw))
            continue
        for cb, crep in children:
            stack.append((cb, crep, depth + 1))
    located.sort(key=lambda lb: (lb.box[0], lb.box[2]))
    return LocateResult(located, whole, (x0, x1, y0, y1), Fc.calls, perturbations, dropped)


def _split(Fc, b, samples, refine, frac, retries, perturbations):
    bx0, bx1, by0, by1 = b
    mx, my = 0.5 * (bx0 + bx1), 0.5 * (by0 + by1)
    diam = math.hypot(bx1 - bx0, by1 - by0)
    for attempt in range(retries + 1):
        quads = [(bx0, mx, by0, my), (mx, bx1, by0, my), (bx0, mx, my, by1), (mx, bx1, my, by1)]
        try:
            return [(q, _box_winding(Fc, q, samples, refine)) for q in quads]
        except ZeroOnBoundaryError as exc:
            shift = frac * diam * (attempt + 1)
            perturbations.append({"kind": "split point moved", "at": exc.point, "by": shift})
            mx, my = mx + shift, my + shift * 0.7071
    return None


def subdivide_and_locate(F: PlanarMap, box, max_depth: int | None = None, **kwargs) -> list[LocatedBox]:
    """Located sub-boxes with nonzero winding; see :func:`locate` for details."""
    return locate(F, box, max_depth, **kwargs).boxes
