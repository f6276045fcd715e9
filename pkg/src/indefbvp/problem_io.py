"""Reading and writing problem and annulus files.

Files are YAML (JSON is accepted as a subset). A problem file::

    bc: periodic            # or neumann
    T: 1
    nu: 1
    weight:
      pieces:
        - {from: 0, to: 1, expr: "sin(2*pi*x) - 0.3"}
    g:
      expr: "s^2"
      zero_limit: 0          # optional declarations
      inf_liminf: inf
    damping: {expr: "1/(1+s^2)", bound: 1}   # optional, periodic only

``weight: {expr: ...}`` is shorthand for one piece covering ``[0, T]``.
An annulus file has ``N``, ``R1``, ``R2``, optional ``nu``, ``Q`` (pieces
or a single ``expr`` in ``r``) and ``g``. Numbers are decimal literals or
``inf``/``-inf``. Errors carry the file name and line number.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import yaml

from .expr import ExprError, ExprSyntaxError, parse_expr
from .model import Damping, ModelError, Nonlinearity, Piece, ProblemSpec, Weight


class ProblemFileError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None,
                 column: int | None = None):
        self.message, self.path, self.line, self.column = message, path, line, column
        where = path or "<input>"
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


class _Node:
    """Plain value plus the position of the YAML node it came from."""

    __slots__ = ("value", "line", "column")

    def __init__(self, value, line, column):
        self.value, self.line, self.column = value, line, column


def _wrap(node: yaml.Node) -> _Node:
    line, col = node.start_mark.line + 1, node.start_mark.column + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ProblemFileError(f"duplicate key {key!r}", line=k.start_mark.line + 1)
            out[key] = _wrap(v)
        return _Node(out, line, col)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_wrap(v) for v in node.value], line, col)
    # point columns at the first character inside quotes
    return _Node(_scalar(node), line, col + (1 if node.style in ("'", '"') else 0))


def _scalar(node: yaml.ScalarNode):
    text = node.value
    if node.style in ("'", '"'):
        return text
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("null", "~", ""):
        return None
    return text


_DECIMAL = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class _Reader:
    def __init__(self, path: str | None):
        self.path = path

    def fail(self, msg: str, node: _Node | None = None):
        raise ProblemFileError(msg, self.path, node.line if node else None, node.column if node else None)

    def mapping(self, node: _Node, what: str, allowed: set[str], required: set[str] = frozenset()):
        if not isinstance(node.value, dict):
            self.fail(f"{what} must be a mapping", node)
        for key, val in node.value.items():
            if key not in allowed:
                self.fail(f"unknown field {key!r} in {what}", val)
        for key in sorted(required):
            if key not in node.value:
                self.fail(f"{what} is missing field {key!r}", node)
        return node.value

    def number(self, node: _Node, what: str, allow_inf: bool = True) -> float:
        v = node.value
        if isinstance(v, str):
            s = v.strip()
            if s.lower() in ("inf", "+inf", ".inf", "infinity"):
                v = math.inf
            elif s.lower() in ("-inf", "-.inf", "-infinity"):
                v = -math.inf
            elif _DECIMAL.match(s):
                v = float(s)
            else:
                self.fail(f"{what}: expected a decimal number, got {s!r}", node)
        elif isinstance(v, bool) or v is None:
            self.fail(f"{what}: expected a number", node)
        v = float(v)
        if math.isinf(v) and not allow_inf:
            self.fail(f"{what} must be finite", node)
        return v

    def boolean(self, node: _Node, what: str) -> bool:
        if not isinstance(node.value, bool):
            self.fail(f"{what}: expected true or false", node)
        return node.value

    def expr(self, node: _Node, var: str, what: str):
        if not isinstance(node.value, str):
            self.fail(f"{what}: expected an expression string", node)
        try:
            return parse_expr(node.value, var)
        except ExprSyntaxError as exc:
            col = node.column + exc.offset
            raise ProblemFileError(f"{what}: {exc}", self.path, node.line, col) from None
        except ExprError as exc:
            self.fail(f"{what}: {exc}", node)

    def pieces(self, node: _Node, var: str, lo: float, hi: float, what: str) -> list[tuple]:
        m = self.mapping(node, what, {"pieces", "expr"})
        if ("pieces" in m) == ("expr" in m):
            self.fail(f"{what} needs exactly one of 'pieces' or 'expr'", node)
        if "expr" in m:
            return [(lo, hi, self.expr(m["expr"], var, f"{what}.expr"))]
        seq = m["pieces"]
        if not isinstance(seq.value, list) or not seq.value:
            self.fail(f"{what}.pieces must be a non-empty list", seq)
        out = []
        for i, item in enumerate(seq.value):
            pm = self.mapping(item, f"{what}.pieces[{i}]", {"from", "to", "expr"}, {"from", "to", "expr"})
            a = self.number(pm["from"], f"{what}.pieces[{i}].from", allow_inf=False)
            b = self.number(pm["to"], f"{what}.pieces[{i}].to", allow_inf=False)
            if not a < b:
                self.fail(f"{what}.pieces[{i}] is empty: from {a} to {b}", item)
            out.append((a, b, self.expr(pm["expr"], var, f"{what}.pieces[{i}].expr"), item))
        out.sort(key=lambda q: q[0])
        tol = 1e-12 * max(1.0, abs(hi))
        x = lo
        for a, b, _, item in out:
            if a < x - tol:
                self.fail(f"{what}: pieces overlap near {var}={a}", item)
            if a > x + tol:
                self.fail(f"{what}: gap between {var}={x} and {var}={a}", item)
            x = b
        if abs(x - hi) > tol:
            self.fail(f"{what}: pieces end at {x}, expected {hi}", seq)
        # snap endpoints so the model sees exactly contiguous pieces
        fixed, x = [], lo
        for k, (a, b, e, _) in enumerate(out):
            fixed.append((x, hi if k == len(out) - 1 else b, e))
            x = b
        return fixed

    def nonlinearity(self, node: _Node) -> Nonlinearity:
        keys = {"expr", "zero_limit", "inf_liminf", "inf_limsup", "smooth_at_zero", "regular_oscillation",
                "derivative_bound"}
        m = self.mapping(node, "g", keys, {"expr"})
        e = self.expr(m["expr"], "s", "g.expr")
        decl = {}
        for key, attr in (("zero_limit", "declared_zero_limit"), ("inf_liminf", "declared_inf_liminf"),
                          ("inf_limsup", "declared_inf_limsup"), ("derivative_bound", "derivative_bound")):
            if key in m:
                decl[attr] = self.number(m[key], f"g.{key}")
        for key in ("smooth_at_zero", "regular_oscillation"):
            if key in m:
                decl[key] = self.boolean(m[key], f"g.{key}")
        return Nonlinearity(e, **decl)


def _compose(text: str, path: str | None) -> _Node:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ProblemFileError(f"not valid YAML/JSON: {getattr(exc, 'problem', exc)}", path,
                               mark.line + 1 if mark else None) from None
    if root is None:
        raise ProblemFileError("file is empty", path)
    return _wrap(root)


def parse_problem(text: str, path: str | None = None) -> ProblemSpec:
    r = _Reader(path)
    root = _compose(text, path)
    m = r.mapping(root, "problem", {"bc", "T", "nu", "weight", "g", "damping", "name"}, {"bc", "weight", "g"})
    bc_node = m["bc"]
    bc = str(bc_node.value).strip().lower()
    if bc not in ("neumann", "periodic"):
        r.fail(f"bc must be 'neumann' or 'periodic', got {bc_node.value!r}", bc_node)
    T = r.number(m["T"], "T", allow_inf=False) if "T" in m else None
    wm = m["weight"]
    if T is None:
        seq = wm.value.get("pieces") if isinstance(wm.value, dict) else None
        if seq is None or not isinstance(seq.value, list) or not seq.value:
            r.fail("T is required when the weight is a single expression", root)
        T = max(r.number(it.value["to"], "to") for it in seq.value if isinstance(it.value, dict) and "to" in it.value)
    if not T > 0:
        r.fail("T must be positive", m.get("T", root))
    pieces = r.pieces(wm, "x", 0.0, T, "weight")
    nu = r.number(m["nu"], "nu", allow_inf=False) if "nu" in m else 1.0
    g = r.nonlinearity(m["g"])
    damping = None
    if "damping" in m:
        dm = r.mapping(m["damping"], "damping", {"expr", "bound"}, {"expr"})
        bound = r.number(dm["bound"], "damping.bound") if "bound" in dm else None
        damping = Damping(r.expr(dm["expr"], "s", "damping.expr"), bound)
    meta = {"name": str(m["name"].value)} if "name" in m else {}
    try:
        return ProblemSpec(bc, Weight.piecewise(pieces, T), g, nu, damping, meta)
    except ModelError as exc:
        r.fail(str(exc), root)


def parse_annulus(text: str, path: str | None = None):
    from .applications import AnnulusSpec

    r = _Reader(path)
    root = _compose(text, path)
    m = r.mapping(root, "annulus", {"N", "R1", "R2", "nu", "Q", "g", "name"}, {"N", "R1", "R2", "Q", "g"})
    N = r.number(m["N"], "N", allow_inf=False)
    if N != int(N):
        r.fail("N must be an integer", m["N"])
    R1 = r.number(m["R1"], "R1", allow_inf=False)
    R2 = r.number(m["R2"], "R2", allow_inf=False)
    if not 0 < R1 < R2:
        r.fail("radii must satisfy 0 < R1 < R2", m["R1"])
    pieces = r.pieces(m["Q"], "r", R1, R2, "Q")
    nu = r.number(m["nu"], "nu", allow_inf=False) if "nu" in m else 1.0
    g = r.nonlinearity(m["g"])
    try:
        return AnnulusSpec(int(N), R1, R2, tuple(Piece(a, b, e) for a, b, e in pieces), g, nu)
    except ModelError as exc:
        r.fail(str(exc), root)


def load_problem(path) -> ProblemSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_problem(text, str(path))


def load_annulus(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_annulus(text, str(path))


def _num_out(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def problem_to_dict(p: ProblemSpec) -> dict:
    out = {"bc": p.bc, "T": p.T, "nu": p.nu,
           "weight": {"pieces": [{"from": q.lo, "to": q.hi, "expr": str(q.expr)} for q in p.weight.pieces]},
           "g": {k: _num_out(v) if isinstance(v, float) else v for k, v in p.g.to_dict().items()}}
    if p.damping is not None:
        out["damping"] = {"expr": str(p.damping.expr)}
        if p.damping.bound is not None:
            out["damping"]["bound"] = _num_out(p.damping.bound)
    return out


def dump_problem(p: ProblemSpec) -> str:
    return yaml.safe_dump(problem_to_dict(p), sort_keys=False, width=1000)
