"""Minimal conic-program IR and an interior-point solver adapter.

A program is a linear objective over scalar variables plus a list of cone
constraints.  Each constraint holds one or more affine expressions
e(x) = coef . x[idx] + const and a cone tag giving their joint meaning:

    zero    every expression equals 0
    nonneg  every expression is >= 0
    soc     exprs[0] >= || (exprs[1], ..., exprs[d-1]) ||_2, d >= 2
    exp     exactly three expressions (a, b, c) with b e^{a/b} <= c (closure)

The IR is backend-neutral; :func:`solve` adapts it to the Clarabel
interior-point solver.  Programs round-trip through a line-oriented text
format (see :func:`dump_program`) used for regression fixtures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

CONES = ("zero", "nonneg", "soc", "exp")


@dataclass
class AffineExpr:
    """coef . x[idx] + const over the program's variables."""

    idx: np.ndarray
    coef: np.ndarray
    const: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return float(self.coef @ x[self.idx] + self.const)


@dataclass
class ConeConstraint:
    cone: str
    exprs: list[AffineExpr]
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.exprs)


@dataclass
class ConicProgram:
    num_vars: int
    obj_coef: np.ndarray
    obj_const: float
    constraints: list[ConeConstraint]
    lower: np.ndarray
    upper: np.ndarray
    var_names: list[str]

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.obj_coef @ x + self.obj_const)

    def pretty(self) -> str:
        """Human-readable dump for debugging."""
        def term(e: AffineExpr) -> str:
            parts = " + ".join(f"{c:.6g}*{self.var_names[i]}" for i, c in zip(e.idx, e.coef))
            if e.const or not parts:
                parts = (parts + f" + {e.const:.6g}") if parts else f"{e.const:.6g}"
            return parts

        lines = [f"minimize  {term(AffineExpr(np.nonzero(self.obj_coef)[0], self.obj_coef[np.nonzero(self.obj_coef)[0]], self.obj_const))}"]
        for c in self.constraints:
            label = f" [{c.name}]" if c.name else ""
            if c.cone == "zero":
                for e in c.exprs:
                    lines.append(f"  0 == {term(e)}{label}")
            elif c.cone == "nonneg":
                for e in c.exprs:
                    lines.append(f"  0 <= {term(e)}{label}")
            elif c.cone == "soc":
                lines.append(f"  soc[{c.dim}]: {term(c.exprs[0])} >= ||({'; '.join(term(e) for e in c.exprs[1:])})||{label}")
            else:
                a, b, z = c.exprs
                lines.append(f"  exp: ({term(a)}, {term(b)}, {term(z)}) in Kexp{label}")
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if lo != -np.inf or hi != np.inf:
                lines.append(f"  {lo:.6g} <= {self.var_names[i]} <= {hi:.6g}")
        return "\n".join(lines)


class ProgramBuilder:
    """Incremental construction helper used by the subproblem assemblers."""

    def __init__(self):
        self._names: list[str] = []
        self._obj: list[tuple[int, float]] = []
        self.obj_const = 0.0
        self._cons: list[ConeConstraint] = []

    def add_vars(self, count: int, name: str) -> int:
        """Declare a block of variables; returns the offset of its first index."""
        off = len(self._names)
        if count == 1:
            self._names.append(name)
        else:
            self._names.extend(f"{name}[{i}]" for i in range(count))
        return off

    @property
    def num_vars(self) -> int:
        return len(self._names)

    def add_obj(self, idx, coef) -> None:
        idx = np.atleast_1d(idx)
        coef = np.atleast_1d(coef)
        self._obj.extend(zip(map(int, idx), map(float, coef)))

    def expr(self, idx, coef, const: float = 0.0) -> AffineExpr:
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        coef = np.atleast_1d(np.asarray(coef, dtype=float))
        return AffineExpr(idx=idx, coef=coef, const=float(const))

    def add_constraint(self, cone: str, exprs: list[AffineExpr], name: str = "") -> None:
        self._cons.append(ConeConstraint(cone=cone, exprs=list(exprs), name=name))

    def build(self) -> ConicProgram:
        n = self.num_vars
        c = np.zeros(n)
        for i, v in self._obj:
            c[i] += v
        return ConicProgram(
            num_vars=n, obj_coef=c, obj_const=self.obj_const,
            constraints=self._cons,
            lower=np.full(n, -np.inf), upper=np.full(n, np.inf),
            var_names=self._names,
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    ok: bool
    errors: list[str]
    num_vars: int
    num_constraints: int
    num_scalar_rows: int
    cone_counts: dict[str, int]


def validate(program: ConicProgram) -> Diagnostics:
    """Structural checks: index ranges, cone arities, finite data."""
    errors: list[str] = []
    counts = {c: 0 for c in CONES}
    rows = 0
    if not np.all(np.isfinite(program.obj_coef)) or not math.isfinite(program.obj_const):
        errors.append("objective contains non-finite coefficients")
    for ci, con in enumerate(program.constraints):
        label = con.name or f"#{ci}"
        if con.cone not in CONES:
            errors.append(f"constraint {label}: unknown cone {con.cone!r}")
            continue
        counts[con.cone] += 1
        rows += con.dim
        if con.cone == "soc" and con.dim < 2:
            errors.append(f"constraint {label}: soc needs dim >= 2, got {con.dim}")
        if con.cone == "exp" and con.dim != 3:
            errors.append(f"constraint {label}: exp cone needs exactly 3 exprs, got {con.dim}")
        for e in con.exprs:
            if e.idx.size != e.coef.size:
                errors.append(f"constraint {label}: index/coefficient length mismatch")
            if e.idx.size and (e.idx.min() < 0 or e.idx.max() >= program.num_vars):
                errors.append(f"constraint {label}: variable index out of range")
            if not np.all(np.isfinite(e.coef)) or not math.isfinite(e.const):
                errors.append(f"constraint {label}: non-finite coefficients")
    return Diagnostics(ok=not errors, errors=errors, num_vars=program.num_vars,
                       num_constraints=len(program.constraints), num_scalar_rows=rows,
                       cone_counts=counts)


# ---------------------------------------------------------------------------
# Solving
# ---------------------------------------------------------------------------

@dataclass
class Solution:
    status: str            # optimal | near-optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray
    objective: float
    primal_residual: float
    gap_rel: float
    iterations: int

    @property
    def usable(self) -> bool:
        return self.status in ("optimal", "near-optimal")


def primal_residual(program: ConicProgram, x: np.ndarray) -> float:
    """Worst cone violation of x, evaluated directly on the IR rows."""
    worst = 0.0
    for con in program.constraints:
        vals = np.array([e.value(x) for e in con.exprs])
        if con.cone == "zero":
            worst = max(worst, float(np.max(np.abs(vals))) if vals.size else 0.0)
        elif con.cone == "nonneg":
            worst = max(worst, float(np.max(np.maximum(-vals, 0.0))) if vals.size else 0.0)
        elif con.cone == "soc":
            worst = max(worst, max(0.0, float(np.linalg.norm(vals[1:]) - vals[0])))
        else:
            a, b, z = vals
            if b > 1e-300:
                worst = max(worst, max(0.0, b * math.exp(min(a / b, 700.0)) - z))
            else:
                worst = max(worst, max(0.0, a), max(0.0, -z), max(0.0, -b))
    finite_lo = program.lower > -np.inf
    finite_hi = program.upper < np.inf
    if np.any(finite_lo):
        worst = max(worst, float(np.max(np.maximum(program.lower[finite_lo] - x[finite_lo], 0.0))))
    if np.any(finite_hi):
        worst = max(worst, float(np.max(np.maximum(x[finite_hi] - program.upper[finite_hi], 0.0))))
    return worst


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "near-optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def solve(program: ConicProgram, settings=None) -> Solution:
    """Solve the program with Clarabel; never raises on numerical failure."""
    import clarabel

    from .config import SolverSettings
    settings = settings or SolverSettings()

    diag = validate(program)
    if not diag.ok:
        raise ValueError("invalid program: " + "; ".join(diag.errors))

    rows_i: list[int] = []
    cols_i: list[int] = []
    data: list[float] = []
    b: list[float] = []
    cones = []
    r = 0

    def push_expr(e: AffineExpr):
        nonlocal r
        rows_i.extend([r] * e.idx.size)
        cols_i.extend(e.idx.tolist())
        data.extend((-e.coef).tolist())
        b.append(e.const)
        r += 1

    for con in program.constraints:
        for e in con.exprs:
            push_expr(e)
        if con.cone == "zero":
            cones.append(clarabel.ZeroConeT(con.dim))
        elif con.cone == "nonneg":
            cones.append(clarabel.NonnegativeConeT(con.dim))
        elif con.cone == "soc":
            cones.append(clarabel.SecondOrderConeT(con.dim))
        else:
            cones.append(clarabel.ExponentialConeT())

    nb = 0
    for i in range(program.num_vars):
        if program.lower[i] > -np.inf:
            push_expr(AffineExpr(np.array([i]), np.array([1.0]), -float(program.lower[i])))
            nb += 1
        if program.upper[i] < np.inf:
            push_expr(AffineExpr(np.array([i]), np.array([-1.0]), float(program.upper[i])))
            nb += 1
    if nb:
        cones.append(clarabel.NonnegativeConeT(nb))

    A = sparse.coo_matrix((data, (rows_i, cols_i)), shape=(r, program.num_vars)).tocsc()
    P = sparse.csc_matrix((program.num_vars, program.num_vars))
    q = np.asarray(program.obj_coef, dtype=float)

    cfg = clarabel.DefaultSettings()
    cfg.verbose = False
    cfg.tol_feas = settings.feas_tol
    cfg.tol_gap_abs = settings.gap_abs
    cfg.tol_gap_rel = settings.gap_rel
    cfg.max_iter = settings.max_iter

    try:
        solver = clarabel.DefaultSolver(P, q, A, np.asarray(b), cones, cfg)
        raw = solver.solve()
    except BaseException:
        return Solution(status="iteration-limit", x=np.zeros(program.num_vars),
                        objective=math.nan, primal_residual=math.inf,
                        gap_rel=math.inf, iterations=0)

    status = _STATUS_MAP.get(str(raw.status), "iteration-limit")
    x = np.asarray(raw.x, dtype=float)
    if x.size != program.num_vars or not np.all(np.isfinite(x)):
        return Solution(status="iteration-limit", x=np.zeros(program.num_vars),
                        objective=math.nan, primal_residual=math.inf,
                        gap_rel=math.inf, iterations=int(raw.iterations))
    obj = program.objective_value(x)
    dual = float(raw.obj_val_dual) + program.obj_const
    gap = abs(obj - dual) / max(1.0, abs(obj))
    res = primal_residual(program, x)
    if status == "iteration-limit" and res <= max(1e-6, settings.feas_tol) \
            and gap <= max(1e-5, 10.0 * settings.gap_rel):
        # stalled on the dual side but primal-usable; only primal values are
        # ever consumed downstream
        status = "near-optimal"
    if status not in ("optimal", "near-optimal"):
        res = math.inf
    return Solution(status=status, x=x, objective=obj, primal_residual=res,
                    gap_rel=gap, iterations=int(raw.iterations))


# ---------------------------------------------------------------------------
# Text round-trip
# ---------------------------------------------------------------------------

def _fmt_expr(e: AffineExpr) -> str:
    terms = " ".join(f"{int(i)}:{float(c)!r}" for i, c in zip(e.idx, e.coef))
    return f"{float(e.const)!r}" + (f" {terms}" if terms else "")


def _parse_expr(s: str) -> AffineExpr:
    parts = s.split()
    const = float(parts[0])
    idx, coef = [], []
    for t in parts[1:]:
        i, c = t.split(":")
        idx.append(int(i))
        coef.append(float(c))
    return AffineExpr(np.asarray(idx, dtype=int), np.asarray(coef, dtype=float), const)


def dump_program(program: ConicProgram) -> str:
    """Serialize to the sparse text format, one constraint per line.

    Line types: ``vars N``, ``name I NAME``, ``objective CONST I:COEF ...``,
    ``bound I LO HI`` and ``row CONE | EXPR | EXPR ...`` where each EXPR is
    ``CONST I:COEF I:COEF ...``.
    """
    out = ["conic-program v1", f"vars {program.num_vars}"]
    for i, nm in enumerate(program.var_names):
        if nm and nm != f"x{i}":
            out.append(f"name {i} {nm}")
    nz = np.nonzero(program.obj_coef)[0]
    out.append("objective " + _fmt_expr(AffineExpr(nz, program.obj_coef[nz], program.obj_const)))
    for i in range(program.num_vars):
        lo, hi = program.lower[i], program.upper[i]
        if lo != -np.inf or hi != np.inf:
            out.append(f"bound {i} {float(lo)!r} {float(hi)!r}")
    for con in program.constraints:
        tag = con.name.replace(" ", "_") if con.name else "-"
        body = " | ".join(_fmt_expr(e) for e in con.exprs)
        out.append(f"row {con.cone} {tag} | {body}")
    return "\n".join(out) + "\n"


def load_program(text: str) -> ConicProgram:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines[0].strip() != "conic-program v1":
        raise ValueError(f"unsupported program format header {lines[0]!r}")
    num_vars = 0
    names: dict[int, str] = {}
    obj = AffineExpr(np.array([], dtype=int), np.array([]), 0.0)
    bounds: list[tuple[int, float, float]] = []
    cons: list[ConeConstraint] = []
    for ln in lines[1:]:
        kind, rest = ln.split(None, 1)
        if kind == "vars":
            num_vars = int(rest)
        elif kind == "name":
            i, nm = rest.split(None, 1)
            names[int(i)] = nm
        elif kind == "objective":
            obj = _parse_expr(rest)
        elif kind == "bound":
            i, lo, hi = rest.split()
            bounds.append((int(i), float(lo), float(hi)))
        elif kind == "row":
            head, body = rest.split("|", 1)
            cone, tag = head.split()
            exprs = [_parse_expr(s) for s in body.split("|")]
            cons.append(ConeConstraint(cone=cone, exprs=exprs,
                                       name="" if tag == "-" else tag))
        else:
            raise ValueError(f"unknown line kind {kind!r}")
    c = np.zeros(num_vars)
    c[obj.idx] = obj.coef
    lower = np.full(num_vars, -np.inf)
    upper = np.full(num_vars, np.inf)
    for i, lo, hi in bounds:
        lower[i], upper[i] = lo, hi
    var_names = [names.get(i, f"x{i}") for i in range(num_vars)]
    return ConicProgram(num_vars=num_vars, obj_coef=c, obj_const=obj.const,
                        constraints=cons, lower=lower, upper=upper, var_names=var_names)
