"""Generic mixed-integer linear program container.

Rows are stored sparsely as {variable id: coefficient} maps. The model
is append-only while building and treated as immutable during solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
EQ = "="
GE = ">="

EPS_FEAS = 1e-6
EPS_INT = 1e-6


class ModelError(ValueError):
    """Invalid model construction (bad bounds, unknown variable, ...)."""


@dataclass
class Variable:
    index: int
    lo: float
    hi: float
    kind: str
    name: str


@dataclass
class Constraint:
    index: int
    coeffs: dict           # var index -> coefficient
    sense: str
    rhs: float
    name: str


@dataclass
class Violation:
    """One constraint/bound/integrality violation found by check_feasible."""

    kind: str              # "row", "bound", or "integrality"
    index: int             # constraint or variable index
    name: str
    residual: float        # positive amount by which the requirement fails

    def __str__(self):
        return f"{self.kind} {self.name}: residual {self.residual:.3e}"


class MilpModel:
    """Sparse MILP: variables with bounds, linear rows, linear objective."""

    def __init__(self, name="milp"):
        self.name = name
        self.variables = []
        self.constraints = []
        self.obj_sense = "min"
        self.obj_coeffs = {}

    @property
    def n_vars(self):
        return len(self.variables)

    @property
    def n_cons(self):
        return len(self.constraints)

    def add_variable(self, lo, hi, kind=CONTINUOUS, name=None):
        """Declare a variable and return its index."""
        if not (lo <= hi):
            raise ModelError(f"variable '{name}': bounds [{lo}, {hi}] "
                             "have lo > hi")
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind '{kind}'")
        if kind == BINARY and (lo < 0 or hi > 1):
            raise ModelError(f"binary variable '{name}' must have bounds "
                             "within [0, 1]")
        idx = len(self.variables)
        self.variables.append(
            Variable(idx, float(lo), float(hi), kind,
                     name if name else f"x{idx}"))
        return idx

    def add_constraint(self, coeffs, sense, rhs, name=None):
        """Append a sparse row; returns the constraint index.

        ``coeffs`` maps variable index to coefficient. Zero coefficients
        are dropped; duplicate indices are not allowed in the input map.
        """
        if sense not in (LE, EQ, GE):
            raise ModelError(f"unknown sense '{sense}'")
        clean = {}
        for j, v in coeffs.items():
            if j < 0 or j >= len(self.variables):
                raise ModelError(f"constraint '{name}': unknown variable "
                                 f"id {j}")
            if v != 0.0:
                clean[int(j)] = float(v)
        idx = len(self.constraints)
        self.constraints.append(
            Constraint(idx, clean, sense, float(rhs),
                       name if name else f"c{idx}"))
        return idx

    def set_objective(self, sense, coeffs):
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be min or max, got "
                             f"'{sense}'")
        for j in coeffs:
            if j < 0 or j >= len(self.variables):
                raise ModelError(f"objective: unknown variable id {j}")
        self.obj_sense = sense
        self.obj_coeffs = {int(j): float(v) for j, v in coeffs.items()
                           if v != 0.0}

    def objective_value(self, x):
        return sum(v * x[j] for j, v in self.obj_coeffs.items())

    def binary_indices(self):
        return [v.index for v in self.variables if v.kind == BINARY]

    def bounds_arrays(self):
        lo = np.array([v.lo for v in self.variables])
        hi = np.array([v.hi for v in self.variables])
        return lo, hi

    def row_activity(self, con, x):
        return sum(v * x[j] for j, v in con.coeffs.items())


@dataclass
class MilpSolution:
    """Solver output: status, assignment, objective, and search diagnostics."""

    status: str                    # "optimal", "infeasible", "iteration-limit"
    x: np.ndarray = None
    objective: float = np.nan
    best_bound: float = np.nan
    gap: float = np.nan
    nodes: int = 0
    bound_log: list = field(default_factory=list)
    infeasible_rows: list = field(default_factory=list)


def check_feasible(model, x, eps_feas=EPS_FEAS, eps_int=EPS_INT):
    """Evaluate every row, bound, and integrality requirement at ``x``.

    Returns the list of violations (empty iff feasible within tolerance).
    Raises ModelError if the assignment does not cover all variables.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != model.n_vars:
        raise ModelError(f"assignment covers {x.shape[0]} of "
                         f"{model.n_vars} variables")
    out = []
    for v in model.variables:
        resid = max(v.lo - x[v.index], x[v.index] - v.hi)
        if resid > eps_feas:
            out.append(Violation("bound", v.index, v.name, resid))
        if v.kind == BINARY:
            frac = abs(x[v.index] - round(x[v.index]))
            if frac > eps_int:
                out.append(Violation("integrality", v.index, v.name, frac))
    for con in model.constraints:
        act = model.row_activity(con, x)
        if con.sense == LE:
            resid = act - con.rhs
        elif con.sense == GE:
            resid = con.rhs - act
        else:
            resid = abs(act - con.rhs)
        if resid > eps_feas:
            out.append(Violation("row", con.index, con.name, resid))
    return out


# ---------------------------------------------------------------------------
# MPS export (fixed format, with OBJSENSE extension for max problems)

def _mps_name(prefix, idx):
    return f"{prefix}{idx:07d}"


def _mps_num(v):
    s = f"{v:.10g}"
    return s if len(s) <= 12 else f"{v:.6g}"


def export_mps(model):
    """Render the model as fixed-format MPS text.

    Sections: NAME, OBJSENSE, ROWS, COLUMNS (with INTORG/INTEND markers
    around binary columns), RHS, BOUNDS, ENDATA. Row i is named R<i>,
    column j is named X<j>; the original names survive in comments.
    """
    lines = [f"NAME          {model.name[:60]}"]
    lines.append("OBJSENSE")
    lines.append(f"    {'MAX' if model.obj_sense == 'max' else 'MIN'}")
    lines.append("ROWS")
    lines.append(" N  OBJ")
    sense_tag = {LE: "L", GE: "G", EQ: "E"}
    for con in model.constraints:
        lines.append(f" {sense_tag[con.sense]}  {_mps_name('R', con.index)}")

    # column-major entries: objective first, then each row
    col_entries = {j: [] for j in range(model.n_vars)}
    for j, v in model.obj_coeffs.items():
        col_entries[j].append(("OBJ", v))
    for con in model.constraints:
        rname = _mps_name("R", con.index)
        for j, v in con.coeffs.items():
            col_entries[j].append((rname, v))

    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for v in model.variables:
        entries = col_entries[v.index]
        want_int = v.kind == BINARY
        if want_int and not in_int:
            lines.append(f"    MARKER{marker:04d}  'MARKER'"
                         f"                 'INTORG'")
            marker += 1
            in_int = True
        elif not want_int and in_int:
            lines.append(f"    MARKER{marker:04d}  'MARKER'"
                         f"                 'INTEND'")
            marker += 1
            in_int = False
        cname = _mps_name("X", v.index)
        for rname, val in entries:
            lines.append(f"    {cname:<8}  {rname:<8}  {_mps_num(val)}")
        if not entries:
            # keep unreferenced columns visible to importers
            lines.append(f"    {cname:<8}  OBJ       0")
    if in_int:
        lines.append(f"    MARKER{marker:04d}  'MARKER'"
                     f"                 'INTEND'")

    lines.append("RHS")
    for con in model.constraints:
        if con.rhs != 0.0:
            lines.append(f"    RHS       {_mps_name('R', con.index):<8}  "
                         f"{_mps_num(con.rhs)}")

    lines.append("BOUNDS")
    for v in model.variables:
        cname = _mps_name("X", v.index)
        if v.kind == BINARY and v.lo == 0.0 and v.hi == 1.0:
            lines.append(f" BV BND       {cname}")
            continue
        if v.lo == v.hi:
            lines.append(f" FX BND       {cname:<8}  {_mps_num(v.lo)}")
            continue
        if np.isinf(v.lo) and np.isinf(v.hi):
            lines.append(f" FR BND       {cname}")
            continue
        if np.isneginf(v.lo):
            lines.append(f" MI BND       {cname}")
        elif v.lo != 0.0:
            lines.append(f" LO BND       {cname:<8}  {_mps_num(v.lo)}")
        if not np.isinf(v.hi):
            lines.append(f" UP BND       {cname:<8}  {_mps_num(v.hi)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def format_model(model):
    """Human-readable dump of variables, rows, and the objective."""
    out = [f"model {model.name}: {model.n_vars} variables, "
           f"{model.n_cons} constraints"]
    terms = sorted(model.obj_coeffs.items())
    obj = " + ".join(f"{v:g}*{model.variables[j].name}" for j, v in terms)
    out.append(f"{model.obj_sense} {obj}")
    for v in model.variables:
        tag = "bin" if v.kind == BINARY else "   "
        out.append(f"  {v.name} {tag} in [{v.lo:g}, {v.hi:g}]")
    for con in model.constraints:
        body = " + ".join(f"{v:g}*{model.variables[j].name}"
                          for j, v in sorted(con.coeffs.items()))
        out.append(f"  {con.name}: {body} {con.sense} {con.rhs:g}")
    return "\n".join(out)
