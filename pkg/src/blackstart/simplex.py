"""Bounded-variable revised simplex, the LP kernel of the embedded solver.

Works on a dense standard form min c.x, A x + s = b, lo <= x <= hi,
with one slack per row (equality rows get a slack fixed at zero). The
basis inverse is maintained explicitly with rank-one updates and
periodic refactorization. Dantzig pricing by default; Bland's rule
engages after a degenerate streak to break cycling. Phase 1 drives a
composite infeasibility measure to zero from any starting basis, which
also makes warm starts after bound changes cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .milp import LE, GE

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

AT_LO = 0
AT_UP = 1
BASIC = 2
FREE_NB = 3

_FEAS_TOL = 1e-9
_DJ_TOL = 1e-9
_PIVOT_TOL = 1e-10
_REFACTOR_EVERY = 100
_BLAND_AFTER = 120


class LpNumericalError(RuntimeError):
    """The LP kernel failed numerically; results would be unreliable."""


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = None          # structural variables only
    objective: float = np.nan     # in the model's own sense
    basis: np.ndarray = None      # snapshot for warm starts
    vstat: np.ndarray = None
    iterations: int = 0
    infeasible_rows: list = field(default_factory=list)


class StandardForm:
    """Dense A | slack augmentation of a MilpModel, binaries relaxed.

    Built once per model and shared read-only across branch-and-bound
    nodes; per-node bound changes are passed to ``solve_relaxation``.
    """

    def __init__(self, model):
        m, n = model.n_cons, model.n_vars
        self.m, self.n_struct = m, n
        self.n_total = n + m
        self.a = np.zeros((m, self.n_total))
        self.b = np.zeros(m)
        slo = np.zeros(m)
        shi = np.zeros(m)
        for con in model.constraints:
            i = con.index
            for j, v in con.coeffs.items():
                self.a[i, j] = v
            self.a[i, n + i] = 1.0
            self.b[i] = con.rhs
            if con.sense == LE:
                shi[i] = np.inf
            elif con.sense == GE:
                slo[i] = -np.inf
        lo, hi = model.bounds_arrays()
        self.lo = np.concatenate([lo, slo])
        self.hi = np.concatenate([hi, shi])
        self.maximize = model.obj_sense == "max"
        c = np.zeros(self.n_total)
        for j, v in model.obj_coeffs.items():
            c[j] = -v if self.maximize else v
        self.c = c
        self.row_names = [con.name for con in model.constraints]


class _Simplex:
    def __init__(self, sf, lo, hi, warm=None):
        self.sf = sf
        self.lo = lo
        self.hi = hi
        self.m = sf.m
        self.n = sf.n_total
        self.iterations = 0
        self._since_refactor = 0
        self._degenerate_streak = 0
        self._bland = False
        self._infeasible_rows = []
        if warm is not None and warm[0] is not None:
            self.basis = warm[0].copy()
            self.vstat = warm[1].copy()
            self._repair_nonbasic()
        else:
            self.basis = np.arange(sf.n_struct, sf.n_struct + self.m)
            self.vstat = np.full(self.n, AT_LO, dtype=np.int8)
            self.vstat[~np.isfinite(lo) & np.isfinite(hi)] = AT_UP
            self.vstat[~np.isfinite(lo) & ~np.isfinite(hi)] = FREE_NB
            self.vstat[self.basis] = BASIC
        self.x = np.zeros(self.n)
        self._refactor()

    # -- linear algebra ------------------------------------------------------
    def _refactor(self):
        bmat = self.sf.a[:, self.basis]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise LpNumericalError("singular basis matrix") from exc
        self._since_refactor = 0
        self._recompute_x()

    def _repair_nonbasic(self):
        """Re-anchor nonbasic variables after external bound changes."""
        nb = self.vstat != BASIC
        for j in np.flatnonzero(nb):
            if self.vstat[j] == AT_LO and not np.isfinite(self.lo[j]):
                self.vstat[j] = AT_UP if np.isfinite(self.hi[j]) else FREE_NB
            elif self.vstat[j] == AT_UP and not np.isfinite(self.hi[j]):
                self.vstat[j] = AT_LO if np.isfinite(self.lo[j]) else FREE_NB

    def _recompute_x(self):
        xnb = np.zeros(self.n)
        at_lo = self.vstat == AT_LO
        at_up = self.vstat == AT_UP
        xnb[at_lo] = self.lo[at_lo]
        xnb[at_up] = self.hi[at_up]
        xb = self.binv @ (self.sf.b - self.sf.a @ xnb)
        self.x = xnb
        self.x[self.basis] = xb

    # -- pricing ---------------------------------------------------------------
    def _infeasibility(self):
        xb = self.x[self.basis]
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]
        return float(np.sum(np.maximum(lo_b - xb, 0.0))
                     + np.sum(np.maximum(xb - hi_b, 0.0)))

    def _price(self, phase1):
        if phase1:
            xb = self.x[self.basis]
            cb = np.zeros(self.m)
            cb[xb < self.lo[self.basis] - _FEAS_TOL] = -1.0
            cb[xb > self.hi[self.basis] + _FEAS_TOL] = 1.0
            d = -((cb @ self.binv) @ self.sf.a)
        else:
            y = self.sf.c[self.basis] @ self.binv
            d = self.sf.c - y @ self.sf.a
        movable = (self.vstat != BASIC) & (self.lo != self.hi)
        can_up = (self.vstat == AT_LO) | (self.vstat == FREE_NB)
        can_dn = (self.vstat == AT_UP) | (self.vstat == FREE_NB)
        improving = movable & (((d < -_DJ_TOL) & can_up)
                               | ((d > _DJ_TOL) & can_dn))
        idx = np.flatnonzero(improving)
        if idx.size == 0:
            return -1, 0
        if self._bland:
            j = int(idx[0])
        else:
            j = int(idx[np.argmax(np.abs(d[idx]))])
        sigma = 1 if (d[j] < -_DJ_TOL and self.vstat[j] != AT_UP) else -1
        return j, sigma

    # -- ratio test ---------------------------------------------------------
    def _ratio(self, j, sigma, phase1):
        """Returns (kind, r, to_bound, t, w); kind in {pivot, flip, none}."""
        w = self.binv @ self.sf.a[:, j]
        delta = -sigma * w
        xb = self.x[self.basis]
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]

        t = np.full(self.m, np.inf)
        to_bound = np.zeros(self.m, dtype=np.int8)
        for i in np.flatnonzero(np.abs(delta) > _PIVOT_TOL):
            di = delta[i]
            if phase1 and xb[i] < lo_b[i] - _FEAS_TOL:
                if di > 0:   # rises toward its violated lower bound
                    t[i] = (lo_b[i] - xb[i]) / di
                    to_bound[i] = AT_LO
            elif phase1 and xb[i] > hi_b[i] + _FEAS_TOL:
                if di < 0:
                    t[i] = (hi_b[i] - xb[i]) / di
                    to_bound[i] = AT_UP
            else:
                if di > 0 and np.isfinite(hi_b[i]):
                    t[i] = max((hi_b[i] - xb[i]) / di, 0.0)
                    to_bound[i] = AT_UP
                elif di < 0 and np.isfinite(lo_b[i]):
                    t[i] = max((lo_b[i] - xb[i]) / di, 0.0)
                    to_bound[i] = AT_LO

        t_flip = np.inf
        if np.isfinite(self.lo[j]) and np.isfinite(self.hi[j]):
            t_flip = self.hi[j] - self.lo[j]
        t_rows = float(t.min(initial=np.inf))
        if not np.isfinite(min(t_rows, t_flip)):
            return "none", -1, 0, np.inf, w
        if t_flip <= t_rows:
            return "flip", -1, 0, t_flip, w
        cand = np.flatnonzero(t <= t_rows + 1e-9)
        if self._bland:
            r = int(cand[np.argmin(self.basis[cand])])
        else:
            r = int(cand[np.argmax(np.abs(delta[cand]))])
        return "pivot", r, int(to_bound[r]), float(max(t[r], 0.0)), w

    # -- pivots ---------------------------------------------------------------
    def _apply_step(self, j, sigma, t, w):
        self.x[self.basis] += (-sigma * w) * t
        if self.vstat[j] == AT_LO:
            self.x[j] = self.lo[j] + t
        elif self.vstat[j] == AT_UP:
            self.x[j] = self.hi[j] - t
        else:
            self.x[j] += sigma * t

    def _pivot(self, r, j, to_bound, w):
        leave = self.basis[r]
        self.vstat[leave] = to_bound
        self.x[leave] = (self.lo[leave] if to_bound == AT_LO
                         else self.hi[leave])
        self.basis[r] = j
        self.vstat[j] = BASIC
        if abs(w[r]) < _PIVOT_TOL:
            raise LpNumericalError("pivot element vanished")
        br = self.binv[r] / w[r]
        self.binv -= np.outer(w, br)
        self.binv[r] = br
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            self._refactor()

    # -- main loop -----------------------------------------------------------
    def run(self):
        max_iter = 60 * (self.m + self.n) + 20000
        phase1 = True
        obj_prev = np.inf
        while True:
            if phase1 and self._infeasibility() <= _FEAS_TOL * max(1, self.m):
                phase1 = False
                obj_prev = np.inf
                self._degenerate_streak = 0
                self._bland = False
            self.iterations += 1
            if self.iterations > max_iter:
                raise LpNumericalError(
                    f"no convergence after {self.iterations} pivots")
            j, sigma = self._price(phase1)
            if j < 0:
                if phase1:
                    self._collect_infeasible()
                    return INFEASIBLE
                return OPTIMAL
            kind, r, to_bound, t, w = self._ratio(j, sigma, phase1)
            if kind == "none":
                if phase1:
                    raise LpNumericalError("phase-1 ratio test unbounded")
                return UNBOUNDED
            self._apply_step(j, sigma, t, w)
            if kind == "flip":
                self.vstat[j] = AT_UP if self.vstat[j] == AT_LO else AT_LO
                self.x[j] = (self.hi[j] if self.vstat[j] == AT_UP
                             else self.lo[j])
            else:
                self._pivot(r, j, to_bound, w)
            obj_now = (self._infeasibility() if phase1
                       else float(self.sf.c @ self.x))
            if obj_now >= obj_prev - 1e-12:
                self._degenerate_streak += 1
                if self._degenerate_streak > _BLAND_AFTER:
                    self._bland = True
            else:
                self._degenerate_streak = 0
                self._bland = False
            obj_prev = obj_now

    def _collect_infeasible(self):
        rows = []
        xb = self.x[self.basis]
        for i in range(self.m):
            v = self.basis[i]
            amt = max(self.lo[v] - xb[i], xb[i] - self.hi[v])
            if amt > 10 * _FEAS_TOL:
                if v >= self.sf.n_struct:
                    rows.append((self.sf.row_names[v - self.sf.n_struct],
                                 float(amt)))
                else:
                    rows.append((f"var{v}", float(amt)))
        self._infeasible_rows = rows


def solve_relaxation(sf, lo=None, hi=None, warm=None):
    """Solve the LP relaxation of a prepared StandardForm.

    ``lo``/``hi`` override the stored bounds (length n_total arrays);
    ``warm`` is an optional (basis, vstat) pair from a related solve.
    """
    lo = sf.lo if lo is None else lo
    hi = sf.hi if hi is None else hi
    try:
        sx = _Simplex(sf, lo, hi, warm=warm)
        status = sx.run()
    except LpNumericalError:
        if warm is None:
            raise
        sx = _Simplex(sf, lo, hi, warm=None)   # cold restart
        status = sx.run()
    obj = np.nan
    if status == OPTIMAL:
        obj = float(sf.c @ sx.x)
        if sf.maximize:
            obj = -obj
    return LpSolution(
        status=status,
        x=sx.x[:sf.n_struct].copy(),
        objective=obj,
        basis=sx.basis.copy(),
        vstat=sx.vstat.copy(),
        iterations=sx.iterations,
        infeasible_rows=sx._infeasible_rows,
    )


def solve_lp(model, warm=None):
    """Solve the LP relaxation of a MilpModel (integrality dropped).

    Returns an LpSolution with status optimal, infeasible, or
    unbounded; numerical failures raise LpNumericalError rather than
    returning silently wrong answers.
    """
    return solve_relaxation(StandardForm(model), warm=warm)
