"""Bounded-variable primal simplex for the LP relaxations of the MILP solver.

Dense two-phase implementation: every row gets a slack variable whose
bounds encode the constraint sense, and rows whose slack cannot absorb the
initial residual get an artificial variable, so phase 1 minimizes the sum
of artificials from an always-feasible diagonal basis.  Nonbasic variables
rest on a bound (the upper-bounding technique), which keeps binaries and
box-constrained decision variables cheap.

Pricing is largest-reduced-cost with a Bland's-rule fallback after a run
of degenerate pivots, which guarantees termination.  The basis inverse is
maintained explicitly and refactorized periodically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg.blas import dger

_NB_LOWER = 0
_NB_UPPER = 1
_NB_FREE = 2
_BASIC = 3

_PIVOT_TOL = 1e-9
_DJ_TOL = 1e-9
_DEGEN_STEP = 1e-11
_BLAND_AFTER = 60
# Product-form updates of an explicit inverse drift; refactorize on a short
# cadence and immediately after any small pivot or visible blow-up.
_REFACTOR_EVERY = 40
_PIVOT_FRESHEN = 1e-6
_BINV_GUARD = 1e12


class _SingularBasis(Exception):
    """Refactorization met a numerically singular basis."""


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "limit"
    x: np.ndarray | None
    objective: float
    iterations: int
    # Optimal-basis snapshot (basic column ids and structural+slack
    # statuses) so a later solve with modified bounds can warm start.
    basis: np.ndarray | None = None
    vstatus: np.ndarray | None = None


def solve_lp(
    c: np.ndarray,
    a_mat: np.ndarray,
    senses: np.ndarray,
    rhs: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iter: int | None = None,
) -> LpResult:
    """Minimize ``c @ x`` subject to ``a_mat @ x (senses) rhs``, ``lower <= x <= upper``.

    ``senses`` holds -1 for <=, 0 for ==, +1 for >= per row.  Bounds may be
    infinite.  Returns structural variable values only.
    """
    try:
        return _solve_core(c, a_mat, senses, rhs, lower, upper, max_iter,
                           _REFACTOR_EVERY)
    except _SingularBasis:
        # Accumulated inverse drift led the pivoting astray.  Retry with a
        # fresh factorization every step: slower, but every decision is
        # then priced off an exact inverse.
        try:
            return _solve_core(c, a_mat, senses, rhs, lower, upper,
                               max_iter, 1)
        except _SingularBasis:
            return LpResult("limit", None, math.nan, 0)


def _solve_core(
    c: np.ndarray,
    a_mat: np.ndarray,
    senses: np.ndarray,
    rhs: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iter: int | None,
    refactor_every: int,
) -> LpResult:
    m, n = a_mat.shape
    if max_iter is None:
        max_iter = 500 + 40 * (m + n)

    # Column layout: structural | slacks | artificials.
    n_total = n + 2 * m
    cols = np.zeros((m, n_total))
    cols[:, :n] = a_mat
    cols[np.arange(m), n + np.arange(m)] = 1.0

    lo = np.full(n_total, -math.inf)
    hi = np.full(n_total, math.inf)
    lo[:n] = lower
    hi[:n] = upper
    for i in range(m):
        if senses[i] < 0:
            lo[n + i], hi[n + i] = 0.0, math.inf
        elif senses[i] > 0:
            lo[n + i], hi[n + i] = -math.inf, 0.0
        else:
            lo[n + i] = hi[n + i] = 0.0

    # Start structural variables on their finite bound nearest zero.
    x_start = np.zeros(n_total)
    for j in range(n):
        if math.isfinite(lo[j]) and math.isfinite(hi[j]):
            x_start[j] = lo[j] if abs(lo[j]) <= abs(hi[j]) else hi[j]
        elif math.isfinite(lo[j]):
            x_start[j] = lo[j]
        elif math.isfinite(hi[j]):
            x_start[j] = hi[j]

    residual = rhs - cols[:, :n] @ x_start[:n]
    slack_val = np.clip(residual, lo[n : n + m], hi[n : n + m])
    art_resid = residual - slack_val

    status = np.full(n_total, _NB_LOWER, dtype=np.int8)
    for j in range(n):
        if not math.isfinite(lo[j]) and not math.isfinite(hi[j]):
            status[j] = _NB_FREE
        elif x_start[j] == hi[j] and x_start[j] != lo[j]:
            status[j] = _NB_UPPER

    basis = np.empty(m, dtype=np.int64)
    need_phase1 = False
    for i in range(m):
        art = n + m + i
        sigma = 1.0 if art_resid[i] >= 0.0 else -1.0
        cols[i, art] = sigma
        if abs(art_resid[i]) > 1e-12:
            lo[art], hi[art] = 0.0, math.inf
            x_start[art] = abs(art_resid[i])
            basis[i] = art
            # Slack rests on whichever bound the clip reached.
            status[n + i] = _NB_UPPER if slack_val[i] == hi[n + i] else _NB_LOWER
            x_start[n + i] = slack_val[i]
            need_phase1 = True
        else:
            lo[art] = hi[art] = 0.0
            basis[i] = n + i
            x_start[n + i] = residual[i]
    status[basis] = _BASIC

    state = _SimplexState(
        cols=cols, lo=lo, hi=hi, basis=basis, status=status,
        x=x_start, rhs=rhs.astype(float), n_rows=m,
        refactor_every=refactor_every,
    )

    iterations = 0
    if need_phase1:
        c1 = np.zeros(n_total)
        c1[n + m :] = 1.0
        outcome, it1 = state.run(c1, max_iter)
        iterations += it1
        if outcome == "limit":
            return LpResult("limit", None, math.nan, iterations)
        if m:
            state._refactorize()  # judge feasibility from an exact inverse
        phase1_obj = float(c1 @ state.current_x())
        if phase1_obj > 1e-7:
            return LpResult("infeasible", None, math.nan, iterations)
        # Lock artificials at zero for phase 2.
        state.lo[n + m :] = 0.0
        state.hi[n + m :] = 0.0
        if m:
            state.expel_artificials(n + m)

    c2 = np.zeros(n_total)
    c2[:n] = c
    outcome, it2 = state.run(c2, max_iter - iterations)
    iterations += it2
    if outcome == "limit":
        return LpResult("limit", None, math.nan, iterations)
    if outcome == "unbounded":
        return LpResult("unbounded", None, -math.inf, iterations)
    if m and state.pivots_since_refactor:
        # Report the vertex from an exact inverse, not the product-form
        # approximation of it.
        state._refactorize()
    x_full = state.current_x()
    return LpResult("optimal", x_full[:n].copy(), float(c @ x_full[:n]),
                    iterations, state.basis.copy(),
                    state.status[: n + m].copy())


@dataclass
class WarmTemplate:
    """A factorized basis snapshot, reusable across several bound changes.

    Branch-and-bound re-solves the same matrix under many nearby bound
    sets (two children per node, plus heuristic polishing), so the
    template pays for the column setup and the basis inversion once and
    each :func:`resolve_from_template` call only copies the small mutable
    state.
    """

    m: int
    n: int
    c2: np.ndarray       # cost over structural | slack | artificial
    cols: np.ndarray     # constraint columns in the same layout
    rhs: np.ndarray
    basis: np.ndarray
    status: np.ndarray   # statuses with artificials parked nonbasic
    binv: np.ndarray     # fresh inverse of the basic columns
    slack_lo: np.ndarray
    slack_hi: np.ndarray


def prepare_warm_template(
    c: np.ndarray,
    a_mat: np.ndarray,
    senses: np.ndarray,
    rhs: np.ndarray,
    basis: np.ndarray,
    vstatus: np.ndarray,
) -> WarmTemplate | None:
    """Validate and factorize a basis snapshot for warm re-solves.

    Returns ``None`` when the snapshot is unusable: wrong shape, an
    artificial column still basic, statuses inconsistent with the basic
    set, or a singular basis matrix.
    """
    m, n = a_mat.shape
    if m == 0 or len(basis) != m:
        return None
    basis = np.asarray(basis, dtype=np.int64)
    if (basis < 0).any() or (basis >= n + m).any():
        return None

    # No artificial columns: a validated snapshot never holds one basic,
    # and locked columns cannot enter, so carrying them would only widen
    # every pricing pass for nothing.
    cols = np.zeros((m, n + m))
    cols[:, :n] = a_mat
    cols[np.arange(m), n + np.arange(m)] = 1.0

    status = np.asarray(vstatus, dtype=np.int8).copy()
    if len(status) != n + m:
        return None
    if not np.array_equal(np.sort(basis),
                          np.flatnonzero(status == _BASIC)):
        return None
    try:
        binv = np.asfortranarray(np.linalg.inv(cols[:, basis]))
    except np.linalg.LinAlgError:
        return None

    c2 = np.zeros(n + m)
    c2[:n] = c
    slack_lo = np.where(senses > 0, -math.inf, 0.0)
    slack_hi = np.where(senses < 0, math.inf, 0.0)
    return WarmTemplate(m=m, n=n, c2=c2, cols=cols, rhs=rhs.astype(float),
                        basis=basis.copy(), status=status, binv=binv,
                        slack_lo=slack_lo, slack_hi=slack_hi)


def resolve_from_template(
    tpl: WarmTemplate,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iter: int | None = None,
) -> LpResult | None:
    """Re-solve under new structural bounds from a prepared template.

    The cost vector is unchanged, so the template basis stays dual
    feasible and a dual-simplex pass drives out the bound violations; the
    primal loop then certifies optimality.  Returns ``None`` on an
    iteration limit or numerical failure, in which case the caller should
    solve cold.
    """
    m, n = tpl.m, tpl.n
    if max_iter is None:
        # Fail fast: a healthy warm start needs few pivots, and the caller
        # can always fall back to a cold solve.
        max_iter = 100 + 3 * m

    lo = np.empty(n + m)
    hi = np.empty(n + m)
    lo[:n] = lower
    hi[:n] = upper
    lo[n:] = tpl.slack_lo
    hi[n:] = tpl.slack_hi

    status = tpl.status.copy()
    x_nb = np.zeros(n + m)
    at_lo = status == _NB_LOWER
    at_hi = status == _NB_UPPER
    x_nb[at_lo] = lo[at_lo]
    x_nb[at_hi] = hi[at_hi]
    x_nb[tpl.basis] = 0.0
    if not np.isfinite(x_nb).all():
        return None  # a nonbasic column lost its finite resting bound

    state = _SimplexState(
        cols=tpl.cols, lo=lo, hi=hi, basis=tpl.basis.copy(), status=status,
        x=x_nb, rhs=tpl.rhs, n_rows=m, binv=tpl.binv.copy(),
    )
    state._recompute_x_basic()

    try:
        outcome, it_dual = state.run_dual(tpl.c2, max_iter)
        if outcome == "infeasible":
            return LpResult("infeasible", None, math.nan, it_dual)
        if outcome == "limit":
            return None
        outcome, it_primal = state.run(tpl.c2, max_iter)
    except _SingularBasis:
        return None
    iterations = it_dual + it_primal
    if outcome == "limit":
        return None
    if outcome == "unbounded":
        return LpResult("unbounded", None, -math.inf, iterations)
    x_full = state.current_x()
    return LpResult("optimal", x_full[:n].copy(),
                    float(tpl.c2[:n] @ x_full[:n]), iterations,
                    state.basis.copy(), state.status[: n + m].copy())


def resolve_lp_from_basis(
    c: np.ndarray,
    a_mat: np.ndarray,
    senses: np.ndarray,
    rhs: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    basis: np.ndarray,
    vstatus: np.ndarray,
    max_iter: int | None = None,
) -> LpResult | None:
    """One-shot warm re-solve; see :func:`prepare_warm_template`."""
    tpl = prepare_warm_template(c, a_mat, senses, rhs, basis, vstatus)
    if tpl is None:
        return None
    return resolve_from_template(tpl, lower, upper, max_iter)


class _SimplexState:
    """Mutable tableau state shared between the two phases."""

    def __init__(self, cols, lo, hi, basis, status, x, rhs, n_rows,
                 refactor_every=_REFACTOR_EVERY, binv=None):
        self.cols = cols
        self.lo = lo
        self.hi = hi
        self.basis = basis
        self.status = status
        self.rhs = rhs
        self.n_rows = n_rows
        self.refactor_every = refactor_every
        self.x_nb = x.copy()  # nonbasic resting values; basic entries stale
        self.x_basic = x[basis].copy()
        if binv is None:
            binv = np.linalg.inv(cols[:, basis]) if n_rows else \
                np.zeros((0, 0))
        # Fortran order lets the rank-1 updates run in place through dger.
        self.binv = np.asfortranarray(binv)
        self.pivots_since_refactor = 0

    def current_x(self) -> np.ndarray:
        x = self.x_nb.copy()
        x[self.basis] = self.x_basic
        return x

    def _refactorize(self) -> None:
        try:
            self.binv = np.asfortranarray(
                np.linalg.inv(self.cols[:, self.basis]))
        except np.linalg.LinAlgError:
            raise _SingularBasis
        self._recompute_x_basic()
        self.pivots_since_refactor = 0

    def _recompute_x_basic(self) -> None:
        """Re-derive basic values from the rhs and the current inverse."""
        nb_x = self.x_nb.copy()
        nb_x[self.basis] = 0.0
        self.x_basic = self.binv @ (self.rhs - self.cols @ nb_x)

    def run(self, c: np.ndarray, max_iter: int) -> tuple[str, int]:
        if self.n_rows == 0:
            # Bound-only problem: push every variable to its cheaper bound.
            for j in range(len(c)):
                if self.status[j] == _NB_FREE:
                    if abs(c[j]) > _DJ_TOL:
                        return "unbounded", 0
                elif c[j] < -_DJ_TOL and self.x_nb[j] != self.hi[j]:
                    if not math.isfinite(self.hi[j]):
                        return "unbounded", 0
                    self.x_nb[j] = self.hi[j]
                    self.status[j] = _NB_UPPER
                elif c[j] > _DJ_TOL and self.x_nb[j] != self.lo[j]:
                    if not math.isfinite(self.lo[j]):
                        return "unbounded", 0
                    self.x_nb[j] = self.lo[j]
                    self.status[j] = _NB_LOWER
            return "optimal", 0
        degenerate_streak = 0
        iterations = 0
        # The effective rhs seen by the basis: b minus nonbasic contributions.
        while iterations < max_iter:
            iterations += 1
            c_b = c[self.basis]
            y = c_b @ self.binv
            reduced = c - y @ self.cols

            can_decrease = (
                ((self.status == _NB_LOWER) | (self.status == _NB_FREE))
                & (reduced < -_DJ_TOL)
            )
            can_increase_obj = (
                ((self.status == _NB_UPPER) | (self.status == _NB_FREE))
                & (reduced > _DJ_TOL)
            )
            # Fixed columns (lo == hi) cannot move; without this guard they
            # would still be "eligible" and enter through a useless
            # degenerate pivot.
            eligible = (can_decrease | can_increase_obj) & (self.hi > self.lo)
            if not eligible.any():
                return "optimal", iterations

            if degenerate_streak >= _BLAND_AFTER:
                enter = int(np.argmax(eligible))  # lowest eligible index
            else:
                scores = np.where(eligible, np.abs(reduced), -1.0)
                enter = int(np.argmax(scores))
            direction = 1.0 if can_decrease[enter] else -1.0

            w = self.binv @ self.cols[:, enter]

            # Ratio test: entering moves by t*direction, basics by -t*direction*w.
            step_limit = math.inf
            if math.isfinite(self.lo[enter]) and math.isfinite(self.hi[enter]):
                step_limit = self.hi[enter] - self.lo[enter]
            leave_row = -1
            dw = direction * w
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                down = np.where(dw > _PIVOT_TOL, (self.x_basic - lo_b) / dw, math.inf)
                up = np.where(dw < -_PIVOT_TOL, (hi_b - self.x_basic) / (-dw), math.inf)
            limits = np.minimum(down, up)
            limits = np.where(np.isnan(limits), math.inf, limits)
            limits = np.maximum(limits, 0.0)
            min_row_limit = float(limits.min()) if len(limits) else math.inf

            step = min(step_limit, min_row_limit)
            if math.isinf(step):
                return "unbounded", iterations

            if min_row_limit <= step_limit:
                near = np.flatnonzero(limits <= min_row_limit + 1e-9)
                # Prefer the largest pivot among ties for stability.
                leave_row = int(near[np.argmax(np.abs(dw[near]))])
                if degenerate_streak >= _BLAND_AFTER:
                    leave_row = int(near[np.argmin(self.basis[near])])

            if step <= _DEGEN_STEP:
                degenerate_streak += 1
            else:
                degenerate_streak = 0

            self.x_basic -= step * dw
            if leave_row < 0:
                # Bound flip: entering travels to its opposite bound.
                if self.status[enter] == _NB_LOWER:
                    self.x_nb[enter] = self.hi[enter]
                    self.status[enter] = _NB_UPPER
                else:
                    self.x_nb[enter] = self.lo[enter]
                    self.status[enter] = _NB_LOWER
                continue

            leaving = self.basis[leave_row]
            entering_value = self.x_nb[enter] + direction * step
            # Park the leaving variable on the bound it ran into.
            hits_lower = dw[leave_row] > 0.0
            self.x_nb[leaving] = self.lo[leaving] if hits_lower else self.hi[leaving]
            self.status[leaving] = _NB_LOWER if hits_lower else _NB_UPPER

            self.basis[leave_row] = enter
            self.status[enter] = _BASIC
            self.x_basic[leave_row] = entering_value

            pivot = w[leave_row]
            # Rank-1 product-form update; dger zeroes row leave_row
            # (w[leave_row] times itself), which the final assignment
            # then restores.
            row = self.binv[leave_row, :] / pivot
            self.binv = dger(-1.0, w, row, a=self.binv, overwrite_a=1)
            self.binv[leave_row, :] = row

            self.pivots_since_refactor += 1
            if (self.pivots_since_refactor >= self.refactor_every
                    or abs(pivot) < _PIVOT_FRESHEN
                    or np.abs(self.binv).max() > _BINV_GUARD):
                self._refactorize()
        return "limit", iterations

    def expel_artificials(self, n_real: int) -> None:
        """Pivot zero-level artificials out of the basis where possible.

        Leaves the solution unchanged (the swaps are degenerate) but makes
        the basis a pure structural/slack one, which later solves can warm
        start from.  Rows whose only nonzero is the artificial itself are
        redundant; their artificial simply stays.
        """
        for i in range(self.n_rows):
            if self.basis[i] < n_real:
                continue
            alpha = self.binv[i, :] @ self.cols[:, :n_real]
            alpha[self.status[:n_real] == _BASIC] = 0.0
            j = int(np.argmax(np.abs(alpha)))
            if abs(alpha[j]) <= 1e-7:
                continue
            w = self.binv @ self.cols[:, j]
            art = self.basis[i]
            self.x_nb[art] = 0.0
            self.status[art] = _NB_LOWER
            self.basis[i] = j
            self.status[j] = _BASIC
            self.x_basic[i] = self.x_nb[j]
            row = self.binv[i, :] / w[i]
            self.binv = dger(-1.0, w, row, a=self.binv, overwrite_a=1)
            self.binv[i, :] = row
            self.pivots_since_refactor += 1
        self._refactorize()

    def run_dual(self, c: np.ndarray, max_iter: int,
                 feas_tol: float = 1e-9) -> tuple[str, int]:
        """Drive out primal bound violations while following dual pricing.

        Assumes the starting basis is (near) dual feasible for ``c``.  The
        ``infeasible`` outcome is primal-valid on its own: it is raised
        only when the violated row proves no feasible move exists.
        """
        iterations = 0
        degenerate_streak = 0
        # Reduced costs kept incrementally; they only steer the ratio test
        # (the closing primal pass re-derives them from the basis), so the
        # update drift is harmless and refreshed on refactorization.
        y = c[self.basis] @ self.binv
        reduced = c - y @ self.cols
        fresh_at = self.pivots_since_refactor
        while iterations < max_iter:
            iterations += 1
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            below = lo_b - self.x_basic
            above = self.x_basic - hi_b
            worst = np.maximum(below, above)
            r = int(np.argmax(worst))
            if worst[r] <= feas_tol:
                return "optimal", iterations
            go_to_lower = below[r] >= above[r]
            target = lo_b[r] if go_to_lower else hi_b[r]
            delta_need = target - self.x_basic[r]
            sgn = 1.0 if delta_need > 0 else -1.0

            alpha = self.binv[r, :] @ self.cols
            if self.pivots_since_refactor < fresh_at:
                y = c[self.basis] @ self.binv
                reduced = c - y @ self.cols
            fresh_at = self.pivots_since_refactor

            # Entering j moved by s changes x_basic[r] at rate -s*alpha[j];
            # keep only moves pushing row r toward its violated bound, and
            # skip pinned columns outright.
            elig_lo = (self.status == _NB_LOWER) & (-alpha * sgn > _PIVOT_TOL)
            elig_hi = (self.status == _NB_UPPER) & (alpha * sgn > _PIVOT_TOL)
            elig_fr = (self.status == _NB_FREE) & (np.abs(alpha) > _PIVOT_TOL)
            eligible = (elig_lo | elig_hi | elig_fr) & (self.hi > self.lo)
            idx = np.flatnonzero(eligible)
            if len(idx) == 0:
                return "infeasible", iterations

            # Bound-flipping ratio test: walk candidates in dual-ratio
            # order; a candidate whose whole range moves row r less than
            # the outstanding violation is flipped to its far bound (its
            # reduced cost crosses zero exactly when its status flips, so
            # dual feasibility survives) and the walk continues.  The
            # first candidate with capacity to spare enters the basis.
            # One pivot per iteration means the dual objective is
            # monotone, which is what rules out the status-toggling
            # cycles a flip-only step would allow.
            if degenerate_streak >= _BLAND_AFTER:
                order = idx  # index order: Bland's rule on the entering
            else:
                ratios = np.abs(reduced[idx]) / np.abs(alpha[idx])
                order = idx[np.argsort(ratios, kind="stable")]
            need = abs(delta_need)
            enter = -1
            flips: list[int] = []
            for j in order:
                j = int(j)
                cap = (self.hi[j] - self.lo[j]) * abs(alpha[j])
                if not math.isfinite(cap) or cap >= need - 1e-12:
                    enter = j
                    break
                flips.append(j)
                need -= cap
            if enter < 0:
                # Even with every eligible column at its far bound the row
                # cannot reach its bound: no feasible point exists.
                return "infeasible", iterations

            if flips:
                fcol = np.zeros(len(self.x_basic))
                for j in flips:
                    span = self.hi[j] - self.lo[j]
                    if self.status[j] == _NB_LOWER:
                        fcol += span * self.cols[:, j]
                        self.x_nb[j] = self.hi[j]
                        self.status[j] = _NB_UPPER
                    else:
                        fcol -= span * self.cols[:, j]
                        self.x_nb[j] = self.lo[j]
                        self.status[j] = _NB_LOWER
                self.x_basic -= self.binv @ fcol
                delta_need = target - self.x_basic[r]

            j = enter
            if self.status[j] == _NB_LOWER:
                s = 1.0
            elif self.status[j] == _NB_UPPER:
                s = -1.0
            else:
                s = 1.0 if -alpha[j] * sgn > 0 else -1.0

            w = self.binv @ self.cols[:, j]
            theta = delta_need / (-s * w[r])
            if theta < 0.0:
                theta = 0.0  # flip round-off overshot the target

            dual_step = (abs(reduced[j] / alpha[j])
                         if abs(alpha[j]) > _PIVOT_TOL else 0.0)
            if dual_step <= _DEGEN_STEP:
                degenerate_streak += 1
            else:
                degenerate_streak = 0

            self.x_basic -= theta * s * w
            entering_value = self.x_nb[j] + s * theta
            leaving = self.basis[r]
            self.x_nb[leaving] = target
            self.status[leaving] = _NB_LOWER if go_to_lower else _NB_UPPER
            self.basis[r] = j
            self.status[j] = _BASIC
            self.x_basic[r] = entering_value

            if abs(alpha[j]) > _PIVOT_TOL:
                reduced = reduced - (reduced[j] / alpha[j]) * alpha

            pivot = w[r]
            row = self.binv[r, :] / pivot
            self.binv = dger(-1.0, w, row, a=self.binv, overwrite_a=1)
            self.binv[r, :] = row

            self.pivots_since_refactor += 1
            if (self.pivots_since_refactor >= self.refactor_every
                    or abs(pivot) < _PIVOT_FRESHEN
                    or np.abs(self.binv).max() > _BINV_GUARD):
                self._refactorize()
        return "limit", iterations
