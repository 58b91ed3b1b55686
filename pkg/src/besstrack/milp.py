"""Small mixed-integer linear programming layer.

`MilpModel` is a plain container (variables with bounds, sparse-row
constraints, linear objective).  `solve` dispatches either to the
self-contained reference solver — branch & bound on the bounded-variable
simplex in :mod:`besstrack.simplex` — or to SciPy's HiGHS-backed
``scipy.optimize.milp``.  Both backends are deterministic for a fixed
model, and the reference solver exists so results can be audited without
trusting an external MILP code.

The reference branch & bound uses best-bound node selection, branches on
the most fractional binary (optionally steered by per-variable
priorities), and accepts a caller-supplied rounding heuristic to seed
incumbents early.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .simplex import prepare_warm_template, resolve_from_template, solve_lp

CONTINUOUS = "continuous"
BINARY = "binary"


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT_REACHED = "limit_reached"


class ModelError(ValueError):
    """A malformed model: bad bounds, unknown variable ids, bad senses."""


@dataclass
class SolveOptions:
    """Tolerances and limits shared by both backends."""

    integrality_tol: float = 1e-6
    feasibility_tol: float = 1e-7
    abs_gap: float = 1e-7
    rel_gap: float = 1e-9
    node_limit: int = 200_000
    use_priorities: bool = True

    def __post_init__(self):
        for name in ("integrality_tol", "feasibility_tol", "abs_gap", "rel_gap"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        if self.node_limit < 1:
            raise ModelError("node_limit must be at least 1")


@dataclass
class MilpSolution:
    status: SolveStatus
    values: np.ndarray | None
    objective: float
    gap: float
    node_count: int
    message: str = ""


_SENSES = {"<=": -1, "==": 0, ">=": 1}


class MilpModel:
    """Variables, linear constraints and a linear objective to minimize."""

    def __init__(self):
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.integrality: list[str] = []
        self.names: list[str] = []
        self._constraints: list[tuple[dict[int, float], int, float]] = []
        self._objective: dict[int, float] = {}
        self.objective_offset: float = 0.0
        self.branch_priority: dict[int, int] = {}

    # -- construction -------------------------------------------------
    def add_variable(
        self,
        lower: float = 0.0,
        upper: float = math.inf,
        integrality: str = CONTINUOUS,
        name: str | None = None,
    ) -> int:
        if integrality not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown integrality {integrality!r}")
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise ModelError(f"invalid bounds [{lower}, {upper}]")
        if integrality == BINARY and (lower < 0.0 or upper > 1.0):
            raise ModelError("binary variables need bounds within [0, 1]")
        idx = len(self.lower)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.integrality.append(integrality)
        self.names.append(name if name is not None else f"x{idx}")
        return idx

    def add_constraint(self, coeffs: dict[int, float], sense: str, rhs: float) -> int:
        if sense not in _SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        if math.isnan(rhs):
            raise ModelError("constraint rhs is NaN")
        clean: dict[int, float] = {}
        for var, coef in coeffs.items():
            if not 0 <= var < len(self.lower):
                raise ModelError(f"constraint references unknown variable {var}")
            if math.isnan(coef) or math.isinf(coef):
                raise ModelError(f"non-finite coefficient on variable {var}")
            if coef != 0.0:
                clean[var] = clean.get(var, 0.0) + float(coef)
        self._constraints.append((clean, _SENSES[sense], float(rhs)))
        return len(self._constraints) - 1

    def set_objective(self, coeffs: dict[int, float], offset: float = 0.0) -> None:
        for var, coef in coeffs.items():
            if not 0 <= var < len(self.lower):
                raise ModelError(f"objective references unknown variable {var}")
            if math.isnan(coef) or math.isinf(coef):
                raise ModelError(f"non-finite objective coefficient on variable {var}")
        self._objective = {v: float(c) for v, c in coeffs.items() if c != 0.0}
        self.objective_offset = float(offset)

    def set_branch_priority(self, var: int, priority: int) -> None:
        if not 0 <= var < len(self.lower):
            raise ModelError(f"unknown variable {var}")
        self.branch_priority[var] = int(priority)

    @property
    def n_variables(self) -> int:
        return len(self.lower)

    @property
    def n_constraints(self) -> int:
        return len(self._constraints)

    # -- dense export -------------------------------------------------
    def to_arrays(self):
        n = self.n_variables
        m = self.n_constraints
        a_mat = np.zeros((m, n))
        senses = np.zeros(m, dtype=np.int8)
        rhs = np.zeros(m)
        for i, (coeffs, sense, b) in enumerate(self._constraints):
            for var, coef in coeffs.items():
                a_mat[i, var] = coef
            senses[i] = sense
            rhs[i] = b
        c = np.zeros(n)
        for var, coef in self._objective.items():
            c[var] = coef
        lower = np.array(self.lower, dtype=float)
        upper = np.array(self.upper, dtype=float)
        return c, a_mat, senses, rhs, lower, upper

    # -- text dump ----------------------------------------------------
    def dump_lp(self) -> str:
        """Render the model in an LP-style text format (see docs/lp_format.md)."""

        def term(coef: float, name: str) -> str:
            sign = "+" if coef >= 0 else "-"
            return f"{sign} {abs(coef):.12g} {name}"

        lines = ["minimize"]
        obj_terms = " ".join(
            term(c, self.names[v]) for v, c in sorted(self._objective.items())
        )
        if self.objective_offset:
            obj_terms += f" {term(self.objective_offset, '')}".rstrip()
        lines.append(f" obj: {obj_terms or '0'}")
        lines.append("subject to")
        sense_txt = {-1: "<=", 0: "=", 1: ">="}
        for i, (coeffs, sense, rhs) in enumerate(self._constraints):
            body = " ".join(term(c, self.names[v]) for v, c in sorted(coeffs.items()))
            lines.append(f" c{i}: {body or '0'} {sense_txt[sense]} {rhs:.12g}")
        lines.append("bounds")
        for j in range(self.n_variables):
            lo, hi = self.lower[j], self.upper[j]
            if lo == -math.inf and hi == math.inf:
                lines.append(f" {self.names[j]} free")
            else:
                lo_txt = "-inf" if lo == -math.inf else f"{lo:.12g}"
                hi_txt = "+inf" if hi == math.inf else f"{hi:.12g}"
                lines.append(f" {lo_txt} <= {self.names[j]} <= {hi_txt}")
        binaries = [self.names[j] for j in range(self.n_variables)
                    if self.integrality[j] == BINARY]
        if binaries:
            lines.append("binary")
            lines.extend(f" {name}" for name in binaries)
        lines.append("end")
        return "\n".join(lines) + "\n"


def solve(
    model: MilpModel,
    options: SolveOptions | None = None,
    backend: str = "reference",
    heuristic=None,
) -> MilpSolution:
    """Solve ``model`` to proven optimality within the configured gaps.

    Parameters
    ----------
    backend : str
        ``"reference"`` for the built-in solver, ``"external"`` for
        ``scipy.optimize.milp``.
    heuristic : callable, optional
        ``heuristic(x_relaxed) -> ndarray | None``; given a fractional LP
        point, may propose a candidate assignment for *all* variables.
        The candidate is kept only if it verifies as feasible.  Reference
        backend only.
    """
    if options is None:
        options = SolveOptions()
    if backend == "reference":
        return _solve_reference(model, options, heuristic)
    if backend == "external":
        return _solve_external(model, options)
    raise ModelError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# reference branch & bound
# ---------------------------------------------------------------------------

@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lower: np.ndarray = field(compare=False)
    upper: np.ndarray = field(compare=False)
    x_lp: np.ndarray = field(compare=False)
    # Optimal basis of this node's relaxation; children warm start from it.
    basis: np.ndarray | None = field(compare=False, default=None)
    vstatus: np.ndarray | None = field(compare=False, default=None)


def _check_feasible(x, a_mat, senses, rhs, lower, upper, bin_idx, tol, int_tol):
    if np.any(x < lower - tol) or np.any(x > upper + tol):
        return False
    row = a_mat @ x
    for i in range(len(rhs)):
        if senses[i] < 0 and row[i] > rhs[i] + tol:
            return False
        if senses[i] > 0 and row[i] < rhs[i] - tol:
            return False
        if senses[i] == 0 and abs(row[i] - rhs[i]) > tol:
            return False
    frac = np.abs(x[bin_idx] - np.round(x[bin_idx]))
    return bool(np.all(frac <= int_tol))


def _solve_reference(model, options, heuristic):
    c, a_mat, senses, rhs, lower, upper = model.to_arrays()
    bin_idx = np.array(
        [j for j in range(model.n_variables) if model.integrality[j] == BINARY],
        dtype=np.int64,
    )
    priority = np.zeros(model.n_variables)
    if options.use_priorities:
        for var, pri in model.branch_priority.items():
            priority[var] = pri
    offset = model.objective_offset

    root = solve_lp(c, a_mat, senses, rhs, lower, upper)
    nodes_solved = 1
    if root.status == "infeasible":
        return MilpSolution(SolveStatus.INFEASIBLE, None, math.nan, math.inf,
                            nodes_solved, "root relaxation infeasible")
    if root.status == "unbounded":
        return MilpSolution(SolveStatus.UNBOUNDED, None, -math.inf, math.inf,
                            nodes_solved, "root relaxation unbounded")
    if root.status == "limit":
        return MilpSolution(SolveStatus.LIMIT_REACHED, None, math.nan, math.inf,
                            nodes_solved, "simplex iteration limit at root")

    incumbent = None
    incumbent_obj = math.inf
    feas_tol = options.feasibility_tol
    int_tol = options.integrality_tol
    polished: set[bytes] = set()  # binary patterns already re-optimized

    # Pseudocost ledger: observed bound lift per unit of fractional
    # distance, kept separately for the down (fix to 0) and up (fix to 1)
    # directions of every binary.
    nb = len(bin_idx)
    psc_sum = np.zeros((2, nb))
    psc_cnt = np.zeros((2, nb))
    pos_of = {int(v): i for i, v in enumerate(bin_idx)}

    def consider(x):
        nonlocal incumbent, incumbent_obj
        obj = float(c @ x)
        if obj < incumbent_obj - 1e-12:
            incumbent = x.copy()
            incumbent_obj = obj

    seq = 0
    heap: list[_Node] = [_Node(root.objective, seq, lower.copy(), upper.copy(),
                               root.x, root.basis, root.vstatus)]
    best_bound = root.objective
    # Fallback warm-start template off the root basis, factorized once.
    root_tpl = None
    if root.basis is not None:
        root_tpl = prepare_warm_template(c, a_mat, senses, rhs,
                                         root.basis, root.vstatus)

    def gap_closed(bound):
        if incumbent is None:
            return False
        return incumbent_obj - bound <= max(
            options.abs_gap, options.rel_gap * abs(incumbent_obj)
        )

    status = SolveStatus.OPTIMAL
    message = ""
    while heap:
        node = heapq.heappop(heap)
        best_bound = node.bound
        if gap_closed(node.bound):
            best_bound = node.bound
            break
        if nodes_solved >= options.node_limit:
            status = SolveStatus.LIMIT_REACHED
            message = f"node limit {options.node_limit} reached"
            break

        x = node.x_lp
        frac = np.abs(x[bin_idx] - np.round(x[bin_idx])) if len(bin_idx) else \
            np.zeros(0)
        if len(bin_idx) == 0 or frac.max() <= int_tol:
            consider(x)
            continue

        # One factorization serves both children and the polish below.
        node_tpl = None
        if node.basis is not None:
            node_tpl = prepare_warm_template(c, a_mat, senses, rhs,
                                             node.basis, node.vstatus)

        if heuristic is not None:
            cand = heuristic(x)
            if cand is not None:
                cand = np.asarray(cand, dtype=float)
                if _check_feasible(cand, a_mat, senses, rhs, lower, upper,
                                   bin_idx, feas_tol, int_tol):
                    consider(cand)
                # Polish: re-solve the LP with every binary pinned to the
                # candidate's rounding.  The heuristic fills continuous
                # variables conservatively, so re-optimizing them recovers
                # whatever slack the relaxation bound is using and lets the
                # incumbent actually meet the gap test.
                pattern = np.round(cand[bin_idx])
                key = pattern.astype(np.int8).tobytes()
                if key not in polished:
                    polished.add(key)
                    fix_lo = lower.copy()
                    fix_hi = upper.copy()
                    fix_lo[bin_idx] = pattern
                    fix_hi[bin_idx] = pattern
                    fixed = None
                    if node_tpl is not None:
                        fixed = resolve_from_template(node_tpl, fix_lo,
                                                      fix_hi)
                    if fixed is None and root_tpl is not None:
                        fixed = resolve_from_template(root_tpl, fix_lo,
                                                      fix_hi)
                    if fixed is None:
                        fixed = solve_lp(c, a_mat, senses, rhs, fix_lo, fix_hi)
                    nodes_solved += 1
                    if fixed.status == "optimal":
                        consider(fixed.x)

        # Pick the branching binary by pseudocost product score; variables
        # without history use the fleet average, and with no history at
        # all the score reduces to fractionality with priority tiebreaks.
        cand_rows = np.flatnonzero(frac > int_tol)
        total_cnt = psc_cnt.sum(axis=1)
        avg = np.where(total_cnt > 0.0,
                       psc_sum.sum(axis=1) / np.maximum(total_cnt, 1.0), 1.0)
        with np.errstate(invalid="ignore"):
            est = np.where(psc_cnt[:, cand_rows] > 0.0,
                           psc_sum[:, cand_rows]
                           / np.maximum(psc_cnt[:, cand_rows], 1.0),
                           avg[:, None])
        f = x[bin_idx[cand_rows]]
        score = (np.maximum(est[0] * f, 1e-8)
                 * np.maximum(est[1] * (1.0 - f), 1e-8))
        keys = sorted(
            (-score[i], -frac[r], -priority[bin_idx[r]], bin_idx[r])
            for i, r in enumerate(cand_rows)
        )
        branch_var = int(keys[0][3])
        branch_frac = float(x[branch_var])

        hit_lp_limit = False
        for fix_to in (0.0, 1.0):
            child_lo = node.lower.copy()
            child_hi = node.upper.copy()
            if fix_to == 0.0:
                child_hi[branch_var] = 0.0
            else:
                child_lo[branch_var] = 1.0
            res = None
            if node_tpl is not None:
                res = resolve_from_template(node_tpl, child_lo, child_hi)
            if res is None and root_tpl is not None:
                res = resolve_from_template(root_tpl, child_lo, child_hi)
            if res is None:
                res = solve_lp(c, a_mat, senses, rhs, child_lo, child_hi)
            nodes_solved += 1
            if res.status == "limit":
                hit_lp_limit = True
                break
            if res.status != "optimal":
                continue
            dist = branch_frac if fix_to == 0.0 else 1.0 - branch_frac
            lift = max(0.0, res.objective - node.bound)
            side = 0 if fix_to == 0.0 else 1
            psc_sum[side, pos_of[branch_var]] += lift / max(dist, 1e-6)
            psc_cnt[side, pos_of[branch_var]] += 1.0
            fr = np.abs(res.x[bin_idx] - np.round(res.x[bin_idx]))
            if fr.max() <= int_tol:
                consider(res.x)
                continue
            if incumbent is not None and res.objective >= incumbent_obj - max(
                options.abs_gap, options.rel_gap * abs(incumbent_obj)
            ):
                # Within the optimality gap of the incumbent: fathomed.
                continue
            seq += 1
            heapq.heappush(heap, _Node(res.objective, seq, child_lo,
                                       child_hi, res.x, res.basis,
                                       res.vstatus))
        if hit_lp_limit:
            status = SolveStatus.LIMIT_REACHED
            message = "simplex iteration limit inside the tree"
            break
    else:
        best_bound = incumbent_obj if incumbent is not None else best_bound

    if incumbent is None:
        if status == SolveStatus.LIMIT_REACHED:
            return MilpSolution(status, None, math.nan, math.inf, nodes_solved,
                                message)
        return MilpSolution(SolveStatus.INFEASIBLE, None, math.nan, math.inf,
                            nodes_solved, "no integer-feasible point exists")
    gap = max(0.0, incumbent_obj - best_bound)
    return MilpSolution(status, incumbent, incumbent_obj + offset, gap,
                        nodes_solved, message)


# ---------------------------------------------------------------------------
# external backend (SciPy / HiGHS)
# ---------------------------------------------------------------------------

def _solve_external(model, options):
    from scipy import optimize, sparse

    c, a_mat, senses, rhs, lower, upper = model.to_arrays()
    lo_row = np.where(senses <= 0, np.where(senses == 0, rhs, -np.inf), rhs)
    hi_row = np.where(senses >= 0, np.where(senses == 0, rhs, np.inf), rhs)
    integrality = np.array(
        [1 if kind == BINARY else 0 for kind in model.integrality]
    )
    kwargs = {}
    if model.n_constraints:
        kwargs["constraints"] = optimize.LinearConstraint(
            sparse.csr_matrix(a_mat), lo_row, hi_row
        )
    res = optimize.milp(
        c,
        integrality=integrality,
        bounds=optimize.Bounds(lower, upper),
        options={
            "presolve": True,
            "mip_rel_gap": options.rel_gap,
            "node_limit": options.node_limit,
        },
        **kwargs,
    )
    status_map = {
        0: SolveStatus.OPTIMAL,
        1: SolveStatus.LIMIT_REACHED,
        2: SolveStatus.INFEASIBLE,
        3: SolveStatus.UNBOUNDED,
    }
    status = status_map.get(res.status, SolveStatus.LIMIT_REACHED)
    if res.x is None:
        obj = -math.inf if status == SolveStatus.UNBOUNDED else math.nan
        return MilpSolution(status, None, obj, math.inf, 0, res.message)
    gap = res.mip_gap * abs(res.fun) if res.mip_gap is not None else 0.0
    return MilpSolution(status, np.asarray(res.x, dtype=float),
                        float(res.fun) + model.objective_offset, float(gap),
                        int(res.mip_node_count or 0), res.message)
