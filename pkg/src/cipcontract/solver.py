"""Optimal contract menus.

Three routes to the same optimum:

* :func:`solve_two_ci` - the closed form for two CIs (lower type at its minimum,
  the rest of the budget to the higher type);
* :func:`solve_optimal` - a linear program over the relaxed constraint system,
  for any N;
* :func:`brute_force_oracle` - exhaustive enumeration on a resource grid, used
  to check the other two.

:func:`equal_allocation` is the naive baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, nnls

from .domain import (ContractMenu, Scenario, TypeIndex, cc_expected_utility, cc_utility_single,
                     ci_utility, objective_coefficients, type_order)
from .feasibility import TOL, ConstraintSet, build_relaxed_constraints

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

IR_UNSATISFIABLE = "IR(1) unsatisfiable; adjust design parameters"
MAX_GRID_POINTS = 10**8


@dataclass(frozen=True)
class KktDiagnostics:
    """Lagrange multipliers recovered at a candidate optimum.

    ``multipliers`` maps each inequality label to its multiplier (zero when
    the constraint is slack); ``budget`` is the multiplier of the budget
    equality. Stationarity reads
    ``c + sum_k mu_k grad g_k - budget * 1 = 0``.
    """

    multipliers: dict[str, float] = field(default_factory=dict)
    budget: float = 0.0
    stationarity_residual: float = 0.0
    complementary_slackness_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "multipliers": dict(self.multipliers),
            "budget_multiplier": self.budget,
            "stationarity_residual": self.stationarity_residual,
            "complementary_slackness_residual": self.complementary_slackness_residual,
        }


@dataclass(frozen=True)
class SolveResult:
    menu: ContractMenu | None
    objective: float | None
    status: str
    diagnostics: KktDiagnostics | None = None
    reason: str = ""
    method: str = "lp"

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "method": self.method,
            "objective": self.objective,
            "menu": self.menu.to_dict() if self.menu is not None else None,
            "t_by_ci": self.menu.t_by_ci().tolist() if self.menu is not None else None,
            "diagnostics": self.diagnostics.to_dict() if self.diagnostics is not None else None,
        }


@dataclass
class _Problem:
    """A scenario viewed in ascending type order."""

    scenario: Scenario
    assigned: list[TypeIndex]
    order: list[int]
    sub: Scenario
    cons: ConstraintSet
    c: np.ndarray

    @classmethod
    def build(cls, scenario: Scenario) -> "_Problem":
        assigned = scenario.assigned_types()
        order = type_order(assigned, scenario.ladder)
        sub = scenario.subset(order)
        sub_assigned = [assigned[i] for i in order]
        return cls(scenario, assigned, order, sub,
                   build_relaxed_constraints(sub, sub_assigned),
                   objective_coefficients(sub.beliefs, scenario.ladder))

    @property
    def t_min(self) -> np.ndarray:
        return np.array([self.scenario.ladder.t_min[self.assigned[i][0]] for i in self.order])

    def precheck(self) -> str | None:
        need = float(self.t_min.sum())
        if need > self.scenario.t_max + TOL:
            return f"insufficient budget: minimum resources {need:g} exceed t_max {self.scenario.t_max:g}"
        ir0 = self.cons.get("IR(0)").coeffs[0]
        if ir0 < 0 and self.t_min[0] > 0:
            return IR_UNSATISFIABLE
        return None

    def menu(self, x_sorted) -> ContractMenu:
        t = np.zeros(len(self.order))
        t[self.order] = x_sorted
        return ContractMenu.from_allocation(t, self.assigned, self.scenario.ladder, order=self.order)

    def result(self, x_sorted, method: str, diagnostics=None, status=OPTIMAL, reason="") -> SolveResult:
        menu = self.menu(x_sorted)
        obj = cc_expected_utility(menu, self.scenario.beliefs, self.scenario.ladder)
        return SolveResult(menu, obj, status, diagnostics, reason, method)

    def infeasible(self, reason: str, method: str) -> SolveResult:
        return SolveResult(None, None, INFEASIBLE, None, reason, method)


def kkt_diagnostics(cons: ConstraintSet, c: np.ndarray, x: np.ndarray,
                    active_tol: float = 1e-7) -> KktDiagnostics:
    """Recover multipliers at ``x`` by nonnegative least squares on the active set.

    Only constraints that are (numerically) binding get a multiplier, so
    complementary slackness holds by construction; the stationarity residual
    measures how far ``x`` is from a KKT point.
    """
    ineq = cons.inequalities
    scale = max(1.0, float(np.max(np.abs(x)))) if len(x) else 1.0
    slack = np.array([float(g.coeffs @ x) - g.bound for g in ineq])
    norms = np.array([max(1.0, float(np.linalg.norm(g.coeffs))) for g in ineq])
    active = np.flatnonzero(np.abs(slack) <= active_tol * norms * scale)
    n = len(x)
    cols = [ineq[k].coeffs for k in active] + [-np.ones(n), np.ones(n)]
    B = np.column_stack(cols) if cols else np.zeros((n, 0))
    sol, res = nnls(B, -c)
    mu = np.zeros(len(ineq))
    mu[active] = sol[: len(active)]
    lam = float(sol[len(active)] - sol[len(active) + 1])
    return KktDiagnostics(
        multipliers={g.label: float(m) for g, m in zip(ineq, mu)},
        budget=lam,
        stationarity_residual=float(res),
        complementary_slackness_residual=float(np.max(np.abs(mu * slack), initial=0.0)),
    )


def _is_unique(cons: ConstraintSet, diag: KktDiagnostics, n: int) -> bool:
    """Strictly positive multipliers spanning R^n pin down a single optimum."""
    rows = [np.ones(n)] + [g.coeffs for g in cons.inequalities if diag.multipliers[g.label] > 1e-9]
    return np.linalg.matrix_rank(np.array(rows)) == n


def _polish(cons: ConstraintSet, c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Snap an approximate LP vertex onto the exact intersection of its binding rows."""
    n = len(x)
    G, h, A, b = cons.matrices()
    scale = max(1.0, float(np.max(np.abs(x))))
    slack = G @ x - h
    norms = np.maximum(1.0, np.linalg.norm(G, axis=1))
    cand = [k for k in np.argsort(np.abs(slack) / norms, kind="stable")
            if abs(slack[k]) <= 1e-6 * norms[k] * scale]
    rows, rhs = list(A), list(b)
    for k in cand:
        if len(rows) == n:
            break
        trial = np.array(rows + [G[k]])
        if np.linalg.matrix_rank(trial) == len(trial):
            rows.append(G[k])
            rhs.append(h[k])
    if len(rows) != n:
        return x
    y = np.linalg.solve(np.array(rows), np.array(rhs))
    ok = (np.all(G @ y - h >= -TOL) and np.all(np.abs(A @ y - b) <= TOL)
          and c @ y >= c @ x - 1e-9 * max(1.0, abs(c @ x)))
    return y if ok else x


def _linprog(c_min, G, h, A, b, bounds):
    return linprog(c_min, A_ub=-G if len(G) else None, b_ub=-h if len(G) else None,
                   A_eq=A, b_eq=b, bounds=bounds, method="highs")


def _lexicographic(cons: ConstraintSet, c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Among optimal allocations, the one with the smallest T_0, then T_1, ..."""
    n = len(x)
    G, h, A, b = cons.matrices()
    z = float(c @ x)
    G2 = np.vstack([G, c])
    h2 = np.append(h, z - 1e-9 * max(1.0, abs(z)))
    bounds = [(0.0, None)] * n
    best = x
    for k in range(n - 1):
        goal = np.zeros(n)
        goal[k] = 1.0
        res = _linprog(goal, G2, h2, A, b, bounds)
        if res.status != 0:
            break
        best = res.x
        bounds[k] = (best[k], best[k])
    return best


def solve_optimal(scenario: Scenario) -> SolveResult:
    """Maximise the CC's expected utility over the relaxed constraint system.

    The LP is solved in ascending type order, snapped to an exact vertex, and,
    if the optimum is not unique, refined to the lexicographically smallest
    allocation in that order.
    """
    prob = _Problem.build(scenario)
    reason = prob.precheck()
    if reason:
        return prob.infeasible(reason, "lp")
    G, h, A, b = prob.cons.matrices()
    n = scenario.N
    res = _linprog(-prob.c, G, h, A, b, [(0.0, None)] * n)
    if res.status == 2:
        return prob.infeasible("relaxed constraints are infeasible", "lp")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = _polish(prob.cons, prob.c, res.x)
    diag = kkt_diagnostics(prob.cons, prob.c, x)
    if not _is_unique(prob.cons, diag, n):
        x = _polish(prob.cons, prob.c, _lexicographic(prob.cons, prob.c, x))
        diag = kkt_diagnostics(prob.cons, prob.c, x)
    return prob.result(x, "lp", diag)


def solve_two_ci(scenario: Scenario) -> SolveResult:
    """Closed form for two CIs: ``T_low = t_min(low)``, ``T_high = t_max - T_low``.

    Reported infeasible when the two minimums exceed the budget, or when the
    closed-form point breaks a relaxed constraint (e.g. a binding upward IC);
    the latter is named in ``reason``. Multipliers are recovered at the point,
    and a large stationarity residual flags that the point is not optimal
    (the closed form needs the higher type to carry the larger LP weight).
    """
    if scenario.N != 2:
        raise ValueError(f"solve_two_ci needs exactly 2 CIs, got {scenario.N}")
    prob = _Problem.build(scenario)
    reason = prob.precheck()
    if reason:
        return prob.infeasible(reason, "closed_form")
    t_low = prob.t_min[0]
    x = np.array([t_low, scenario.t_max - t_low])
    rep = prob.cons.evaluate(x)
    if not rep.satisfied:
        return prob.infeasible("closed form violates " + ", ".join(rep.labels()), "closed_form")
    return prob.result(x, "closed_form", kkt_diagnostics(prob.cons, prob.c, x))


def lipschitz_bound(scenario: Scenario) -> float:
    """Sum of |c_i|: bounds the objective change per unit grid step."""
    return float(np.abs(objective_coefficients(scenario.beliefs, scenario.ladder)).sum())


def _compositions(d: int, kmax: int):
    """Chunks of nonnegative integer vectors of length d with sum <= kmax, lexicographic."""
    if d == 0:
        yield np.zeros((1, 0), dtype=np.int64)
        return
    if d == 1:
        yield np.arange(kmax + 1, dtype=np.int64)[:, None]
        return
    for prefix in _prefixes(d - 2, kmax):
        rem = kmax - sum(prefix)
        a, bb = np.meshgrid(np.arange(rem + 1), np.arange(rem + 1), indexing="ij")
        keep = (a + bb).ravel() <= rem
        tail = np.column_stack([a.ravel()[keep], bb.ravel()[keep]])
        head = np.broadcast_to(np.array(prefix, dtype=np.int64), (len(tail), len(prefix)))
        yield np.hstack([head, tail])


def _prefixes(d: int, kmax: int):
    if d == 0:
        yield ()
        return
    for k in range(kmax + 1):
        for rest in _prefixes(d - 1, kmax - k):
            yield (k,) + rest


def brute_force_oracle(scenario: Scenario, step: float) -> SolveResult:
    """Best allocation on a grid, found by enumeration.

    Grid points are ``T_i = t_min_i + k_i * step`` for all but the highest-type
    CI, which takes whatever budget is left. Constraints and the objective are
    evaluated straight from the utility formulas, not from the LP matrices.
    Ties go to the first point in lexicographic order of ``k``.
    """
    if not step > 0:
        raise ValueError("grid step must be positive")
    prob = _Problem.build(scenario)
    sc = prob.sub
    lad = sc.ladder
    n = sc.N
    tmin = prob.t_min
    spare = scenario.t_max - float(tmin.sum())
    if spare < -TOL:
        return prob.infeasible("empty grid: minimum resources exceed t_max", "oracle")
    kmax = int(math.floor(max(spare, 0.0) / step + 1e-9))
    d = n - 1
    points = math.comb(kmax + d, d)
    if points > MAX_GRID_POINTS:
        raise ValueError(f"grid has {points} points (limit {MAX_GRID_POINTS}); use a larger step")

    types = [prob.assigned[i] for i in prob.order]
    th = np.array([lad.theta_levels[t[1]] for t in types])
    w = np.array([lad.w_levels[t[0]] for t in types])
    r = np.array([lad.reward_rates[t[0]] for t in types])
    theta_mean = sc.beliefs.q @ np.asarray(lad.theta_levels)
    beta, v = sc.beta, sc.v

    best_val, best_x = -np.inf, None
    for ks in _compositions(d, kmax):
        T = np.empty((len(ks), n))
        T[:, :d] = tmin[:d] + ks * step
        T[:, d] = scenario.t_max - T[:, :d].sum(axis=1)
        ok = T[:, d] >= tmin[d] - TOL
        ok &= ci_utility(th[0], w[0], T[:, 0], r[0], beta, v) >= -TOL
        for i in range(1, n):
            own = ci_utility(th[i], w[i], T[:, i], r[i], beta, v)
            down = ci_utility(th[i], w[i], T[:, i - 1], r[i - 1], beta, v)
            ok &= own - down >= -TOL
            own_prev = ci_utility(th[i - 1], w[i - 1], T[:, i - 1], r[i - 1], beta, v)
            up = ci_utility(th[i - 1], w[i - 1], T[:, i], r[i], beta, v)
            ok &= own_prev - up >= -TOL
        if not ok.any():
            continue
        val = np.zeros(len(T))
        for i in range(n):
            inner = sum(sc.beliefs.p[i, j] * cc_utility_single(1.0, lad.w_levels[j], T[:, i],
                                                               lad.reward_rates[j])
                        for j in range(lad.M))
            val += theta_mean[i] * inner
        val = np.where(ok, val, -np.inf)
        top = val.max()
        if top > best_val + 1e-9 * max(1.0, abs(best_val) if np.isfinite(best_val) else 1.0):
            first = int(np.flatnonzero(val >= top - 1e-9 * max(1.0, abs(top)))[0])
            best_val, best_x = float(val[first]), T[first].copy()
    if best_x is None:
        return prob.infeasible("no grid point satisfies the relaxed constraints", "oracle")
    return prob.result(best_x, "oracle")


def equal_allocation(scenario: Scenario) -> ContractMenu:
    """Baseline menu splitting the budget evenly; no feasibility claims."""
    assigned = scenario.assigned_types()
    t = np.full(scenario.N, scenario.t_max / scenario.N)
    return ContractMenu.from_allocation(t, assigned, scenario.ladder)


__all__ = [
    "KktDiagnostics", "SolveResult", "solve_optimal", "solve_two_ci", "brute_force_oracle",
    "equal_allocation", "kkt_diagnostics", "lipschitz_bound", "OPTIMAL", "INFEASIBLE",
    "IR_UNSATISFIABLE",
]
