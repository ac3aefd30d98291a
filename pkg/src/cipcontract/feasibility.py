"""Participation and self-selection constraints on contract menus.

All constraints are linear in the allocation vector T because rewards and
valuations are linear. Labels use 0-based CI indices; for the relaxed system
the CIs must already be listed in ascending composite type, so a label index
is also a position in the type ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import (BeliefMatrix, ContractMenu, Scenario, TypeIndex, TypeLadder,
                     make_theta_ladder, validate_ladder)

TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    label: str
    lhs: float
    rhs: float
    slack: float

    def to_dict(self) -> dict:
        return {"label": self.label, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack}


@dataclass(frozen=True)
class FeasibilityReport:
    satisfied: bool
    violations: tuple[Violation, ...] = ()

    @classmethod
    def from_violations(cls, violations) -> "FeasibilityReport":
        violations = tuple(violations)
        return cls(not violations, violations)

    def __and__(self, other: "FeasibilityReport") -> "FeasibilityReport":
        return FeasibilityReport.from_violations(self.violations + other.violations)

    def labels(self) -> list[str]:
        return [v.label for v in self.violations]

    def to_dict(self) -> dict:
        return {"satisfied": self.satisfied, "violations": [v.to_dict() for v in self.violations]}


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """``coeffs @ T (sense) bound`` with sense ``">="`` or ``"=="``."""

    label: str
    coeffs: np.ndarray
    bound: float
    sense: str = ">="

    @property
    def kind(self) -> str:
        return self.label.split("(", 1)[0]


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    n: int
    constraints: tuple[LinearConstraint, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.constraints)

    def count(self, kind: str) -> int:
        return sum(1 for c in self.constraints if c.kind == kind)

    def get(self, label: str) -> LinearConstraint:
        for c in self.constraints:
            if c.label == label:
                return c
        raise KeyError(label)

    @property
    def inequalities(self) -> list[LinearConstraint]:
        return [c for c in self.constraints if c.sense == ">="]

    @property
    def equalities(self) -> list[LinearConstraint]:
        return [c for c in self.constraints if c.sense == "=="]

    def matrices(self):
        """``(G, h, A, b)`` with ``G @ T >= h`` and ``A @ T == b``."""
        ineq, eq = self.inequalities, self.equalities
        G = np.array([c.coeffs for c in ineq]).reshape(len(ineq), self.n)
        h = np.array([c.bound for c in ineq])
        A = np.array([c.coeffs for c in eq]).reshape(len(eq), self.n)
        b = np.array([c.bound for c in eq])
        return G, h, A, b

    def slacks(self, t) -> np.ndarray:
        """Signed slack per constraint; equalities report ``-|residual|``."""
        t = np.asarray(t, dtype=float)
        out = np.empty(len(self.constraints))
        for k, c in enumerate(self.constraints):
            d = float(c.coeffs @ t) - c.bound
            out[k] = d if c.sense == ">=" else -abs(d)
        return out

    def evaluate(self, t, tol: float = TOL, kinds: Sequence[str] | None = None) -> FeasibilityReport:
        t = np.asarray(t, dtype=float)
        bad = []
        for c in self.constraints:
            if kinds is not None and c.kind not in kinds:
                continue
            lhs = float(c.coeffs @ t)
            slack = lhs - c.bound if c.sense == ">=" else -abs(lhs - c.bound)
            if slack < -tol:
                bad.append(Violation(c.label, lhs, c.bound, slack))
        return FeasibilityReport.from_violations(bad)


def _type_values(ladder: TypeLadder, t: TypeIndex, v: float) -> tuple[float, float]:
    """(theta * w * v, reward rate) for a type."""
    return ladder.theta_levels[t[1]] * ladder.w_levels[t[0]] * v, ladder.reward_rates[t[0]]


def _evaluating_types(menu: ContractMenu, types) -> list[TypeIndex]:
    if types is None:
        return [e.assigned for e in menu.entries]
    return [tuple(types[e.ci]) for e in menu.entries]


def check_ir(menu: ContractMenu, ladder: TypeLadder, beta: float, v: float,
             types=None, tol: float = TOL) -> FeasibilityReport:
    """Each CI's utility from its own entry must be nonnegative.

    ``types`` (indexed by CI) overrides the assigned types carried by the menu,
    e.g. to evaluate with the CIs' true types.
    """
    bad = []
    for e, tp in zip(menu.entries, _evaluating_types(menu, types)):
        s, _ = _type_values(ladder, tp, v)
        lhs = s * e.t - beta * e.reward
        if lhs < -tol:
            bad.append(Violation(f"IR({e.ci})", lhs, 0.0, lhs))
    return FeasibilityReport.from_violations(bad)


def check_ic_full(menu: ContractMenu, ladder: TypeLadder, beta: float, v: float,
                  types=None, tol: float = TOL) -> FeasibilityReport:
    """Every CI weakly prefers its own entry to every other entry."""
    bad = []
    tps = _evaluating_types(menu, types)
    for a, tp in zip(menu.entries, tps):
        s, _ = _type_values(ladder, tp, v)
        own = s * a.t - beta * a.reward
        for b in menu.entries:
            if b.ci == a.ci:
                continue
            other = s * b.t - beta * b.reward
            if own - other < -tol:
                bad.append(Violation(f"IC({a.ci},{b.ci})", own, other, own - other))
    return FeasibilityReport.from_violations(bad)


def check_monotonicity(menu: ContractMenu, ladder: TypeLadder, beta: float, v: float,
                       strict: bool = False, tol: float = TOL) -> FeasibilityReport:
    """Allocations and realised utilities must not decrease along the type order.

    With ``strict=True`` the allocation must also strictly increase wherever the
    assigned w level strictly increases and the allocation is positive.
    """
    bad = []
    entries = menu.entries
    for prev, cur in zip(entries, entries[1:]):
        cp, cc = ladder.composite(prev.assigned), ladder.composite(cur.assigned)
        if cc < cp:
            bad.append(Violation(f"ORDER({prev.ci},{cur.ci})", cc, cp, cc - cp))
        if cur.t - prev.t < -tol:
            bad.append(Violation(f"MONO_T({prev.ci},{cur.ci})", cur.t, prev.t, cur.t - prev.t))
        elif strict and cur.w_index > prev.w_index and cur.t > tol and cur.t - prev.t <= tol:
            bad.append(Violation(f"STRICT_T({prev.ci},{cur.ci})", cur.t, prev.t, cur.t - prev.t))
        sp, _ = _type_values(ladder, prev.assigned, v)
        sc, _ = _type_values(ladder, cur.assigned, v)
        up = sp * prev.t - beta * prev.reward
        uc = sc * cur.t - beta * cur.reward
        if uc - up < -tol:
            bad.append(Violation(f"MONO_U({prev.ci},{cur.ci})", uc, up, uc - up))
    return FeasibilityReport.from_violations(bad)


def is_type_sorted(assigned: Sequence[TypeIndex], ladder: TypeLadder) -> bool:
    comp = [ladder.composite(t) for t in assigned]
    return all(a <= b for a, b in zip(comp, comp[1:]))


def _coeff_rows(n: int, entries: dict[int, float]) -> np.ndarray:
    row = np.zeros(n)
    for k, x in entries.items():
        row[k] += x
    return row


def _bounds_and_budget(scenario: Scenario, assigned) -> list[LinearConstraint]:
    n = scenario.N
    out = [
        LinearConstraint(f"MIN({i})", _coeff_rows(n, {i: 1.0}), scenario.ladder.t_min[assigned[i][0]])
        for i in range(n)
    ]
    out.append(LinearConstraint("BUDGET", np.ones(n), scenario.t_max, "=="))
    return out


def build_relaxed_constraints(scenario: Scenario, assigned: Sequence[TypeIndex] | None = None
                              ) -> ConstraintSet:
    """Adjacent (local) IC constraints, IR of the lowest CI, minimums and budget.

    ``DLIC(i)``: CI i prefers its entry to CI i-1's; ``ULIC(i)``: to CI i+1's.
    Coefficients come from the assigned types; CIs must be in ascending
    composite-type order.
    """
    if assigned is None:
        assigned = scenario.assigned_types()
    assigned = [tuple(a) for a in assigned]
    n = scenario.N
    if len(assigned) != n:
        raise ValueError(f"{len(assigned)} assigned types for {n} CIs")
    if not is_type_sorted(assigned, scenario.ladder):
        raise ValueError("CIs must be sorted by ascending assigned composite type")
    beta, v = scenario.beta, scenario.v
    sv = [_type_values(scenario.ladder, a, v) for a in assigned]
    cons = []
    for i in range(1, n):
        s, r = sv[i]
        r_prev = sv[i - 1][1]
        cons.append(LinearConstraint(
            f"DLIC({i})", _coeff_rows(n, {i: s - beta * r, i - 1: -(s - beta * r_prev)}), 0.0))
    for i in range(n - 1):
        s, r = sv[i]
        r_next = sv[i + 1][1]
        cons.append(LinearConstraint(
            f"ULIC({i})", _coeff_rows(n, {i: s - beta * r, i + 1: -(s - beta * r_next)}), 0.0))
    s0, r0 = sv[0]
    cons.append(LinearConstraint("IR(0)", _coeff_rows(n, {0: s0 - beta * r0}), 0.0))
    cons.extend(_bounds_and_budget(scenario, assigned))
    return ConstraintSet(n, tuple(cons))


def build_full_constraints(scenario: Scenario, assigned: Sequence[TypeIndex] | None = None
                           ) -> ConstraintSet:
    """Unrelaxed system: every IR, every ordered IC pair, minimums and budget."""
    if assigned is None:
        assigned = scenario.assigned_types()
    assigned = [tuple(a) for a in assigned]
    n = scenario.N
    beta, v = scenario.beta, scenario.v
    sv = [_type_values(scenario.ladder, a, v) for a in assigned]
    cons = []
    for i in range(n):
        s, r = sv[i]
        cons.append(LinearConstraint(f"IR({i})", _coeff_rows(n, {i: s - beta * r}), 0.0))
    for i in range(n):
        s, r = sv[i]
        for j in range(n):
            if i != j:
                cons.append(LinearConstraint(
                    f"IC({i},{j})", _coeff_rows(n, {i: s - beta * r, j: -(s - beta * sv[j][1])}), 0.0))
    cons.extend(_bounds_and_budget(scenario, assigned))
    return ConstraintSet(n, tuple(cons))


# --- random menus for checking that local IC implies global IC -------------

def random_ladder(rng: np.random.Generator, max_levels: int = 5) -> TypeLadder:
    M = int(rng.integers(1, max_levels + 1))
    K = int(rng.integers(1, 5))
    ratios = rng.uniform(1.3, 4.0, size=M - 1)
    w = np.concatenate([[rng.uniform(0.5, 2.0)], np.zeros(M - 1)])
    for i, x in enumerate(ratios):
        w[i + 1] = w[i] * x
    theta = make_theta_ladder(w, K, float(rng.uniform(0.1, 1.0)))
    rates = np.cumsum(rng.uniform(0.5, 4.0, size=M)) + 1.0
    t_min = np.cumsum(rng.uniform(0.0, 40.0, size=M))
    return TypeLadder(tuple(w), theta, tuple(rates), tuple(t_min))


def random_sorted_types(rng: np.random.Generator, ladder: TypeLadder, n: int) -> list[TypeIndex]:
    types = [(int(rng.integers(ladder.M)), int(rng.integers(ladder.K))) for _ in range(n)]
    return [types[i] for i in sorted(range(n), key=lambda i: (ladder.composite(types[i]), types[i][0]))]


def _local_ratio_window(ladder, types, beta, v, i) -> tuple[float, float]:
    """Admissible range of T_i / T_(i-1) under DLIC(i) and ULIC(i-1)."""
    s, r = _type_values(ladder, types[i], v)
    sp, rp = _type_values(ladder, types[i - 1], v)
    lo = (s - beta * rp) / (s - beta * r)
    denom = sp - beta * r
    hi = (sp - beta * rp) / denom if denom > 0 else np.inf
    return lo, hi


def _propose_menu(rng, ladder, types, beta, v, t_max, break_ulic: bool):
    n = len(types)
    ratios = []
    windows = [_local_ratio_window(ladder, types, beta, v, i) for i in range(1, n)]
    breakable = [k for k, (lo, hi) in enumerate(windows) if np.isfinite(hi)]
    victim = int(rng.choice(breakable)) if break_ulic and breakable else None
    if break_ulic and victim is None:
        return None
    for k, (lo, hi) in enumerate(windows):
        if k == victim:
            ratios.append(hi * rng.uniform(1.01, 1.5))
            continue
        top = min(hi, lo + 3.0)
        u = rng.uniform()
        # put some mass exactly on binding constraints
        ratios.append(lo if u < 0.1 else top if u < 0.2 else rng.uniform(lo, top))
    t = np.cumprod(np.concatenate([[1.0], ratios]))
    return t * (t_max / t.sum())


def random_relaxed_menu(rng: np.random.Generator, n: int | None = None, t_max: float = 500.0,
                        break_ulic: bool = False, max_draws: int = 100_000):
    """Draw (ladder, types, beta, v, menu) whose menu meets DLIC, ULIC and IR(0).

    Proposals are built from the admissible ratio window between neighbours
    and then accepted only if the relaxed constraints check out. With
    ``break_ulic`` one upward constraint is deliberately broken instead.
    """
    for _ in range(max_draws):
        ladder = random_ladder(rng)
        k = n if n is not None else int(rng.integers(2, 7))
        types = random_sorted_types(rng, ladder, k)
        beta = float(rng.uniform(0.05, 0.95))
        v = float(rng.uniform(0.5, 4.0))
        sv = [_type_values(ladder, tp, v) for tp in types]
        if any(s - beta * r <= 0 for s, r in sv):
            continue
        t = _propose_menu(rng, ladder, types, beta, v, t_max, break_ulic)
        if t is None:
            continue
        menu = ContractMenu.from_allocation(t, types, ladder, order=range(k))
        sc = _scenario_stub(ladder, types, beta, v, t_max)
        rep = build_relaxed_constraints(sc, types).evaluate(t, kinds=("DLIC", "ULIC", "IR"))
        if rep.satisfied is not break_ulic:
            return ladder, types, beta, v, menu
    raise RuntimeError(f"no admissible menu after {max_draws} draws")


def _scenario_stub(ladder, types, beta, v, t_max) -> Scenario:
    p = np.zeros((len(types), ladder.M))
    q = np.zeros((len(types), ladder.K))
    for i, (a, b) in enumerate(types):
        p[i, a] = 1.0
        q[i, b] = 1.0
    return Scenario(ladder, BeliefMatrix(p, q), tuple(types), t_max, beta, v)


def verify_theorem1(trials: int, seed: int = 0, n: int | None = None,
                    break_ulic: bool = False) -> float:
    """Fraction of random locally-IC menus that are globally IC and IR.

    Each trial draws a fresh valid ladder, ascending assigned types and a menu
    meeting DLIC, ULIC and IR of the lowest type, then runs the full IC and IR
    checks. ``break_ulic`` is a negative control: menus break one ULIC.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(trials)
    passed = 0
    for ss in seeds:
        rng = np.random.default_rng(ss)
        ladder, _, beta, v, menu = random_relaxed_menu(rng, n=n, break_ulic=break_ulic)
        assert validate_ladder(ladder).ok
        rep = check_ic_full(menu, ladder, beta, v) & check_ir(menu, ladder, beta, v)
        passed += rep.satisfied
    return passed / trials
