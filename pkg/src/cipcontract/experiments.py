"""Simulation studies: CC gain over equal split, CI utilities, and self-selection.

Default instance: w levels 1, 3, 9 (27 with a fourth level), four geometric
theta levels at the widest spacing the w ladder allows, reward rates
3, 6, 9(, 12), v = 2, beta = 0.5, minimums 20, 60, 100(, 140), and a budget of
500 (650 with four levels).

Beliefs put probability 0.7 on one level and spread the rest evenly; the
modal level of each CI is drawn with the experiment seed and the true type is
then sampled from the beliefs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import (BeliefMatrix, ContractMenu, Scenario, TypeLadder, cc_expected_utility,
                     ci_utility, make_theta_ladder)
from .negotiation import design_with_exclusions
from .solver import equal_allocation, solve_optimal

DEFAULT_SEED = 42
MODAL_PROB = 0.7
THETA_COUNT = 4
BASE_T_MAX = 500.0
GROWTH = 0.3  # budget added per extra CI, as a share of the base budget
REFERENCE_RATIO_N3 = 1.75

_T_MIN = (20.0, 60.0, 100.0, 140.0)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_min: int = 3
    n_max: int = 8
    budget: str = "both"  # fixed | grow | both
    seed: int = DEFAULT_SEED
    out: str | None = None
    t_max: float | None = None

    def __post_init__(self):
        if self.experiment not in ("fig1", "fig2", "fig3"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ValueError(f"empty N range {self.n_min}..{self.n_max}")
        if self.budget not in ("fixed", "grow", "both"):
            raise ValueError(f"budget must be fixed, grow or both, got {self.budget!r}")


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, row: Sequence[float]):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values for {len(self.columns)} columns")
        self.rows.append(list(row))

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.columns)
        for r in self.rows:
            wr.writerow([_fmt(x) for x in r])
        return buf.getvalue()

    def write(self, path: str | Path):
        Path(path).write_text(self.to_csv())


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    if x == 0:
        return "0"
    return format(x, ".10g")


def concentrated(levels: int, mode: int, prob: float = MODAL_PROB) -> np.ndarray:
    if levels == 1:
        return np.ones(1)
    row = np.full(levels, (1.0 - prob) / (levels - 1))
    row[mode] = prob
    return row


def default_ladder(w_count: int = 3) -> TypeLadder:
    w = tuple(3.0 ** j for j in range(w_count))
    t_min = tuple(_T_MIN[j] if j < len(_T_MIN) else _T_MIN[-1] + 40.0 * (j - 3)
                  for j in range(w_count))
    return TypeLadder(w, make_theta_ladder(w, THETA_COUNT), tuple(3.0 * (j + 1) for j in range(w_count)),
                      t_min)


def default_scenario(n: int, seed: int = DEFAULT_SEED, w_count: int = 3,
                     t_max: float | None = None) -> Scenario:
    """Seeded instance with the default parameters.

    CIs are drawn one after another from one generator, so the first k CIs of
    ``default_scenario(n)`` equal ``default_scenario(k)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ladder = default_ladder(w_count)
    if t_max is None:
        t_max = BASE_T_MAX if w_count <= 3 else 650.0
    rng = np.random.default_rng(seed)
    P, Q, true = [], [], []
    for _ in range(n):
        p = concentrated(ladder.M, int(rng.integers(ladder.M)))
        q = concentrated(ladder.K, int(rng.integers(ladder.K)))
        true.append((int(rng.choice(ladder.M, p=p)), int(rng.choice(ladder.K, p=q))))
        P.append(p)
        Q.append(q)
    return Scenario(ladder, BeliefMatrix(P, Q), tuple(true), t_max, 0.5, 2.0)


def fig2_scenario(t_max: float = 650.0) -> Scenario:
    """Four CIs on four w levels in ascending order, CI i at (w_i, theta_i)."""
    ladder = default_ladder(4)
    P = [concentrated(4, i) for i in range(4)]
    Q = [concentrated(ladder.K, i) for i in range(4)]
    return Scenario(ladder, BeliefMatrix(P, Q), tuple((i, i) for i in range(4)), t_max, 0.5, 2.0)


def utility_matrix(menu: ContractMenu, scenario: Scenario, types=None) -> np.ndarray:
    """``U[i, j]``: utility CI i (evaluated at ``types``, default true types) gets from CI j's entry."""
    types = scenario.true_types if types is None else types
    lad = scenario.ladder
    by_ci = {e.ci: e for e in menu.entries}
    n = scenario.N
    U = np.zeros((n, n))
    for i in range(n):
        w_i, th_i = types[i]
        s = lad.theta_levels[th_i] * lad.w_levels[w_i] * scenario.v
        for j in range(n):
            e = by_ci[j]
            U[i, j] = s * e.t - scenario.beta * e.reward
    return U


def _budget_modes(cfg: ExperimentConfig) -> list[str]:
    return ["fixed", "grow"] if cfg.budget == "both" else [cfg.budget]


def _fig1_point(sc: Scenario):
    """(feasible, excluded, cc_contract, cc_equal, equal_meets_min) for one instance."""
    res = solve_optimal(sc)
    excluded = 0
    if res.optimal:
        t = res.menu.t_by_ci()
    else:
        res, active, dropped = design_with_exclusions(sc)
        excluded = len(dropped)
        t = np.zeros(sc.N)
        if res.menu is not None:
            for e in res.menu.entries:
                t[e.ci] = e.t
    assigned = sc.assigned_types()
    contract = ContractMenu.from_allocation(t, assigned, sc.ladder)
    cc = cc_expected_utility(contract, sc.beliefs, sc.ladder)
    eq = cc_expected_utility(equal_allocation(sc), sc.beliefs, sc.ladder)
    meets = all(sc.t_max / sc.N >= sc.ladder.t_min[a[0]] for a in assigned)
    return excluded == 0, excluded, cc, eq, meets


def experiment_fig1(cfg: ExperimentConfig) -> ResultTable:
    """CC expected utility under the optimal menu relative to an equal split, per N.

    Budget modes: ``fixed`` keeps 500; ``grow`` adds 30% of 500 per CI beyond
    ``n_min``. When the minimums or the IC chain make an instance unsolvable
    the row is flagged (``feasible = 0``) and the contract value is that of
    the menu left after dropping least-critical CIs, unserved CIs at zero.
    """
    modes = _budget_modes(cfg)
    cols = ["n"]
    for m in modes:
        cols += [f"t_max_{m}", f"feasible_{m}", f"excluded_{m}", f"cc_contract_{m}",
                 f"cc_equal_{m}", f"ratio_{m}", f"equal_meets_min_{m}"]
    cols.append("reference_ratio")
    table = ResultTable(cols)
    full = default_scenario(cfg.n_max, cfg.seed)
    base = BASE_T_MAX if cfg.t_max is None else cfg.t_max
    hashes = {}
    for n in range(cfg.n_min, cfg.n_max + 1):
        row: list = [n]
        for m in modes:
            t_max = base if m == "fixed" else base * (1.0 + GROWTH * (n - cfg.n_min))
            sc = full.subset(range(n)).replace(t_max=t_max)
            hashes[f"{m}:{n}"] = sc.digest()
            feasible, excl, cc, eq, meets = _fig1_point(sc)
            ratio = cc / eq if eq != 0 else math.nan
            row += [t_max, feasible, excl, cc, eq, ratio, meets]
        row.append(REFERENCE_RATIO_N3 if n == 3 else math.nan)
        table.add(row)
    table.provenance = {"experiment": "fig1", "seed": cfg.seed, "scenarios": hashes,
                        "w_levels": list(full.ladder.w_levels),
                        "theta_levels": list(full.ladder.theta_levels),
                        "beliefs": f"modal probability {MODAL_PROB}, remainder uniform"}
    return table


def experiment_fig2(cfg: ExperimentConfig) -> ResultTable:
    """Realised CI utilities (true types) under the optimal menu and under an equal split."""
    sc = fig2_scenario() if cfg.t_max is None else fig2_scenario(cfg.t_max)
    res = solve_optimal(sc)
    t_opt = res.menu.t_by_ci() if res.optimal else np.zeros(sc.N)
    assigned = sc.assigned_types()
    opt = ContractMenu.from_allocation(t_opt, assigned, sc.ladder)
    eq = equal_allocation(sc)
    lad = sc.ladder
    table = ResultTable(["ci", "w_index", "theta_index", "t_contract", "utility_contract",
                         "t_equal", "utility_equal", "feasible"])
    for i in range(sc.N):
        w_i, th_i = sc.true_types[i]
        row = [i, w_i, th_i]
        for menu in (opt, eq):
            e = menu.entries[menu.position_of(i)]
            u = ci_utility(lad.theta_levels[th_i], lad.w_levels[w_i], e.t,
                           lad.reward_rates[e.w_index], sc.beta, sc.v)
            row += [e.t, u]
        row.append(res.optimal)
        table.add(row)
    table.provenance = {"experiment": "fig2", "seed": cfg.seed, "scenario": sc.digest(),
                        "status": res.status, "reason": res.reason}
    return table


def experiment_fig3(cfg: ExperimentConfig) -> ResultTable:
    """Utility of each CI (true type) at every entry of the optimal menu."""
    sc = fig2_scenario() if cfg.t_max is None else fig2_scenario(cfg.t_max)
    res = solve_optimal(sc)
    t_opt = res.menu.t_by_ci() if res.optimal else np.zeros(sc.N)
    menu = ContractMenu.from_allocation(t_opt, sc.assigned_types(), sc.ladder)
    U = utility_matrix(menu, sc)
    table = ResultTable(["ci"] + [f"contract_{j}" for j in range(sc.N)])
    for i in range(sc.N):
        table.add([i] + U[i].tolist())
    table.provenance = {"experiment": "fig3", "seed": cfg.seed, "scenario": sc.digest(),
                        "status": res.status}
    return table


RUNNERS = {"fig1": experiment_fig1, "fig2": experiment_fig2, "fig3": experiment_fig3}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    table = RUNNERS[cfg.experiment](cfg)
    if cfg.out:
        table.write(cfg.out)
    return table


def random_scenario(rng: np.random.Generator, n: int, max_spare: float = 150.0,
                    integer_budget: bool = True) -> Scenario:
    """Random instance in the default family, for property checks.

    Geometric w ladders, widest-or-narrower theta ladders, increasing rates and
    minimums, concentrated beliefs with random strength, and a budget equal to
    the assigned minimums plus a random spare amount. With ``integer_budget``
    the minimums are whole numbers and the spare amount a multiple of 12, so a
    unit grid from the minimums lands exactly on the budget and on even splits.
    """
    M = int(rng.integers(2, 5))
    K = int(rng.integers(1, 5))
    w = tuple(float(x) for x in np.cumprod(np.concatenate([[1.0], rng.uniform(2.0, 4.0, M - 1)])))
    theta = make_theta_ladder(w, K, float(rng.uniform(0.2, 1.0)))
    rates = tuple(float(x) for x in rng.uniform(1.5, 4.0) + np.concatenate(
        [[0.0], np.cumsum(rng.uniform(0.5, 4.0, M - 1))]))
    t_min = np.cumsum(rng.uniform(5.0, 40.0, M))
    t_min = tuple(float(x) for x in (np.round(t_min) if integer_budget else t_min))
    ladder = TypeLadder(w, theta, rates, t_min)
    P, Q, true = [], [], []
    for _ in range(n):
        p = concentrated(M, int(rng.integers(M)), float(rng.uniform(0.5, 0.95)))
        q = concentrated(K, int(rng.integers(K)), float(rng.uniform(0.4, 0.95)))
        true.append((int(rng.choice(M, p=p)), int(rng.choice(K, p=q))))
        P.append(p)
        Q.append(q)
    beliefs = BeliefMatrix(P, Q)
    need = sum(t_min[a] for a, _ in beliefs.modal_types())
    spare = rng.uniform(0.0, max_spare)
    if integer_budget:
        spare = 12.0 * math.floor(spare / 12.0)  # even splits among 2, 3 or 4 CIs stay on the grid
    return Scenario(ladder, beliefs, tuple(true), need + spare,
                    float(rng.uniform(0.2, 0.8)), float(rng.uniform(1.5, 3.0)))
