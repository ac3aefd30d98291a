"""Problem-instance types and the elementary utility formulas.

A control center (CC) owns ``t_max`` units of protection resources and offers
contracts ``(T, R(T))`` to N critical infrastructures (CIs). Each CI has a
hidden vulnerability level ``w`` and criticality level ``theta``; the CC only
holds belief matrices over those levels.

Level indices are 0-based throughout the package.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-9

TypeIndex = tuple[int, int]  # (w_index, theta_index)


@dataclass(frozen=True)
class TypeLadder:
    """Ordered vulnerability/criticality levels with per-w-level rates and minimums."""

    w_levels: tuple[float, ...]
    theta_levels: tuple[float, ...]
    reward_rates: tuple[float, ...]
    t_min: tuple[float, ...]

    def __post_init__(self):
        for name in ("w_levels", "theta_levels", "reward_rates", "t_min"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))

    @property
    def M(self) -> int:
        return len(self.w_levels)

    @property
    def K(self) -> int:
        return len(self.theta_levels)

    def composite(self, t: TypeIndex) -> float:
        """theta * w for a (w_index, theta_index) pair."""
        return self.theta_levels[t[1]] * self.w_levels[t[0]]


@dataclass(frozen=True)
class LadderReport:
    ok: bool
    violations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def validate_ladder(ladder: TypeLadder) -> LadderReport:
    """Collect every broken ordering/separation property of ``ladder``.

    Violations are returned as data; nothing is raised.
    """
    w, th, r, tm = ladder.w_levels, ladder.theta_levels, ladder.reward_rates, ladder.t_min
    out: list[str] = []
    if not w:
        out.append("w_levels is empty")
    if not th:
        out.append("theta_levels is empty")
    if len(r) != len(w):
        out.append(f"reward_rates has {len(r)} entries, expected {len(w)} (one per w level)")
    if len(tm) != len(w):
        out.append(f"t_min has {len(tm)} entries, expected {len(w)} (one per w level)")
    for name, seq in (("w_levels", w), ("theta_levels", th), ("reward_rates", r)):
        for i, x in enumerate(seq):
            if not x > 0:
                out.append(f"{name}[{i}]={x} is not positive")
    for i, x in enumerate(tm):
        if x < 0:
            out.append(f"t_min[{i}]={x} is negative")
    for i in range(len(w) - 1):
        if not w[i] < w[i + 1]:
            out.append(f"w_levels not strictly increasing at {i}: {w[i]} >= {w[i + 1]}")
    for i in range(len(th) - 1):
        if not th[i] < th[i + 1]:
            out.append(f"theta_levels not strictly increasing at {i}: {th[i]} >= {th[i + 1]}")
    if th:
        for i in range(len(w) - 1):
            lhs, rhs = th[-1] * w[i], th[0] * w[i + 1]
            if lhs > rhs:
                out.append(
                    f"separation broken at w index {i}: theta_K*w_i={lhs} > theta_1*w_(i+1)={rhs}"
                )
    for i in range(len(r) - 1):
        if not r[i] < r[i + 1]:
            out.append(f"reward_rates not strictly increasing at {i}: {r[i]} >= {r[i + 1]}")
    for i in range(len(tm) - 1):
        if tm[i] > tm[i + 1]:
            out.append(f"t_min decreasing at {i}: {tm[i]} > {tm[i + 1]}")
    return LadderReport(ok=not out, violations=tuple(out))


def make_theta_ladder(w_levels: Sequence[float], K: int, spread: float = 1.0) -> tuple[float, ...]:
    """Geometric criticality levels that respect the w separation bound.

    ``theta_1 = 1`` and ``theta_K / theta_1 = 1 + spread * (B - 1)`` where B is the
    smallest ratio between consecutive w levels. With a single w level there is
    no bound and B is taken as 2.
    """
    w = [float(x) for x in w_levels]
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not w or any(not a < b for a, b in zip(w, w[1:])) or w[0] <= 0:
        raise ValueError("w_levels must be positive and strictly increasing")
    if not 0 < spread <= 1:
        raise ValueError(f"spread must lie in (0, 1], got {spread}")
    if K == 1:
        return (1.0,)
    bound = min((b / a for a, b in zip(w, w[1:])), default=2.0)
    ratio = 1.0 + spread * (bound - 1.0)
    theta = [ratio ** (k / (K - 1)) for k in range(K)]
    theta[0] = 1.0
    theta[-1] = ratio
    # float rounding can push theta_K * w_i a hair above w_(i+1)
    while any(theta[-1] * a > b for a, b in zip(w, w[1:])):
        theta[-1] = float(np.nextafter(theta[-1], 0.0))
    if any(not a < b for a, b in zip(theta, theta[1:])):
        raise ValueError("w ratios too tight to fit K strictly increasing theta levels")
    return tuple(theta)


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BeliefMatrix:
    """Row-stochastic beliefs: ``p[i, j]`` over w levels, ``q[i, k]`` over theta levels."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p, q = _frozen(self.p, 2), _frozen(self.q, 2)
        if p.shape[0] != q.shape[0]:
            raise ValueError(f"p has {p.shape[0]} rows but q has {q.shape[0]}")
        for name, m in (("p", p), ("q", q)):
            if np.any(m < 0) or np.any(m > 1):
                raise ValueError(f"{name} has entries outside [0, 1]")
            bad = np.flatnonzero(np.abs(m.sum(axis=1) - 1.0) > ROW_SUM_TOL)
            if bad.size:
                raise ValueError(f"{name} rows {bad.tolist()} do not sum to 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def N(self) -> int:
        return self.p.shape[0]

    def modal_types(self) -> list[TypeIndex]:
        """Most likely (w_index, theta_index) per CI; ties go to the lower index."""
        return [(int(np.argmax(pr)), int(np.argmax(qr))) for pr, qr in zip(self.p, self.q)]

    def subset(self, idx: Sequence[int]) -> "BeliefMatrix":
        idx = list(idx)
        return BeliefMatrix(self.p[idx], self.q[idx])


@dataclass(frozen=True, eq=False)
class Scenario:
    ladder: TypeLadder
    beliefs: BeliefMatrix
    true_types: tuple[TypeIndex, ...]
    t_max: float
    beta: float
    v: float

    def __post_init__(self):
        tt = tuple((int(a), int(b)) for a, b in self.true_types)
        object.__setattr__(self, "true_types", tt)
        object.__setattr__(self, "t_max", float(self.t_max))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "v", float(self.v))
        if self.beliefs.N < 1:
            raise ValueError("a scenario needs at least one CI")
        if len(tt) != self.beliefs.N:
            raise ValueError(f"{len(tt)} true types for {self.beliefs.N} CIs")
        if self.beliefs.p.shape[1] != self.ladder.M or self.beliefs.q.shape[1] != self.ladder.K:
            raise ValueError("belief matrix widths do not match the ladder")
        for a, b in tt:
            if not (0 <= a < self.ladder.M and 0 <= b < self.ladder.K):
                raise ValueError(f"true type {(a, b)} outside the ladder")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.v > 0:
            raise ValueError(f"v must be positive, got {self.v}")
        if self.t_max < 0:
            raise ValueError(f"t_max must be nonnegative, got {self.t_max}")

    @property
    def N(self) -> int:
        return self.beliefs.N

    def assigned_types(self) -> list[TypeIndex]:
        return self.beliefs.modal_types()

    def subset(self, idx: Sequence[int]) -> "Scenario":
        """Scenario restricted to CIs ``idx`` (re-indexed in the given order)."""
        idx = list(idx)
        return Scenario(
            self.ladder,
            self.beliefs.subset(idx),
            tuple(self.true_types[i] for i in idx),
            self.t_max,
            self.beta,
            self.v,
        )

    def replace(self, **kw) -> "Scenario":
        fields = dict(
            ladder=self.ladder,
            beliefs=self.beliefs,
            true_types=self.true_types,
            t_max=self.t_max,
            beta=self.beta,
            v=self.v,
        )
        fields.update(kw)
        return Scenario(**fields)

    def to_dict(self) -> dict:
        return {
            "w_levels": list(self.ladder.w_levels),
            "theta_levels": list(self.ladder.theta_levels),
            "reward_rates": list(self.ladder.reward_rates),
            "t_min": list(self.ladder.t_min),
            "p": self.beliefs.p.tolist(),
            "q": self.beliefs.q.tolist(),
            "true_types": [list(t) for t in self.true_types],
            "t_max": self.t_max,
            "beta": self.beta,
            "v": self.v,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        missing = {"w_levels", "theta_levels", "reward_rates", "t_min", "p", "q",
                   "true_types", "t_max", "beta", "v"} - d.keys()
        if missing:
            raise ValueError(f"scenario is missing fields: {sorted(missing)}")
        ladder = TypeLadder(d["w_levels"], d["theta_levels"], d["reward_rates"], d["t_min"])
        return cls(
            ladder=ladder,
            beliefs=BeliefMatrix(d["p"], d["q"]),
            true_types=tuple(tuple(t) for t in d["true_types"]),
            t_max=d["t_max"],
            beta=d["beta"],
            v=d["v"],
        )

    def digest(self) -> str:
        """Short content hash used in experiment provenance."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class ContractEntry:
    ci: int
    t: float
    reward: float
    w_index: int
    theta_index: int

    @property
    def assigned(self) -> TypeIndex:
        return (self.w_index, self.theta_index)


@dataclass(frozen=True)
class ContractMenu:
    """One (T, R) pair per CI, listed in ascending order of assigned composite type."""

    entries: tuple[ContractEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_allocation(cls, t_by_ci, assigned: Sequence[TypeIndex], ladder: TypeLadder,
                        order: Sequence[int] | None = None) -> "ContractMenu":
        """Build a menu with rewards ``r_w * T`` from per-CI allocations.

        ``order`` lists CI indices in ascending composite type; when omitted it
        is computed with :func:`type_order`.
        """
        t_by_ci = [float(x) for x in t_by_ci]
        if len(t_by_ci) != len(assigned):
            raise ValueError("allocation and assigned types differ in length")
        if order is None:
            order = type_order(assigned, ladder)
        entries = []
        for i in order:
            w_i, th_i = assigned[i]
            entries.append(ContractEntry(i, t_by_ci[i], ladder.reward_rates[w_i] * t_by_ci[i], w_i, th_i))
        return cls(tuple(entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def t(self) -> np.ndarray:
        """Allocations in menu (sorted) order."""
        return np.array([e.t for e in self.entries])

    @property
    def rewards(self) -> np.ndarray:
        return np.array([e.reward for e in self.entries])

    def t_by_ci(self) -> np.ndarray:
        out = np.zeros(len(self.entries))
        for e in self.entries:
            out[e.ci] = e.t
        return out

    def position_of(self, ci: int) -> int:
        for k, e in enumerate(self.entries):
            if e.ci == ci:
                return k
        raise KeyError(ci)

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"ci": e.ci, "t": e.t, "reward": e.reward, "w_index": e.w_index,
                 "theta_index": e.theta_index}
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContractMenu":
        return cls(tuple(
            ContractEntry(int(e["ci"]), float(e["t"]), float(e["reward"]),
                          int(e["w_index"]), int(e["theta_index"]))
            for e in d["entries"]
        ))


def type_order(assigned: Sequence[TypeIndex], ladder: TypeLadder) -> list[int]:
    """CI indices sorted by composite theta*w, then w index, then CI index."""
    return sorted(range(len(assigned)),
                  key=lambda i: (ladder.composite(assigned[i]), assigned[i][0], i))


def ci_utility(theta: float, w: float, t: float, reward_rate: float, beta: float, v: float) -> float:
    """Utility of a CI of type (theta, w) taking ``t`` resources at ``reward_rate``."""
    return theta * w * v * t - beta * (reward_rate * t)


def cc_utility_single(theta: float, w: float, t: float, reward_rate: float) -> float:
    """CC utility from protecting one CI of known type."""
    return theta * w * (reward_rate * t - t)


def objective_coefficients(beliefs: BeliefMatrix, ladder: TypeLadder) -> np.ndarray:
    """Per-CI weight ``c_i`` such that the CC expected utility equals ``sum c_i T_i``."""
    theta = np.asarray(ladder.theta_levels)
    w = np.asarray(ladder.w_levels)
    r = np.asarray(ladder.reward_rates)
    return (beliefs.q @ theta) * (beliefs.p @ (w * (r - 1.0)))


def cc_expected_utility(menu: ContractMenu, beliefs: BeliefMatrix, ladder: TypeLadder) -> float:
    """Expected CC utility of a menu under the CC's beliefs.

    The inner reward applies the rate of each hypothesised w level to the
    CI's allocation, i.e. ``r_j * T_i``.
    """
    if len(menu) != beliefs.N:
        raise ValueError(f"menu has {len(menu)} entries for {beliefs.N} CIs")
    if beliefs.p.shape[1] != ladder.M or beliefs.q.shape[1] != ladder.K:
        raise ValueError("belief matrix widths do not match the ladder")
    t = menu.t_by_ci()
    return float(objective_coefficients(beliefs, ladder) @ t)
