"""The CC's contracting loop with self-interested CI agents.

The CC designs menus from assigned (modal) types; CI agents pick entries using
their true types. When the budget cannot cover every CI the least critical one
is dropped, and dropped CIs are reconsidered once an offer round frees up
capacity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .domain import ContractEntry, ContractMenu, Scenario, ci_utility
from .solver import INFEASIBLE, SolveResult, solve_optimal

log = logging.getLogger(__name__)

TIE_TOL = 1e-9


class Phase(str, Enum):
    DECLARED = "Declared"
    REQUESTS_RECEIVED = "RequestsReceived"
    DESIGNING = "Designing"
    OFFERED = "Offered"
    SIGNED = "Signed"


@dataclass
class NegotiationState:
    phase: Phase = Phase.DECLARED
    active: list[int] = field(default_factory=list)
    excluded: list[tuple[int, int]] = field(default_factory=list)  # (ci, round)
    offers: ContractMenu | None = None
    signatures: list[int] = field(default_factory=list)

    def check(self):
        clash = {ci for ci, _ in self.excluded} & set(self.active)
        if clash:
            raise AssertionError(f"CIs both active and excluded: {sorted(clash)}")


@dataclass(frozen=True)
class Event:
    round: int
    kind: str
    ci: int | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"round": self.round, "kind": self.kind, "ci": self.ci, "detail": self.detail}


@dataclass(frozen=True)
class NegotiationTrace:
    events: tuple[Event, ...]
    menu: ContractMenu | None
    signatures: tuple[int, ...]
    excluded: tuple[tuple[int, int], ...]
    declined: tuple[int, ...]
    rounds: int
    status: str  # "signed" | "empty" | "round_cap"

    def kinds(self) -> list[str]:
        return [e.kind for e in self.events]

    def exclusion_order(self) -> list[int]:
        return [e.ci for e in self.events if e.kind == "exclude"]

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "rounds": self.rounds,
            "signatures": list(self.signatures),
            "excluded": [list(x) for x in self.excluded],
            "declined": list(self.declined),
            "menu": self.menu.to_dict() if self.menu is not None else None,
            "events": [e.to_dict() for e in self.events],
        }


def least_critical(q, active: Sequence[int]) -> int:
    """CI to drop first: lowest modal criticality level.

    Among CIs sharing that level the one held there with the higher
    probability goes first; remaining ties go to the lowest CI index.
    """
    if not active:
        raise ValueError("active set is empty")
    q = np.asarray(q, dtype=float)

    def key(i):
        row = q[i]
        level = int(np.argmax(row))
        return (level, -row[level], i)

    return min(active, key=key)


def ci_agent_choose(menu: ContractMenu, theta: float, w: float, beta: float, v: float,
                    own: int | None = None) -> int | None:
    """Position of the entry a CI of type (theta, w) picks, or None to walk away.

    The CI maximises ``theta*w*v*T - beta*R`` over the menu and rejects when
    even the best entry gives negative utility. Ties favour ``own`` (the
    position designed for this CI), then the lowest position.
    """
    if not len(menu):
        raise ValueError("empty menu")
    u = np.array([theta * w * v * e.t - beta * e.reward for e in menu.entries])
    best = float(u.max())
    if best < -TIE_TOL:
        return None
    if own is not None and u[own] >= best - TIE_TOL:
        return own
    return int(np.flatnonzero(u >= best - TIE_TOL)[0])


def _remap(menu: ContractMenu, active: Sequence[int]) -> ContractMenu:
    return ContractMenu(tuple(
        ContractEntry(active[e.ci], e.t, e.reward, e.w_index, e.theta_index) for e in menu.entries
    ))


class _Engine:
    def __init__(self, scenario: Scenario, max_rounds: int):
        self.sc = scenario
        self.max_rounds = max_rounds
        self.state = NegotiationState(active=list(range(scenario.N)))
        self.events: list[Event] = []
        self.round = 0
        self.declined: list[int] = []
        self.readmitted: set[int] = set()

    def emit(self, kind, ci=None, **detail):
        self.events.append(Event(self.round, kind, ci, detail))
        log.debug("round %d %s ci=%s %s", self.round, kind, ci, detail)

    def goto(self, phase: Phase):
        self.state.phase = phase
        self.emit("phase", phase=phase.value)

    def exclude(self, reason: str):
        st = self.state
        ci = least_critical(self.sc.beliefs.q, st.active)
        st.active.remove(ci)
        st.excluded.append((ci, self.round))
        self.emit("exclude", ci, reason=reason)

    def offer_round(self, menu: ContractMenu) -> list[int]:
        """Collect CI choices; return the CIs that did not take their own entry."""
        st = self.state
        st.offers = menu
        self.goto(Phase.OFFERED)
        self.emit("offer", active=list(st.active), t_by_position=[e.t for e in menu.entries],
                  ci_by_position=[e.ci for e in menu.entries])
        lad, beta, v = self.sc.ladder, self.sc.beta, self.sc.v
        out = []
        for pos, e in enumerate(menu.entries):
            w_i, th_i = self.sc.true_types[e.ci]
            pick = ci_agent_choose(menu, lad.theta_levels[th_i], lad.w_levels[w_i], beta, v, own=pos)
            if pick == pos:
                self.emit("accept", e.ci, position=pos)
            elif pick is None:
                self.emit("reject", e.ci)
                out.append(e.ci)
            else:
                self.emit("deviate", e.ci, position=pos, chosen=pick, chosen_ci=menu.entries[pick].ci)
                out.append(e.ci)
        return out

    def readmit(self):
        """Bring back excluded CIs (latest first) that fit in the remaining capacity."""
        st, lad = self.state, self.sc.ladder
        assigned = self.sc.assigned_types()
        need = sum(lad.t_min[assigned[i][0]] for i in st.active)
        for ci, r in reversed(list(st.excluded)):
            if ci in self.readmitted:
                continue
            extra = lad.t_min[assigned[ci][0]]
            if need + extra > self.sc.t_max:
                continue
            need += extra
            self.readmitted.add(ci)
            st.excluded.remove((ci, r))
            st.active.append(ci)
            self.emit("readmit", ci, excluded_in_round=r)
        st.active.sort()

    def run(self) -> NegotiationTrace:
        st = self.state
        self.emit("phase", phase=Phase.DECLARED.value)
        self.goto(Phase.REQUESTS_RECEIVED)
        status = "round_cap"
        final = None
        while True:
            st.check()
            if not st.active:
                status = "empty"
                break
            if self.round >= self.max_rounds:
                self.emit("round_cap", limit=self.max_rounds)
                break
            self.round += 1
            self.goto(Phase.DESIGNING)
            res = solve_optimal(self.sc.subset(st.active))
            if not res.optimal:
                self.exclude(res.reason)
                continue
            menu = _remap(res.menu, st.active)
            refused = self.offer_round(menu)
            if not refused:
                st.signatures = sorted(st.active)
                final = menu
                self.goto(Phase.SIGNED)
                self.emit("sign", signatures=list(st.signatures))
                status = "signed"
                break
            for ci in refused:
                st.active.remove(ci)
                self.declined.append(ci)
                self.emit("decline", ci)
            self.readmit()
        return NegotiationTrace(tuple(self.events), final, tuple(st.signatures),
                                tuple(st.excluded), tuple(self.declined), self.round, status)


def run_negotiation(scenario: Scenario, max_rounds: int | None = None) -> NegotiationTrace:
    """Run the design / exclude / offer / sign loop to completion.

    ``max_rounds`` caps the number of design rounds (default ``2 * N``); a
    capped run ends unsigned with status ``"round_cap"``.
    """
    cap = 2 * scenario.N if max_rounds is None else int(max_rounds)
    return _Engine(scenario, cap).run()


def design_with_exclusions(scenario: Scenario):
    """Repeat solve / drop-least-critical until the remaining CIs are solvable.

    Returns ``(result, active, excluded)`` where ``result.menu`` is indexed by
    the original CI numbers (``None`` when every CI was dropped).
    """
    active = list(range(scenario.N))
    excluded = []
    while active:
        res = solve_optimal(scenario.subset(active))
        if res.optimal:
            menu = _remap(res.menu, active)
            return SolveResult(menu, res.objective, res.status, res.diagnostics, res.reason,
                               res.method), active, excluded
        ci = least_critical(scenario.beliefs.q, active)
        active.remove(ci)
        excluded.append(ci)
    return SolveResult(None, None, INFEASIBLE, None, "every CI excluded", "lp"), active, excluded


def replay(scenario: Scenario, trace: NegotiationTrace) -> ContractMenu | None:
    """Re-solve every recorded offer and return the final menu.

    Raises ``AssertionError`` if any re-solved offer differs from the trace.
    """
    final = None
    for ev in trace.events:
        if ev.kind != "offer":
            continue
        active = ev.detail["active"]
        res = solve_optimal(scenario.subset(active))
        menu = _remap(res.menu, active)
        if [e.ci for e in menu.entries] != ev.detail["ci_by_position"] or not np.allclose(
                [e.t for e in menu.entries], ev.detail["t_by_position"], rtol=0, atol=1e-9):
            raise AssertionError(f"offer in round {ev.round} does not replay")
        final = menu
    if trace.status != "signed":
        return None
    return final


def signed_utilities(scenario: Scenario, trace: NegotiationTrace) -> dict[int, float]:
    """True-type utility of each signatory under its signed entry."""
    lad = scenario.ladder
    out = {}
    if trace.menu is None:
        return out
    for e in trace.menu.entries:
        w_i, th_i = scenario.true_types[e.ci]
        out[e.ci] = ci_utility(lad.theta_levels[th_i], lad.w_levels[w_i], e.t,
                               lad.reward_rates[e.w_index], scenario.beta, scenario.v)
    return out
