"""Contract menus for allocating protection resources to critical infrastructures.

A control center designs one (resources, reward) pair per infrastructure from
probabilistic knowledge of their vulnerability and criticality levels, such
that every infrastructure prefers the entry designed for its own type.
"""

from .domain import (BeliefMatrix, ContractEntry, ContractMenu, Scenario, TypeLadder,
                     cc_expected_utility, cc_utility_single, ci_utility, make_theta_ladder,
                     validate_ladder)
from .feasibility import (ConstraintSet, FeasibilityReport, build_full_constraints,
                          build_relaxed_constraints, check_ic_full, check_ir, check_monotonicity,
                          verify_theorem1)
from .negotiation import NegotiationTrace, ci_agent_choose, least_critical, run_negotiation
from .solver import (KktDiagnostics, SolveResult, brute_force_oracle, equal_allocation,
                     solve_optimal, solve_two_ci)

__version__ = "0.1.0"
