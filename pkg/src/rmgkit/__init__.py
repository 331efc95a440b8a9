"""Planning and verification for finite-horizon robust Markov games."""

from .game import (GameSpec, GameValidationError, Policy, ValueTable, make_game,
                   nominal_policy_eval, random_game, random_policy, uniform_policy,
                   validate_game, validate_policy)
from .planner import (EquivalenceReport, GapReport, NotDecomposableError, RMGInstance,
                      SolveReport, equivalence_check, rne_gap, robust_best_response,
                      robust_policy_eval, robust_stage_q, solve_small_general_sum_rmg,
                      solve_tpzs_rmg)
from .reward_support import RegularizerDesc, RewardSetDesc
from .transition_duals import TransSetDesc

__all__ = [
    "GameSpec", "GameValidationError", "Policy", "ValueTable", "make_game",
    "nominal_policy_eval", "random_game", "random_policy", "uniform_policy",
    "validate_game", "validate_policy", "EquivalenceReport", "GapReport",
    "NotDecomposableError", "RMGInstance", "SolveReport", "equivalence_check", "rne_gap",
    "robust_best_response", "robust_policy_eval", "robust_stage_q",
    "solve_small_general_sum_rmg", "solve_tpzs_rmg", "RegularizerDesc", "RewardSetDesc",
    "TransSetDesc",
]
