"""General-sum matrix games encoded as two-player zero-sum robust games.

Both constructions keep the zero-sum nominal reward ``(A - B) / 2`` and let
the uncertainty supply the missing ``(A + B) / 2`` term: either directly as an
interval reward set, or through the continuation value of a two-state second
step reached via per-action total-variation transition balls.  Under either
instance, the sum of the two players' robust gaps at a product policy equals
the Nash gap of ``(A, B)`` at that policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import GameSpec, Policy, validate_game
from .planner import RMGInstance, rne_gap
from .reward_support import RewardSetDesc
from .transition_duals import TransSetDesc


@dataclass(frozen=True, eq=False)
class GeneralSumGame:
    """Row player maximizes ``A``, column player maximizes ``B``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape != B.shape:
            raise ValueError(f"payoff matrices must be 2-D with equal shapes, got {A.shape} and {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("payoff matrices must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def shape(self):
        return self.A.shape


def gensum_ne_gap(A, B, x, y) -> float:
    """Sum of both players' best-response gains at (x, y)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Ay = A @ y
    xB = x @ B
    return float(Ay.max() - x @ Ay + xB.max() - xB @ y)


def normalize(A, B):
    """Shift both matrices by the same constant ``c = max(0, max(A + B) / 2)`` so
    that ``A + B <= 0`` entrywise.  Gaps are shift invariant; the shift is
    zero for zero-sum inputs."""
    g = GeneralSumGame(A, B)
    c = max(0.0, float((g.A + g.B).max()) / 2.0)
    return g.A - c, g.B - c, c


def _zero_sum_rewards(A, B):
    r1 = (A - B) / 2.0
    # the shift makes max(A + B) zero up to rounding
    return r1, -r1, np.minimum((A + B) / 2.0, 0.0)


def reduce_gensum_to_tpzs_reward(A, B) -> RMGInstance:
    """One state, one step; both players face the interval set
    ``[(A+B)/2, -(A+B)/2]`` around their zero-sum nominal reward."""
    A, B, shift = normalize(A, B)
    m, n = A.shape
    r1, r2, lo = _zero_sum_rewards(A, B)
    rewards = np.stack([r1.reshape(1, 1, -1), r2.reshape(1, 1, -1)])
    game = validate_game(GameSpec(2, 1, (m, n), 1, np.zeros((0, 1, m * n, 1)), rewards,
                                  zero_sum=True))
    d = RewardSetDesc("interval", lo=lo.ravel(), hi=-lo.ravel())
    return RMGInstance(game, reward_default=d, decomposable=True,
                       meta={"reduction": "reward", "shift": shift})


def reduce_gensum_to_tpzs_transition(A, B) -> RMGInstance:
    """Two states, two steps, exact nominal rewards only.

    Step 0 pays the zero-sum part.  From there every joint action leads to
    states 0 and 1 with probability one half each, perturbed inside a TV ball
    of radius ``-(A+B)/(4K)``; step 1 pays ``-K`` (state 0) and ``+K``
    (state 1) to player 1 and the negation to player 2, whatever the actions.
    Each player's worst case moves mass towards its bad state, costing exactly
    ``-(A+B)/2`` per joint action; at full radius the row becomes a point mass.
    """
    A, B, shift = normalize(A, B)
    m, n = A.shape
    J = m * n
    r1, _, lo = _zero_sum_rewards(A, B)
    K = float(-lo.min()) if lo.size else 0.0
    rewards = np.zeros((2, 2, 2, J))
    rewards[0, 0, :] = r1.ravel()
    rewards[1, 0, :] = -r1.ravel()
    rewards[0, 1, 0], rewards[0, 1, 1] = -K, K
    rewards[1, 1, 0], rewards[1, 1, 1] = K, -K
    transitions = np.full((1, 2, J, 2), 0.5)
    beta = np.zeros((1, 2, J))
    if K > 0:
        beta[0, :] = np.clip(-lo.ravel() / (2.0 * K), 0.0, 0.5)
    game = validate_game(GameSpec(2, 2, (m, n), 2, transitions, rewards, zero_sum=True))
    return RMGInstance(game, trans=TransSetDesc("sa_tv", beta=beta), decomposable=True,
                       meta={"reduction": "transition", "shift": shift, "scale": K})


def lift_policy(inst: RMGInstance, x, y) -> Policy:
    """Play (x, y) at step 0 in every state, uniform afterwards."""
    g = inst.game
    H, S = g.horizon, g.num_states
    p1 = np.full((H, S, g.actions[0]), 1.0 / g.actions[0])
    p2 = np.full((H, S, g.actions[1]), 1.0 / g.actions[1])
    p1[0, :] = x
    p2[0, :] = y
    return Policy((p1, p2))


def instance_gap_sum(inst: RMGInstance, x, y) -> float:
    """Sum over players of the robust gap at the initial state and step."""
    rep = rne_gap(inst, lift_policy(inst, x, y))
    return float(rep.gaps[:, 0, inst.game.initial_state].sum())


@dataclass
class ReductionCheck:
    max_gap_error: float
    trials: int
    gaps: np.ndarray  # (trials, 2): instance gap sum, NE gap


def verify_reduction(inst: RMGInstance, A, B, trials: int = 100, seed: int = 0) -> ReductionCheck:
    """Compare the instance's gap sum with the Nash gap of (A, B) at random policies."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    rng = np.random.default_rng(seed)
    out = np.zeros((trials, 2))
    for k in range(trials):
        x = rng.dirichlet(np.ones(A.shape[0]))
        y = rng.dirichlet(np.ones(A.shape[1]))
        out[k] = instance_gap_sum(inst, x, y), gensum_ne_gap(A, B, x, y)
    err = float(np.abs(out[:, 0] - out[:, 1]).max()) if trials else 0.0
    return ReductionCheck(err, trials, out)
