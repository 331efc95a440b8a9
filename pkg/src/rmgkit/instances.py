"""Random robust instances, one per uncertainty family."""

from __future__ import annotations

import numpy as np

from .game import random_game
from .planner import RMGInstance
from .reward_support import RewardSetDesc
from .transition_duals import TransSetDesc

REWARD_KINDS = ("singleton", "interval", "opnorm_ball", "shannon", "kl_reference", "tsallis",
                "renyi", "sum")
TRANSITION_KINDS = ("opnorm_ball", "sa_tv", "sa_kl", "sa_chi2", "sa_wasserstein")
NORM_ORDERS = (1.0, 1.5, 2.0, 3.0, np.inf)


def random_metric(rng, n: int) -> np.ndarray:
    """Distances between random points on a line: a valid finite metric."""
    pts = rng.uniform(0.0, 1.0, n)
    return np.abs(pts[:, None] - pts[None, :])


def reward_sets_for(kind: str, rng, game, scale: float = 0.3):
    """Per-(i, h, s) descriptors for one reward family."""
    N, H, S = game.num_players, game.horizon, game.num_states
    J = game.num_joint
    out = {}
    for i in range(N):
        for h in range(H):
            for s in range(S):
                if kind == "singleton":
                    d = RewardSetDesc("singleton")
                elif kind == "interval":
                    lo = -rng.uniform(0, scale, J)
                    hi = rng.uniform(0, scale, J)
                    d = RewardSetDesc("interval", lo=lo, hi=hi)
                elif kind == "opnorm_ball":
                    d = RewardSetDesc("opnorm_ball", alpha=rng.uniform(0, scale),
                                      p=float(rng.choice(NORM_ORDERS)),
                                      q=float(rng.choice(NORM_ORDERS)))
                elif kind == "kl_reference":
                    d = RewardSetDesc("kernel", kernel=kind, tau=rng.uniform(0, scale),
                                      ref=rng.dirichlet(np.ones(game.actions[i])))
                elif kind == "renyi":
                    d = RewardSetDesc("kernel", kernel=kind, tau=rng.uniform(0, scale),
                                      renyi_q=rng.uniform(0.2, 0.8))
                elif kind == "sum":
                    d = RewardSetDesc("sum", parts=(
                        RewardSetDesc("kernel", kernel="shannon", tau=rng.uniform(0, scale)),
                        RewardSetDesc("opnorm_ball", alpha=rng.uniform(0, scale),
                                      p=float(rng.choice(NORM_ORDERS)),
                                      q=float(rng.choice(NORM_ORDERS)))))
                else:
                    d = RewardSetDesc("kernel", kernel=kind, tau=rng.uniform(0, scale))
                out[(i, h, s)] = d
    return out


def transition_set_for(kind: str, rng, game, scale: float = 0.3) -> TransSetDesc:
    H, S, J = game.horizon, game.num_states, game.num_joint
    if kind == "singleton":
        return TransSetDesc()
    if kind == "opnorm_ball":
        return TransSetDesc("opnorm_ball", beta=rng.uniform(0, scale, (max(H - 1, 0), S)),
                            p=float(rng.choice(NORM_ORDERS)), q=float(rng.choice(NORM_ORDERS)))
    beta = rng.uniform(0, scale, (max(H - 1, 0), S, J))
    if kind == "sa_wasserstein":
        return TransSetDesc(kind, beta=beta, rho=random_metric(rng, S))
    return TransSetDesc(kind, beta=beta)


def random_instance(seed: int, reward: str = "singleton", transition: str = "singleton",
                    num_players: int = 2, num_states: int = 3, actions=3, horizon: int = 3,
                    zero_sum: bool = False, scale: float = 0.3) -> RMGInstance:
    """A random game with one reward family and one transition family;
    deterministic in ``seed``."""
    rng = np.random.default_rng([seed, 7919])
    game = random_game(seed, num_players, num_states, actions, horizon, zero_sum=zero_sum)
    rs = reward_sets_for(reward, rng, game, scale)
    ts = transition_set_for(transition, rng, game, scale)
    return RMGInstance(game, reward_sets=rs, trans=ts)


def decomposable_instance(seed: int, num_states: int = 5, actions=4, horizon: int = 5,
                          tau: float = 0.1, alpha: float = 0.2, p: float = 2.0,
                          transition: str = "singleton", scale: float = 0.1) -> RMGInstance:
    """Two-player zero-sum instance where every player's reward set is the
    sum of a Shannon kernel set (temperature ``tau``) and an operator ball
    with q = 1 (own-strategy ``alpha ||x||_p`` penalty)."""
    rng = np.random.default_rng([seed, 104729])
    game = random_game(seed, 2, num_states, actions, horizon, zero_sum=True)
    both = RewardSetDesc("sum", parts=(RewardSetDesc("kernel", kernel="shannon", tau=tau),
                                       RewardSetDesc("opnorm_ball", alpha=alpha, p=p, q=1.0)))
    ts = transition_set_for(transition, rng, game, scale)
    return RMGInstance(game, reward_default=both, trans=ts, decomposable=True)
