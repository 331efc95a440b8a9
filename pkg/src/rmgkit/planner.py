"""Backward-induction engines for robust Markov games.

Robust values are computed from support functions: at every (h, s)

    Q_i = E_mu[r*_i] - sigma_R(-mu_i mu_{-i}^T) - sigma_P(-V_{i,h+1} mu^T)

where the reward term comes from ``reward_support`` and the transition term
from ``transition_duals``.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import regularizers as regs
from .game import GameSpec, Policy, ValueTable, nominal_q, random_policy, validate_policy
from .regularized import regularized_eval_many
from .reward_support import (RewardSetDesc, own_regularizer, regularizer_from_uncertainty,
                             support_reward, support_reward_batch, to_player_matrix)
from .simplex import joint_product, lp_norm
from .stage import best_response_regularized, solve_general_sum_support_enum, solve_stage
from .transition_duals import SA_FAMILIES, TransSetDesc, s_rect_ball_transition

log = logging.getLogger(__name__)

SINGLETON = RewardSetDesc("singleton")
DUAL_FAMILIES = ("sa_kl", "sa_chi2", "sa_wasserstein")


class NotDecomposableError(ValueError):
    pass


@dataclass(eq=False)
class RMGInstance:
    """A nominal game plus its uncertainty sets.

    ``reward_sets`` maps ``(i, h, s)`` to a descriptor; missing keys fall back
    to ``reward_default``.  Interval bounds are given over global joint actions.
    """

    game: GameSpec
    reward_default: RewardSetDesc = SINGLETON
    reward_sets: dict = field(default_factory=dict)
    trans: TransSetDesc = field(default_factory=TransSetDesc)
    decomposable: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_instance(self)

    def reward_set(self, i: int, h: int, s: int) -> RewardSetDesc:
        return self.reward_sets.get((i, h, s), self.reward_default)

    def all_reward_sets(self):
        g = self.game
        for i in range(g.num_players):
            for h in range(g.horizon):
                for s in range(g.num_states):
                    yield (i, h, s), self.reward_set(i, h, s)

    @property
    def uses_dual(self) -> bool:
        return not self.trans.is_singleton and self.trans.family in DUAL_FAMILIES

    @property
    def contains_nominal(self) -> bool:
        return all(d.contains_nominal for _, d in self.all_reward_sets())


def validate_instance(inst: RMGInstance) -> RMGInstance:
    g = inst.game
    J = g.num_joint
    problems = []
    for (i, h, s), d in inst.all_reward_sets():
        if d.family == "interval" and len(d.lo) != J:
            problems.append(f"reward set {(i, h, s)}: interval has {len(d.lo)} entries, expected {J}")
        if d.family == "kernel" and d.kernel == "kl_reference" and len(d.ref) != g.actions[i]:
            problems.append(f"reward set {(i, h, s)}: reference has wrong length")
    for key in inst.reward_sets:
        i, h, s = key
        if not (0 <= i < g.num_players and 0 <= h < g.horizon and 0 <= s < g.num_states):
            problems.append(f"reward set scope {key} out of range")
    t = inst.trans
    if not t.is_singleton or t.family != "singleton":
        b = np.asarray(t.beta)
        want = (g.horizon - 1, g.num_states) + ((J,) if t.family in SA_FAMILIES else ())
        try:
            np.broadcast_to(b, want)
        except ValueError:
            problems.append(f"transition radii shape {b.shape} does not broadcast to {want}")
        if t.family == "sa_wasserstein" and t.rho.shape != (g.num_states,) * 2:
            problems.append("metric matrix shape does not match the state space")
    if inst.decomposable:
        problems += decomposability_problems(inst)
    if problems:
        raise ValueError("; ".join(problems))
    return inst


def decomposability_problems(inst: RMGInstance) -> list[str]:
    """Conditions for the two-player zero-sum planner: two players, zero-sum
    rewards, reward supports that split per player (or are bilinear, as for
    intervals), and transition penalties that are bilinear in the joint
    strategy (singleton, (s,a)-rectangular, or operator balls with q = 1)."""
    g = inst.game
    out = []
    if g.num_players != 2:
        out.append("needs exactly two players")
    if not g.zero_sum:
        out.append("needs the zero-sum flag")
    for key, d in inst.all_reward_sets():
        if any(p.family == "opnorm_ball" and float(p.q) != 1.0 and p.alpha > 0
               for p in _leaves(d)):
            out.append(f"reward set {key}: operator ball with q != 1 couples both players")
            break
    t = inst.trans
    if not t.is_singleton and t.family == "opnorm_ball" and float(t.q) != 1.0:
        out.append("transition operator ball with q != 1 couples both players")
    return out


def _leaves(d: RewardSetDesc):
    if d.family == "sum":
        for p in d.parts:
            yield from _leaves(p)
    else:
        yield d


def _fold_reward(d: RewardSetDesc, J: int):
    """Split a reward set's penalty into a bilinear part (added to the stage
    payoff over joint actions) and own-strategy penalties."""
    add = np.zeros(J)
    pens = []
    for leaf in _leaves(d):
        if leaf.family == "interval":
            add = add + np.asarray(leaf.lo)
        elif leaf.family == "opnorm_ball":
            if float(leaf.q) != 1.0 and leaf.alpha > 0:
                raise NotDecomposableError("operator ball with q != 1 couples both players")
            pens.append(regs.Norm(leaf.alpha, leaf.p))
        elif leaf.family == "kernel":
            pens.append(own_regularizer(regularizer_from_uncertainty(leaf), None))
    return add, regs.combine(*pens)


# --------------------------------------------------------------------------- evaluation

def transition_term(inst: RMGInstance, h: int, s: int, v_next_i, mu) -> float:
    """sigma_P(-v mu^T) at (h, s) for one value vector."""
    g = inst.game
    pb = g.transitions[h, s]
    t = inst.trans
    if t.is_singleton:
        return float(-mu @ (pb @ v_next_i))
    if t.family == "opnorm_ball":
        beta = float(t.radii(h, g.num_states, g.num_joint)[s])
        return s_rect_ball_transition(pb, v_next_i, mu, beta, t.p, t.q)
    beta = t.radii(h, g.num_states, g.num_joint)[s]
    duals = t.sa_dual_batch(pb, np.broadcast_to(v_next_i, pb.shape), beta)
    return float(mu @ duals)


def robust_stage_q(inst: RMGInstance, v_next, h: int, s: int, dists) -> np.ndarray:
    """Per-player robust stage values at (h, s) for the product strategy ``dists``;
    ``v_next`` is the (N, S) value slice at step h+1 (ignored at the last step)."""
    g = inst.game
    dists = [np.asarray(d, dtype=float) for d in dists]
    mu = joint_product(dists)
    q = g.rewards[:, h, s] @ mu
    for i in range(g.num_players):
        q[i] -= support_reward(inst.reward_set(i, h, s), i, dists, g.actions)
        if h < g.horizon - 1:
            q[i] -= transition_term(inst, h, s, np.asarray(v_next[i], float), mu)
    return q


def _transition_many(inst, h, v_next, mu):
    """sigma_P(-v mu^T) for all (t, i, s); v_next (T, N, S), mu (T, S, J)."""
    g = inst.game
    T, N, S = v_next.shape
    J = g.num_joint
    P = g.transitions[h]
    mean = np.einsum("sjk,tik->tisj", P, v_next)
    t = inst.trans
    if t.is_singleton:
        return -np.einsum("tisj,tsj->tis", mean, mu)
    if t.family == "opnorm_ball":
        beta = t.radii(h, S, J)
        pen = beta[None, None, :] * lp_norm(v_next, t.p)[:, :, None] * lp_norm(mu, t.q)[:, None, :]
        return -np.einsum("tisj,tsj->tis", mean, mu) + pen
    beta = t.radii(h, S, J)
    pb = np.broadcast_to(P[None, None], (T, N, S, J, S)).reshape(-1, S)
    vv = np.broadcast_to(v_next[:, :, None, None, :], (T, N, S, J, S)).reshape(-1, S)
    bb = np.broadcast_to(beta[None, None], (T, N, S, J)).reshape(-1)
    d = t.sa_dual_batch(pb, vv, bb).reshape(T, N, S, J)
    return np.einsum("tisj,tsj->tis", d, mu)


def robust_eval_many(inst: RMGInstance, probs) -> np.ndarray:
    """Robust values for a batch of policies: ``probs[i]`` is (T, H, S, A_i);
    returns (T, N, H+1, S)."""
    g = inst.game
    N, S, H = g.num_players, g.num_states, g.horizon
    probs = [np.asarray(p, dtype=float) for p in probs]
    T = probs[0].shape[0]
    v = np.zeros((T, N, H + 1, S))
    for h in range(H - 1, -1, -1):
        stage = [p[:, h] for p in probs]
        mu = joint_product(stage)
        val = np.einsum("isj,tsj->tis", g.rewards[:, h], mu)
        for i in range(N):
            for s in range(S):
                d = inst.reward_set(i, h, s)
                if d.family != "singleton":
                    val[:, i, s] -= support_reward_batch(d, i, [x[:, s] for x in stage], g.actions)
        if h < H - 1:
            val -= _transition_many(inst, h, v[:, :, h + 1], mu)
        v[:, :, h] = val
    return v


def robust_policy_eval(inst: RMGInstance, policy: Policy) -> ValueTable:
    validate_policy(inst.game, policy)
    return ValueTable(robust_eval_many(inst, [p[None] for p in policy.probs])[0])


def regularized_policy_eval(inst: RMGInstance, policy: Policy) -> ValueTable:
    validate_policy(inst.game, policy)
    return ValueTable(regularized_eval_many(inst, [p[None] for p in policy.probs])[0])


# --------------------------------------------------------------------------- best response

def _own_objective(inst, i, h, s, v_next_i, others, mu_shape):
    """Payoff vector and own-strategy penalty of the map x -> robust Q_i(x, others)."""
    g = inst.game
    acts = g.actions
    rest = [others[k] for k in range(g.num_players) if k != i]
    y = joint_product(rest) if rest else np.ones(1)
    c = to_player_matrix(g.rewards[i, h, s], acts, i) @ y
    pens = []
    reg_desc = regularizer_from_uncertainty(inst.reward_set(i, h, s))
    if reg_desc.kind != "zero":
        pens.append(own_regularizer(reg_desc, y, actions=acts, i=i))
    if h < g.horizon - 1:
        t = inst.trans
        pb = g.transitions[h, s]
        if t.is_singleton:
            c = c + to_player_matrix(pb @ v_next_i, acts, i) @ y
        elif t.family == "opnorm_ball":
            beta = float(t.radii(h, g.num_states, g.num_joint)[s])
            c = c + to_player_matrix(pb @ v_next_i, acts, i) @ y
            # ||x (x) y||_q = ||x||_q ||y||_q for product strategies
            w = beta * float(lp_norm(v_next_i, t.p)) * float(lp_norm(y, t.q))
            pens.append(regs.Norm(w, t.q))
        else:
            beta = t.radii(h, g.num_states, g.num_joint)[s]
            d = t.sa_dual_batch(pb, np.broadcast_to(v_next_i, pb.shape), beta)
            c = c - to_player_matrix(d, acts, i) @ y
    return c, regs.combine(*pens)


def monotone_transitions(inst: RMGInstance) -> bool:
    """Whether the robust continuation is monotone in the next-step values.

    Every (s,a)-rectangular family is (its worst case is a distribution).  The
    operator ball is not: its penalty grows with ||v||_p, so raising some
    next-step values can lower the current one, and step-wise maximization
    is no longer a best response."""
    t = inst.trans
    return t.is_singleton or t.family != "opnorm_ball" or not np.any(np.asarray(t.beta) > 0)


def robust_best_response(inst: RMGInstance, i: int, policy: Policy, eps: float = 1e-11,
                         follow_from: int | None = None):
    """Player i's robust best response to the other players' parts of ``policy``.
    Returns (best-response policy probabilities for i, value table (H+1, S)).

    With ``follow_from = k`` player i keeps its own ``policy`` from step k on
    and maximizes step-wise before k.
    """
    g = inst.game
    H, S = g.horizon, g.num_states
    k = H if follow_from is None else follow_from
    v = np.zeros((H + 1, S))
    br = np.zeros((H, S, g.actions[i]))
    for h in range(H - 1, -1, -1):
        for s in range(S):
            others = [p[h, s] for p in policy.probs]
            c, pen = _own_objective(inst, i, h, s, v[h + 1], others, None)
            if h >= k:
                x = policy.probs[i][h, s]
                val = float(c @ x - pen.value(x))
            else:
                x, val = best_response_regularized(c, pen, eps)
            br[h, s] = x
            v[h, s] = val
    return br, v


@dataclass
class GapReport:
    gaps: np.ndarray  # (N, H, S)
    max_gap: float
    values: np.ndarray  # robust values of the policy, (N, H+1, S)
    best_values: np.ndarray  # best-response values, (N, H+1, S)
    witnesses: list  # best-response probabilities per player
    exact: bool = True  # False: best values are lower bounds (non-monotone transitions)

    def certified(self, eps: float) -> bool:
        return self.max_gap <= eps

    @property
    def initial_gap_sum(self) -> float:
        return float(self.gaps[:, 0].sum(axis=0).max())


def rne_gap(inst: RMGInstance, policy: Policy, eps: float = 1e-11) -> GapReport:
    validate_policy(inst.game, policy)
    values = robust_policy_eval(inst, policy).v
    g = inst.game
    N, H = g.num_players, g.horizon
    exact = monotone_transitions(inst)
    if not exact:
        log.warning("operator-ball transitions are not monotone in the continuation; "
                    "best-response values are lower bounds from %d candidate deviations", H + 1)
    best = np.zeros_like(values)
    wit = []
    for i in range(N):
        br, vb = robust_best_response(inst, i, policy, eps)
        if not exact:
            for k in range(H + 1):
                cand, vc = robust_best_response(inst, i, policy, eps, follow_from=k)
                if vc[0, g.initial_state] > vb[0, g.initial_state]:
                    br = cand
                vb = np.maximum(vb, vc)
        best[i] = vb
        wit.append(br)
    gaps = best[:, :-1] - values[:, :-1]
    return GapReport(gaps, float(gaps.max()), values, best, wit, exact)


# --------------------------------------------------------------------------- TPZS planner

@dataclass
class SolveReport:
    policy: Policy
    values: np.ndarray  # (N, H+1, S) as recorded by the backward pass
    gap: GapReport | None
    iterations: int
    converged: bool
    eps: float
    wall_time: float
    stage_gaps: np.ndarray = None
    method: str = ""

    @property
    def max_gap(self) -> float:
        return self.gap.max_gap if self.gap is not None else math.nan

    @property
    def certified(self) -> bool:
        return self.gap is not None and self.gap.max_gap <= self.eps


def stage_game(inst: RMGInstance, h: int, s: int, v_next):
    """Two-player stage game (U1, U2, pen1, pen2) at (h, s): bilinear parts are
    folded into the payoff matrices, own-strategy penalties kept separate."""
    g = inst.game
    A1, A2 = g.actions
    U = []
    pens = []
    for i in range(2):
        add, pen = _fold_reward(inst.reward_set(i, h, s), g.num_joint)
        u = g.rewards[i, h, s] + add
        if h < g.horizon - 1:
            vi = np.asarray(v_next[i], float)
            pb = g.transitions[h, s]
            t = inst.trans
            if t.is_singleton:
                u = u + pb @ vi
            elif t.family == "opnorm_ball":
                if float(t.q) != 1.0:
                    raise NotDecomposableError("transition ball with q != 1 couples both players")
                beta = float(t.radii(h, g.num_states, g.num_joint)[s])
                u = u + pb @ vi - beta * float(lp_norm(vi, t.p))
            else:
                beta = t.radii(h, g.num_states, g.num_joint)[s]
                u = u - t.sa_dual_batch(pb, np.broadcast_to(vi, pb.shape), beta)
        U.append(u.reshape(A1, A2))
        pens.append(pen)
    return U[0], U[1], pens[0], pens[1]


def solve_tpzs_rmg(inst: RMGInstance, eps: float = 1e-6, max_iter: int = 1_000_000,
                   certify: bool = True, method: str = "auto", jobs: int = 1) -> SolveReport:
    """Backward induction with one regularized stage game per (h, s).

    Continuation values of the two players need not sum to zero once
    penalties are present, so each stage is solved as a two-player game with
    separate payoff matrices; the result is certified by the RNE gap.
    ``jobs > 1`` solves the states of one step on a thread pool; results do
    not depend on it.
    """
    probs = decomposability_problems(inst)
    if probs:
        raise NotDecomposableError("instance is not decomposable (" + "; ".join(probs)
                                   + "); use solve_small_general_sum_rmg for tiny instances")
    t0 = time.perf_counter()
    g = inst.game
    H, S = g.horizon, g.num_states
    stage_eps = eps / (4.0 * H)
    v = np.zeros((2, H + 1, S))
    pol = [np.zeros((H, S, a)) for a in g.actions]
    iters = 0
    conv = True
    sgaps = np.zeros((H, S))

    def solve_at(h, s):
        U1, U2, p1, p2 = stage_game(inst, h, s, v[:, h + 1])
        return solve_stage(U1, U2, p1, p2, stage_eps, max_iter=max_iter, method=method)

    pool = ThreadPoolExecutor(jobs) if jobs > 1 else None
    for h in range(H - 1, -1, -1):
        if pool is None:
            results = [solve_at(h, s) for s in range(S)]
        else:
            results = list(pool.map(lambda s: solve_at(h, s), range(S)))
        for s, res in enumerate(results):
            iters += res.iterations
            conv &= res.converged
            sgaps[h, s] = res.duality_gap
            pol[0][h, s], pol[1][h, s] = res.x, res.y
            v[0, h, s], v[1, h, s] = res.value, res.value2
    if pool is not None:
        pool.shutdown()
    policy = Policy(tuple(pol))
    gap = rne_gap(inst, policy) if certify else None
    wall = time.perf_counter() - t0
    return SolveReport(policy, v, gap, iters, bool(conv), eps, wall, sgaps, "tpzs")


# --------------------------------------------------------------------------- equivalence

@dataclass
class EquivalenceReport:
    max_deviation: float
    tolerance: float
    trials: int
    per_trial: np.ndarray

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance


def equivalence_check(inst: RMGInstance, trials: int = 10, seed: int = 0) -> EquivalenceReport:
    """Robust evaluation (support functions) against the independently coded
    regularized recursion on ``trials`` random policies."""
    g = inst.game
    pols = [random_policy(seed + k, g) for k in range(trials)]
    probs = [np.stack([p.probs[i] for p in pols]) for i in range(g.num_players)]
    rob = robust_eval_many(inst, probs)
    reg = regularized_eval_many(inst, probs)
    dev = np.abs(rob - reg).reshape(trials, -1).max(axis=1)
    tol = 1e-6 if inst.uses_dual else 1e-9
    return EquivalenceReport(float(dev.max()), tol, trials, dev)


# --------------------------------------------------------------------------- general-sum oracle

MAX_ORACLE_ACTIONS = 4


def solve_small_general_sum_rmg(inst: RMGInstance, eps: float = 1e-6) -> SolveReport:
    """Backward induction with an exact bimatrix equilibrium per stage.

    Supported: two players, at most four actions each, singleton or interval
    reward sets (their penalties are bilinear and fold into the stage
    matrices) and bilinear transition penalties.
    """
    g = inst.game
    if g.num_players != 2:
        raise ValueError("the general-sum oracle handles two players")
    if max(g.actions) > MAX_ORACLE_ACTIONS:
        raise ValueError(f"the general-sum oracle handles at most {MAX_ORACLE_ACTIONS} actions")
    for key, d in inst.all_reward_sets():
        if any(leaf.family not in ("singleton", "interval") for leaf in _leaves(d)):
            raise ValueError(f"reward set {key}: family {d.family!r} is not supported by the oracle")
    t = inst.trans
    if not t.is_singleton and t.family == "opnorm_ball" and float(t.q) != 1.0:
        raise ValueError("transition ball with q != 1 is not supported by the oracle")
    t0 = time.perf_counter()
    H, S = g.horizon, g.num_states
    v = np.zeros((2, H + 1, S))
    pol = [np.zeros((H, S, a)) for a in g.actions]
    for h in range(H - 1, -1, -1):
        for s in range(S):
            U1, U2, _, _ = stage_game(inst, h, s, v[:, h + 1])
            eqs = solve_general_sum_support_enum(U1, U2)
            if not eqs:
                raise RuntimeError(f"no equilibrium found at step {h}, state {s}")
            x, y, (a, b) = eqs[0]
            pol[0][h, s], pol[1][h, s] = x, y
            v[0, h, s], v[1, h, s] = a, b
    policy = Policy(tuple(pol))
    gap = rne_gap(inst, policy)
    return SolveReport(policy, v, gap, 0, True, eps, time.perf_counter() - t0, None, "support_enum")
