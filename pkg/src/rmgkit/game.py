"""Nominal finite-horizon Markov games, Markov policies and value tables.

Index conventions (fixed, also used by the file format):

* steps are 0-based internally: ``h = 0 .. H-1``; value tables carry an extra
  terminal slot ``h = H`` that is identically zero;
* joint actions are flattened row-major over ``(a_1, ..., a_N)``, so for two
  players ``joint = a_1 * |A_2| + a_2``;
* ``rewards[i, h, s, joint]`` and ``transitions[h, s, joint, s']`` with
  ``transitions`` defined for ``h = 0 .. H-2`` only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simplex import joint_product

DIST_TOL = 1e-12


class GameValidationError(ValueError):
    """Raised with the full list of violations found in a game or policy."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True, eq=False)
class GameSpec:
    num_players: int
    num_states: int
    actions: tuple[int, ...]
    horizon: int
    transitions: np.ndarray
    rewards: np.ndarray
    initial_state: int = 0
    zero_sum: bool = False

    @property
    def num_joint(self) -> int:
        return int(np.prod(self.actions))

    @property
    def joint_shape(self) -> tuple[int, ...]:
        return tuple(self.actions)

    def reward_block(self, i: int, h: int, s: int) -> np.ndarray:
        """Player i's stage reward as an |A_1| x ... x |A_N| tensor."""
        return self.rewards[i, h, s].reshape(self.joint_shape)

    def scaled(self, factor: float) -> "GameSpec":
        return GameSpec(self.num_players, self.num_states, self.actions, self.horizon,
                        self.transitions, self.rewards * factor, self.initial_state,
                        self.zero_sum)


@dataclass(frozen=True, eq=False)
class Policy:
    """probs[i] has shape (H, S, |A_i|)."""

    probs: tuple[np.ndarray, ...]

    @property
    def num_players(self) -> int:
        return len(self.probs)

    def stage(self, h: int, s: int) -> list[np.ndarray]:
        return [p[h, s] for p in self.probs]

    def joint(self, h: int) -> np.ndarray:
        """Joint product distribution at step h, shape (S, J)."""
        return joint_product([p[h] for p in self.probs])

    def replace(self, i: int, probs_i: np.ndarray) -> "Policy":
        probs = list(self.probs)
        probs[i] = np.asarray(probs_i, dtype=float)
        return Policy(tuple(probs))


@dataclass(frozen=True, eq=False)
class ValueTable:
    """v[i, h, s] for h = 0..H; the slot h = H is the zero terminal value."""

    v: np.ndarray

    @property
    def horizon(self) -> int:
        return self.v.shape[1] - 1

    def initial(self, game: GameSpec) -> np.ndarray:
        return self.v[:, 0, game.initial_state]


@dataclass
class _Problems:
    items: list[str] = field(default_factory=list)

    def add(self, msg: str) -> None:
        self.items.append(msg)


def _check_rows(arr: np.ndarray, label: str, probs: _Problems, limit: int = 10) -> None:
    if arr.size == 0:
        return
    if not np.all(np.isfinite(arr)):
        probs.add(f"{label}: non-finite entries")
        return
    neg = np.argwhere(arr < -DIST_TOL)
    for idx in neg[:limit]:
        probs.add(f"{label}{list(map(int, idx[:-1]))}: negative entry {arr[tuple(idx)]:.3g}")
    sums = arr.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > DIST_TOL)
    for idx in bad[:limit]:
        probs.add(f"{label}{list(map(int, idx))}: row sums to {sums[tuple(idx)]:.6g}")


def validate_game(game: GameSpec) -> GameSpec:
    probs = _Problems()
    n, ns, H = game.num_players, game.num_states, game.horizon
    if n < 1:
        probs.add("num_players must be positive")
    if ns < 1:
        probs.add("num_states must be positive")
    if H < 1:
        probs.add("horizon must be positive")
    if len(game.actions) != n:
        probs.add(f"actions lists {len(game.actions)} players, expected {n}")
    if any(a < 1 for a in game.actions):
        probs.add("every player needs at least one action")
    if probs.items:
        raise GameValidationError(probs.items)
    J = game.num_joint
    if game.rewards.shape != (n, H, ns, J):
        probs.add(f"rewards shape {game.rewards.shape} != {(n, H, ns, J)}")
    elif not np.all(np.isfinite(game.rewards)):
        probs.add("rewards contain non-finite values")
    if game.transitions.shape != (H - 1, ns, J, ns):
        probs.add(f"transitions shape {game.transitions.shape} != {(H - 1, ns, J, ns)}")
    else:
        _check_rows(game.transitions, "transitions", probs)
    if not 0 <= game.initial_state < ns:
        probs.add(f"initial_state {game.initial_state} out of range")
    if game.zero_sum:
        if n != 2:
            probs.add("zero_sum requires exactly two players")
        elif game.rewards.shape == (n, H, ns, J):
            dev = float(np.max(np.abs(game.rewards[0] + game.rewards[1])))
            if dev > 1e-12:
                probs.add(f"zero_sum violated: max |r_1 + r_2| = {dev:.3g}")
    if probs.items:
        raise GameValidationError(probs.items)
    return game


def validate_policy(game: GameSpec, policy: Policy) -> Policy:
    probs = _Problems()
    if policy.num_players != game.num_players:
        probs.add(f"policy has {policy.num_players} players, game has {game.num_players}")
    else:
        for i, p in enumerate(policy.probs):
            shape = (game.horizon, game.num_states, game.actions[i])
            if p.shape != shape:
                probs.add(f"policy[{i}] shape {p.shape} != {shape}")
            else:
                _check_rows(p, f"policy[{i}]", probs)
    if probs.items:
        raise GameValidationError(probs.items)
    return policy


def make_game(rewards, transitions=None, *, actions=None, initial_state: int = 0,
              zero_sum: bool = False) -> GameSpec:
    """Build and validate a game from array-likes.

    ``rewards`` has shape (N, H, S, J) or (N, H, S, A_1, ..., A_N); in the latter
    case ``actions`` is inferred.
    """
    r = np.asarray(rewards, dtype=float)
    n = r.shape[0]
    if actions is None:
        if r.ndim != 3 + n:
            raise ValueError("pass actions= when rewards are given over flattened joint actions")
        actions = r.shape[3:]
    actions = tuple(int(a) for a in actions)
    H, ns = r.shape[1], r.shape[2]
    r = r.reshape(n, H, ns, int(np.prod(actions)))
    if transitions is None:
        if H > 1 and ns > 1:
            raise ValueError("transitions required when H > 1 and S > 1")
        transitions = np.ones((H - 1, ns, r.shape[3], ns))
    t = np.asarray(transitions, dtype=float)
    return validate_game(GameSpec(n, ns, actions, H, t, r, initial_state, zero_sum))


def nominal_q(game: GameSpec, v_next: np.ndarray, h: int) -> np.ndarray:
    """r + P V_{h+1} over joint actions, shape (N, S, J)."""
    q = game.rewards[:, h].copy()
    if h < game.horizon - 1:
        q += np.einsum("sjt,it->isj", game.transitions[h], v_next)
    return q


def nominal_policy_eval(game: GameSpec, policy: Policy) -> ValueTable:
    """Backward induction under the nominal model."""
    validate_policy(game, policy)
    H = game.horizon
    v = np.zeros((game.num_players, H + 1, game.num_states))
    for h in range(H - 1, -1, -1):
        mu = policy.joint(h)
        v[:, h] = np.einsum("isj,sj->is", nominal_q(game, v[:, h + 1], h), mu)
    return ValueTable(v)


def random_game(seed: int, num_players: int, num_states: int, actions, horizon: int,
                reward_range=(0.0, 1.0), zero_sum: bool = False,
                concentration: float = 1.0) -> GameSpec:
    """Random game; deterministic in ``seed``."""
    if isinstance(actions, int):
        actions = (actions,) * num_players
    actions = tuple(int(a) for a in actions)
    if min(num_players, num_states, horizon, *actions) < 1:
        raise ValueError("dimensions must be positive")
    if zero_sum and num_players != 2:
        raise ValueError("zero_sum requires two players")
    rng = np.random.default_rng(seed)
    J = int(np.prod(actions))
    lo, hi = map(float, reward_range)
    trans = rng.dirichlet(np.full(num_states, concentration), size=(horizon - 1, num_states, J))
    trans /= trans.sum(axis=-1, keepdims=True)
    rew = rng.uniform(lo, hi, size=(num_players, horizon, num_states, J))
    if zero_sum:
        rew[1] = -rew[0]
    return validate_game(GameSpec(num_players, num_states, actions, horizon, trans, rew,
                                  0, zero_sum))


def random_policy(seed: int, game: GameSpec, uniform: bool = False,
                  concentration: float = 1.0) -> Policy:
    rng = np.random.default_rng(seed)
    probs = []
    for a in game.actions:
        shape = (game.horizon, game.num_states)
        if uniform:
            probs.append(np.full(shape + (a,), 1.0 / a))
        else:
            p = rng.dirichlet(np.full(a, concentration), size=shape)
            probs.append(p / p.sum(axis=-1, keepdims=True))
    return Policy(tuple(probs))


def uniform_policy(game: GameSpec) -> Policy:
    return random_policy(0, game, uniform=True)
