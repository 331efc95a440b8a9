"""Reward uncertainty sets, their support functions, and the matching
policy regularizers.

A reward set for player ``i`` at one stage is a set of perturbation matrices
``R`` in player ``i``'s orientation (rows: own actions, columns: the joint
actions of everyone else, flattened row-major).  The robust stage value is

    pi_i^T r* pi_{-i} - sigma_R(-pi_i pi_{-i}^T)

and ``sigma_R(-pi_i pi_{-i}^T)`` is the regularizer the robust game induces.

Families
--------
``singleton``
    ``R = {0}``; no regularization.
``interval``
    entrywise box ``lo <= R <= hi`` given over global joint actions.
``opnorm_ball(alpha, p, q)``
    the ball ``||R||_{q -> p*} <= alpha`` whose support at ``-x y^T`` is
    ``alpha ||x||_p ||y||_q``.  With ``q = 1`` the penalty depends on the own
    strategy only: ``alpha ||x||_p``.
``kernel(kind, tau)``
    policy-dependent per-joint-action intervals with lower endpoint
    ``-tau * omega(pi_i(a_i))``; the support is ``tau * sum_a pi_i(a) omega(pi_i(a))``.
``sum(parts)``
    Minkowski sum of other sets; supports, maximizers and regularizers add.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from . import regularizers as regs
from .simplex import check_order, conjugate_order, dual_vector, joint_product, lp_norm

KERNELS = ("shannon", "kl_reference", "tsallis", "renyi")
REWARD_FAMILIES = ("singleton", "interval", "opnorm_ball", "kernel", "sum")
REGULARIZER_KINDS = ("zero", "lp_lq_norm", "p_norm_own", "decomposable_kernel", "numeric", "sum")


# --------------------------------------------------------------------------- kernels

def _check_prob(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("kernel argument must lie in [0, 1]")
    return x


def kernel_eval(kind: str, x, ref=None, dist=None, renyi_q: float | None = None):
    """omega(x) for a separable kernel; the Renyi kernel needs the whole
    distribution ``dist`` and returns a single number."""
    if kind == "renyi":
        if dist is None or renyi_q is None:
            raise ValueError("renyi kernel is evaluated on the whole distribution (dist=, renyi_q=)")
        d = _check_prob(dist)
        return -math.log(np.sum(d ** renyi_q)) / (1.0 - renyi_q)
    x = _check_prob(x)
    with np.errstate(divide="ignore"):
        if kind == "shannon":
            return np.log(x)
        if kind == "kl_reference":
            if ref is None:
                raise ValueError("kl_reference kernel needs ref=")
            return np.log(x / np.asarray(ref, dtype=float))
    if kind == "tsallis":
        return 0.5 * (x - 1.0)
    raise ValueError(f"unknown kernel kind {kind!r}")


def kernel_grad(kind: str, x, ref=None, dist=None, renyi_q: float | None = None):
    if kind == "renyi":
        if dist is None or renyi_q is None:
            raise ValueError("renyi kernel is evaluated on the whole distribution (dist=, renyi_q=)")
        d = _check_prob(dist)
        return -renyi_q * d ** (renyi_q - 1.0) / ((1.0 - renyi_q) * np.sum(d ** renyi_q))
    x = _check_prob(x)
    if kind in ("shannon", "kl_reference"):
        with np.errstate(divide="ignore"):
            return 1.0 / x
    if kind == "tsallis":
        return np.full_like(x, 0.5)
    raise ValueError(f"unknown kernel kind {kind!r}")


def _weighted_kernel_sum(kind, pi_i, ref=None, renyi_q=None) -> float:
    """sum_a pi(a) omega(pi(a)) with 0 * omega(0) = 0."""
    x = _check_prob(pi_i)
    if kind == "shannon":
        return float(xlogy(x, x).sum())
    if kind == "kl_reference":
        return float(xlogy(x, x).sum() - xlogy(x, np.asarray(ref, dtype=float)).sum())
    if kind == "tsallis":
        return float(0.5 * np.sum(x * (x - 1.0)))
    if kind == "renyi":
        return float(kernel_eval("renyi", None, dist=x, renyi_q=renyi_q) * x.sum())
    raise ValueError(f"unknown kernel kind {kind!r}")


# --------------------------------------------------------------------------- descriptors

def _tuple(x):
    return None if x is None else tuple(float(v) for v in np.ravel(x))


@dataclass(frozen=True)
class RewardSetDesc:
    family: str = "singleton"
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None
    alpha: float = 0.0
    p: float = 2.0
    q: float = 1.0
    kernel: str | None = None
    tau: float = 0.0
    ref: tuple[float, ...] | None = None
    renyi_q: float | None = None
    parts: tuple = ()
    # recorded for documentation only; nothing consumes it
    value_bound: float | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lo", _tuple(self.lo))
        object.__setattr__(self, "hi", _tuple(self.hi))
        object.__setattr__(self, "ref", _tuple(self.ref))
        f = self.family
        if f not in REWARD_FAMILIES:
            raise ValueError(f"unknown reward set family {f!r}")
        if f == "interval":
            if self.lo is None or self.hi is None or len(self.lo) != len(self.hi):
                raise ValueError("interval set needs lo and hi of equal length")
            if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
                raise ValueError("interval set has lo > hi")
        elif f == "opnorm_ball":
            if self.alpha < 0:
                raise ValueError("ball radius must be nonnegative")
            check_order(self.p)
            check_order(self.q)
        elif f == "kernel":
            _check_kernel_params(self.kernel, self.tau, self.ref, self.renyi_q)
        elif f == "sum":
            object.__setattr__(self, "parts", tuple(self.parts))
            if not self.parts or not all(isinstance(p, RewardSetDesc) for p in self.parts):
                raise ValueError("sum set needs a nonempty tuple of parts")

    @property
    def contains_nominal(self) -> bool:
        """Whether the zero perturbation lies in the set for every policy."""
        if self.family == "sum":
            return all(p.contains_nominal for p in self.parts)
        if self.family in ("singleton", "opnorm_ball"):
            return True
        if self.family == "interval":
            return bool(np.all(np.asarray(self.lo) <= 0) and np.all(np.asarray(self.hi) >= 0))
        return self.tau == 0.0


def _check_kernel_params(kind, tau, ref, renyi_q):
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    if tau < 0:
        raise ValueError("kernel temperature must be nonnegative")
    if kind == "kl_reference":
        if ref is None or np.any(np.asarray(ref) <= 0):
            raise ValueError("kl_reference needs a strictly positive reference distribution")
    if kind == "renyi" and not (renyi_q is not None and 0.0 < renyi_q < 1.0):
        raise ValueError("renyi kernel needs q in (0, 1)")


@dataclass(frozen=True)
class RegularizerDesc:
    kind: str = "zero"
    alpha: float = 0.0
    p: float = 2.0
    q: float = 1.0
    kernel: str | None = None
    tau: float = 0.0
    ref: tuple[float, ...] | None = None
    renyi_q: float | None = None
    source: RewardSetDesc | None = None
    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ref", _tuple(self.ref))
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.kind == "lp_lq_norm" and float(self.q) == 1.0:
            # alpha ||x||_p ||y||_1 = alpha ||x||_p on the simplex
            object.__setattr__(self, "kind", "p_norm_own")
        if self.kind in ("lp_lq_norm", "p_norm_own"):
            if self.alpha < 0:
                raise ValueError("norm weight must be nonnegative")
            check_order(self.p)
            check_order(self.q)
        if self.kind == "p_norm_own":
            object.__setattr__(self, "q", 1.0)
        if self.kind == "decomposable_kernel":
            _check_kernel_params(self.kernel, self.tau, self.ref, self.renyi_q)
            dim = len(self.ref) if self.ref is not None else 3
            if not regs.spot_check_convexity(own_regularizer(self, None, dim), dim):
                raise ValueError(f"kernel {self.kernel!r} failed the convexity spot check")
        if self.kind == "numeric" and self.source is None:
            raise ValueError("numeric regularizer needs its source set")
        if self.kind == "sum":
            object.__setattr__(self, "parts", tuple(self.parts))
            if not self.parts or not all(isinstance(p, RegularizerDesc) for p in self.parts):
                raise ValueError("sum regularizer needs a nonempty tuple of parts")

    @property
    def separable(self) -> bool:
        """True when the penalty depends on the own strategy only."""
        if self.kind in ("zero", "p_norm_own"):
            return True
        if self.kind == "sum":
            return all(p.separable for p in self.parts)
        return self.kind == "decomposable_kernel"


# --------------------------------------------------------------------------- orientation

def to_player_matrix(values, actions, i: int) -> np.ndarray:
    """Global joint-action vector -> |A_i| x |A_{-i}| matrix."""
    t = np.asarray(values, dtype=float).reshape(tuple(actions))
    return np.moveaxis(t, i, 0).reshape(actions[i], -1)


def from_player_matrix(mat, actions, i: int) -> np.ndarray:
    others = [a for k, a in enumerate(actions) if k != i]
    t = np.asarray(mat, dtype=float).reshape([actions[i]] + others)
    return np.moveaxis(t, 0, i).reshape(-1)


def split_dists(dists, i):
    pi_i = np.asarray(dists[i], dtype=float)
    rest = [d for k, d in enumerate(dists) if k != i]
    pi_minus = joint_product(rest) if rest else np.ones(1)
    return pi_i, pi_minus


# --------------------------------------------------------------------------- supports

def support_interval(lo, hi, y) -> float:
    """sup over lo <= R <= hi of <R, y>."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(lo > hi):
        raise ValueError("interval set has lo > hi")
    pos = np.maximum(y, 0.0)
    neg = np.minimum(y, 0.0)
    with np.errstate(invalid="ignore"):
        up = np.where(pos > 0, hi * pos, 0.0)
        down = np.where(neg < 0, lo * neg, 0.0)
    return float(np.sum(up) + np.sum(down))


def interval_maximizer(lo, hi, y) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return np.where(np.asarray(y) > 0, hi, lo)


def support_opnorm_ball(alpha, p, q, pi_i, pi_minus_i, return_maximizer: bool = False):
    """alpha ||pi_i||_p ||pi_{-i}||_q, the support of ||R||_{q -> p*} <= alpha at
    -pi_i pi_{-i}^T.  The maximizer is the rank-one matrix alpha u w^T with
    <u, -pi_i> = ||pi_i||_p, ||u||_{p*} = 1 and <w, pi_{-i}> = ||pi_{-i}||_q,
    ||w||_{q*} = 1."""
    if alpha < 0:
        raise ValueError("ball radius must be nonnegative")
    p, q = check_order(p), check_order(q)
    x = np.asarray(pi_i, dtype=float)
    y = np.asarray(pi_minus_i, dtype=float)
    val = float(alpha * lp_norm(x, p) * lp_norm(y, q))
    if not return_maximizer:
        return val
    u = dual_vector(-x, p)
    w = dual_vector(y, q)
    return val, alpha * np.outer(u, w)


def support_kernel(kind, tau, pi_i, pi_minus_i=None, ref=None, renyi_q=None) -> float:
    """tau * sum_a pi_i(a) omega(pi_i(a)); independent of the opponents."""
    if tau < 0:
        raise ValueError("kernel temperature must be nonnegative")
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return float(tau * _weighted_kernel_sum(kind, pi_i, ref, renyi_q))


def kernel_interval(kind, tau, pi_i, n_others: int, ref=None, renyi_q=None):
    """Policy-dependent per-joint-action interval (player orientation) whose
    support at -pi_i pi_{-i}^T equals support_kernel."""
    x = np.asarray(pi_i, dtype=float)
    if kind == "renyi":
        om = np.full(x.shape, kernel_eval("renyi", None, dist=x, renyi_q=renyi_q))
    else:
        om = kernel_eval(kind, x, ref=ref)
    lo = -tau * om
    lo = np.where(np.isnan(lo), 0.0, lo)
    hi = np.maximum(lo, 0.0)
    return np.repeat(lo[:, None], n_others, axis=1), np.repeat(hi[:, None], n_others, axis=1)


def support_reward(desc: RewardSetDesc, i: int, dists, actions) -> float:
    """sigma_R(-pi_i pi_{-i}^T) for player i at a stage with per-player strategies ``dists``."""
    f = desc.family
    if f == "singleton":
        return 0.0
    if f == "sum":
        return float(sum(support_reward(p, i, dists, actions) for p in desc.parts))
    pi_i, pi_minus = split_dists(dists, i)
    if f == "interval":
        mu = joint_product([np.asarray(d, dtype=float) for d in dists])
        return support_interval(desc.lo, desc.hi, -mu)
    if f == "opnorm_ball":
        return support_opnorm_ball(desc.alpha, desc.p, desc.q, pi_i, pi_minus)
    return support_kernel(desc.kernel, desc.tau, pi_i, pi_minus, desc.ref, desc.renyi_q)


def support_reward_batch(desc: RewardSetDesc, i: int, dists, actions) -> np.ndarray:
    """``support_reward`` over a leading batch axis: ``dists[k]`` has shape (T, A_k)."""
    dists = [np.asarray(d, dtype=float) for d in dists]
    T = dists[0].shape[0]
    f = desc.family
    if f == "singleton":
        return np.zeros(T)
    if f == "sum":
        return sum(support_reward_batch(p, i, dists, actions) for p in desc.parts)
    if f == "interval":
        # the argument -mu is nonpositive, so the lower endpoints are active
        mu = joint_product(dists)
        lo = np.asarray(desc.lo)
        return -np.einsum("tj,j->t", mu, lo)
    x = dists[i]
    if f == "opnorm_ball":
        rest = [d for k, d in enumerate(dists) if k != i]
        y = joint_product(rest) if rest else np.ones((T, 1))
        return desc.alpha * lp_norm(x, desc.p) * lp_norm(y, desc.q)
    kind, tau = desc.kernel, desc.tau
    if kind == "shannon":
        w = xlogy(x, x).sum(axis=1)
    elif kind == "kl_reference":
        w = xlogy(x, x).sum(axis=1) - xlogy(x, np.asarray(desc.ref)[None, :]).sum(axis=1)
    elif kind == "tsallis":
        w = 0.5 * np.sum(x * (x - 1.0), axis=1)
    else:
        w = -np.log(np.sum(x ** desc.renyi_q, axis=1)) / (1.0 - desc.renyi_q)
    return tau * w


def worst_reward_perturbation(desc: RewardSetDesc, i: int, dists, actions) -> np.ndarray:
    """A maximizer R of <R, -mu> in global joint order (the worst-case reward is r* + R)."""
    J = int(np.prod(actions))
    f = desc.family
    if f == "singleton":
        return np.zeros(J)
    if f == "sum":
        return sum(worst_reward_perturbation(p, i, dists, actions) for p in desc.parts)
    pi_i, pi_minus = split_dists(dists, i)
    mu = joint_product([np.asarray(d, dtype=float) for d in dists])
    if f == "interval":
        return interval_maximizer(desc.lo, desc.hi, -mu)
    if f == "opnorm_ball":
        _, R = support_opnorm_ball(desc.alpha, desc.p, desc.q, pi_i, pi_minus, True)
        return from_player_matrix(R, actions, i)
    lo, _ = kernel_interval(desc.kernel, desc.tau, pi_i, pi_minus.size, desc.ref, desc.renyi_q)
    return from_player_matrix(lo, actions, i)


# --------------------------------------------------------------------------- dictionary

def regularizer_from_uncertainty(desc: RewardSetDesc) -> RegularizerDesc:
    f = desc.family
    if f == "singleton":
        return RegularizerDesc("zero")
    if f == "sum":
        return RegularizerDesc("sum", parts=tuple(regularizer_from_uncertainty(p) for p in desc.parts))
    if f == "opnorm_ball":
        kind = "p_norm_own" if float(desc.q) == 1.0 else "lp_lq_norm"
        return RegularizerDesc(kind, alpha=desc.alpha, p=desc.p, q=desc.q)
    if f == "kernel":
        return RegularizerDesc("decomposable_kernel", kernel=desc.kernel, tau=desc.tau,
                               ref=desc.ref, renyi_q=desc.renyi_q)
    return RegularizerDesc("numeric", source=desc)


def uncertainty_from_regularizer(reg: RegularizerDesc) -> RewardSetDesc:
    k = reg.kind
    if k == "zero":
        return RewardSetDesc("singleton")
    if k == "sum":
        return RewardSetDesc("sum", parts=tuple(uncertainty_from_regularizer(p) for p in reg.parts))
    if k in ("lp_lq_norm", "p_norm_own"):
        return RewardSetDesc("opnorm_ball", alpha=reg.alpha, p=reg.p, q=reg.q)
    if k == "decomposable_kernel":
        return RewardSetDesc("kernel", kernel=reg.kernel, tau=reg.tau, ref=reg.ref,
                             renyi_q=reg.renyi_q)
    return reg.source


def own_regularizer(reg: RegularizerDesc, pi_minus_i, n_own: int | None = None,
                    actions=None, i: int = 0) -> regs.OwnRegularizer:
    """The penalty as a function of player i's own strategy, opponents fixed."""
    k = reg.kind
    if k == "zero":
        return regs.Zero()
    if k == "sum":
        return regs.combine(*(own_regularizer(p, pi_minus_i, n_own, actions, i) for p in reg.parts))
    if k == "p_norm_own":
        return regs.Norm(reg.alpha, reg.p)
    if k == "lp_lq_norm":
        return regs.Norm(reg.alpha * float(lp_norm(pi_minus_i, reg.q)), reg.p)
    if k == "decomposable_kernel":
        if reg.kernel == "shannon":
            return regs.Entropic(reg.tau)
        if reg.kernel == "kl_reference":
            return regs.Entropic(reg.tau, reg.ref)
        if reg.kernel == "tsallis":
            return regs.Tsallis(reg.tau)
        return regs.Renyi(reg.tau, reg.renyi_q)
    src = reg.source
    if src.family == "interval":
        lo = to_player_matrix(src.lo, actions, i)
        return regs.Linear(tuple(-(lo @ np.asarray(pi_minus_i, dtype=float))))
    return own_regularizer(regularizer_from_uncertainty(src), pi_minus_i, n_own, actions, i)


def regularizer_value(reg: RegularizerDesc, pi_i, pi_minus_i, actions=None, i: int = 0) -> float:
    """Omega(pi) evaluated through the regularizer objects."""
    return own_regularizer(reg, pi_minus_i, len(pi_i), actions, i).value(np.asarray(pi_i, float))


def opnorm_of_rank_one(u, w, p, q) -> float:
    """||u w^T||_{q -> p*} = ||u||_{p*} ||w||_{q*}."""
    return float(lp_norm(u, conjugate_order(p)) * lp_norm(w, conjugate_order(q)))
