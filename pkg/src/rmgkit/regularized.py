"""Regularized policy evaluation, written independently of the robust
evaluator so the two can be compared.

Reward penalties come from the regularizer objects (``regularizers.py``), not
from the support functions.  Transition penalties use different algorithms
from ``transition_duals``: a threshold dual for TV, bisection along the
exponential tilting family for KL, per-segment golden-section search for the
chi-square truncation level, and golden-section search over the Wasserstein
multiplier.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .reward_support import own_regularizer, regularizer_from_uncertainty
from . import regularizers as regs
from .simplex import joint_product

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _rows(pbar, v, beta):
    pbar = np.atleast_2d(np.asarray(pbar, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    pbar, v = np.broadcast_arrays(pbar, v)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), pbar.shape[:1])
    return pbar, v, beta


def tv_penalty(pbar, v, beta):
    """min over eta in values(v) of -E[min(v, eta)] + beta (eta - min v)."""
    pbar, v, beta = _rows(pbar, v, beta)
    trunc = np.minimum(v[:, None, :], v[:, :, None])  # [b, k, s] = min(v_s, v_k)
    vals = -np.einsum("bks,bs->bk", trunc, pbar) + beta[:, None] * (v - v.min(axis=1, keepdims=True))
    return vals.min(axis=1)


def kl_penalty(pbar, v, beta, iters: int = 200):
    """Worst case over the KL ball through the tilting family
    p_theta ~ pbar exp(-theta v): bisection on theta for KL(p_theta || pbar) = beta."""
    pbar, v, beta = _rows(pbar, v, beta)
    B = v.shape[0]
    supp = pbar > 0
    with np.errstate(divide="ignore"):
        logp = np.where(supp, np.log(np.where(supp, pbar, 1.0)), -np.inf)
    vsup = np.where(supp, v, np.inf)
    vmin = vsup.min(axis=1)
    m0 = np.where(supp & (v == vmin[:, None]), pbar, 0.0).sum(axis=1)
    out = -np.einsum("bs,bs->b", pbar, v)
    corner = (-np.log(m0) <= beta) & (beta > 0)
    out[corner] = -vmin[corner]
    todo = (beta > 0) & ~corner
    if not np.any(todo):
        return out
    lp, vv, bb = logp[todo], np.where(supp[todo], v[todo], 0.0), beta[todo]

    def kl_mean(theta):
        z = lp - theta[:, None] * vv
        lz = logsumexp(z, axis=1)
        p = np.exp(z - lz[:, None])
        mean = np.einsum("bs,bs->b", p, vv)
        return -theta * mean - lz, mean

    vs = np.where(supp[todo], vv, np.nan)
    span = np.nanmax(vs, axis=1) - np.nanmin(vs, axis=1)
    lo = np.zeros(bb.shape)
    hi = 1.0 / np.maximum(span, 1e-300)
    for _ in range(2000):
        k, _ = kl_mean(hi)
        short = k < bb
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        k, _ = kl_mean(mid)
        below = k < bb
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    _, mean = kl_mean(0.5 * (lo + hi))
    out[todo] = -mean
    return out


def _golden(fun, lo, hi, iters):
    """Vectorized golden-section minimization of a unimodal function on [lo, hi]."""
    c = hi - _GOLD * (hi - lo)
    d = lo + _GOLD * (hi - lo)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        c = hi - _GOLD * (hi - lo)
        d = lo + _GOLD * (hi - lo)
        fc, fd = fun(c), fun(d)
    t = 0.5 * (lo + hi)
    return t, fun(t)


def chi2_penalty(pbar, v, beta, iters: int = 120):
    """min over t of -E[min(v,t)] + sqrt(beta Var(min(v,t))), golden-section
    search on every segment between consecutive values of v."""
    pbar, v, beta = _rows(pbar, v, beta)
    supp = pbar > 0
    out = -np.einsum("bs,bs->b", pbar, v)
    vals = np.sort(np.where(supp, v, np.nan), axis=1)  # nans last
    S = v.shape[1]
    best = np.full(v.shape[0], np.inf)

    def g(t):
        w = np.minimum(v, t[:, None])
        m = np.einsum("bs,bs->b", pbar, w)
        var = np.maximum(np.einsum("bs,bs->b", pbar, (w - m[:, None]) ** 2), 0.0)
        return -m + np.sqrt(beta * var)

    for k in range(S):
        left = vals[:, k]
        right = vals[:, k + 1] if k + 1 < S else left
        right = np.where(np.isnan(right), left, right)
        ok = ~np.isnan(left)
        if not np.any(ok):
            continue
        l0 = np.where(ok, left, 0.0)
        r0 = np.where(ok, right, 0.0)
        _, f = _golden(g, l0, r0, iters)
        f = np.minimum(f, g(l0))
        best = np.where(ok, np.minimum(best, f), best)
    return np.where(beta > 0, best, out)


def wasserstein_penalty(pbar, v, beta, rho, iters: int = 160):
    """Golden-section search over the multiplier of the convex piecewise-linear dual."""
    pbar, v, beta = _rows(pbar, v, beta)
    rho = np.asarray(rho, dtype=float)
    out = -np.einsum("bs,bs->b", pbar, v)
    pos = rho[rho > 0]
    span = v.max(axis=1) - v.min(axis=1)
    lam_hi = span / (pos.min() if pos.size else 1.0) + 1.0

    def f(lam):
        inner = -v[:, None, :] - lam[:, None, None] * rho[None, :, :]
        return beta * lam + np.einsum("bs,bs->b", inner.max(axis=2), pbar)

    _, fl = _golden(f, np.zeros_like(lam_hi), lam_hi, iters)
    val = np.minimum(fl, f(np.zeros_like(lam_hi)))
    return np.where(beta > 0, val, out)


def _transition_penalty(trans, pbar_h, v_next, mu, h):
    """sigma_P(-v mu^T) for every (t, i, s): v_next (T, N, S), mu (T, S, J)."""
    T, N, S = v_next.shape
    J = mu.shape[2]
    mean = np.einsum("sjk,tik->tisj", pbar_h, v_next)  # E_{Pbar(s,j)}[v]
    if trans.is_singleton:
        return -np.einsum("tisj,tsj->tis", mean, mu)
    if trans.family == "opnorm_ball":
        beta = trans.radii(h, S, J)
        out = np.empty((T, N, S))
        for t in range(T):
            for s in range(S):
                wq = regs.Norm(1.0, trans.q).value(mu[t, s])
                for i in range(N):
                    pen = regs.Norm(beta[s] * wq, trans.p).value(v_next[t, i])
                    out[t, i, s] = -mu[t, s] @ mean[t, i, s] + pen
        return out
    beta = trans.radii(h, S, J)  # (S, J)
    pb = np.broadcast_to(pbar_h[None, None], (T, N, S, J, S)).reshape(-1, S)
    vv = np.broadcast_to(v_next[:, :, None, None, :], (T, N, S, J, S)).reshape(-1, S)
    bb = np.broadcast_to(beta[None, None], (T, N, S, J)).reshape(-1)
    fam = trans.family
    if fam == "sa_tv":
        d = tv_penalty(pb, vv, bb)
    elif fam == "sa_kl":
        d = kl_penalty(pb, vv, bb)
    elif fam == "sa_chi2":
        d = chi2_penalty(pb, vv, bb)
    else:
        d = wasserstein_penalty(pb, vv, bb, trans.rho)
    return np.einsum("tisj,tsj->tis", d.reshape(T, N, S, J), mu)


def regularized_eval_many(inst, probs) -> np.ndarray:
    """Backward recursion V = E_mu[r*] - Omega_R(pi) + E_mu[Pbar V'] - Omega_P(V', pi)
    with Omega_P written as sigma_P(-V' mu^T) = -E_mu[Pbar V'] + penalty; ``probs[i]``
    has shape (T, H, S, A_i).  Returns (T, N, H+1, S)."""
    game = inst.game
    N, S, H = game.num_players, game.num_states, game.horizon
    T = probs[0].shape[0]
    acts = game.actions
    v = np.zeros((T, N, H + 1, S))
    for h in range(H - 1, -1, -1):
        mu = joint_product([p[:, h] for p in probs])  # (T, S, J)
        val = np.einsum("isj,tsj->tis", game.rewards[:, h], mu)
        for i in range(N):
            for s in range(S):
                reg_desc = regularizer_from_uncertainty(inst.reward_set(i, h, s))
                if reg_desc.kind == "zero":
                    continue
                for t in range(T):
                    rest = [probs[k][t, h, s] for k in range(N) if k != i]
                    y = joint_product(rest) if rest else np.ones(1)
                    reg = own_regularizer(reg_desc, y, actions=acts, i=i)
                    val[t, i, s] -= reg.value(probs[i][t, h, s])
        if h < H - 1:
            val -= _transition_penalty(inst.trans, game.transitions[h], v[:, :, h + 1], mu, h)
        v[:, :, h] = val
    return v
