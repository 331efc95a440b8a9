"""Support functions of transition uncertainty sets.

Every dual here computes ``sup_P <P, -v>`` over a ball around a nominal
next-state distribution ``pbar``.  The ``*_batch`` variants take arrays of
shape (B, S) for ``pbar`` and ``v`` and (B,) for the radius, which is how the
Bellman backups call them; the scalar wrappers return the attaining
distribution or dual variable as well.

Balls:

* TV: ``1/2 ||P - pbar||_1 <= beta``
* KL: ``KL(P || pbar) <= beta``
* chi-square: ``sum (P - pbar)^2 / pbar <= beta`` (``P`` supported on ``supp(pbar)``)
* Wasserstein-1: ``W_rho(P, pbar) <= beta`` for a finite metric ``rho``
* s-rectangular operator-norm ball: ``||P - Pbar||_{q -> p*} <= beta`` over the
  whole (next state x joint action) block, support ``-E_mu[Pbar v] + beta ||v||_p ||mu||_q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .simplex import check_order, lp_norm

TRANSITION_FAMILIES = ("singleton", "opnorm_ball", "sa_tv", "sa_kl", "sa_chi2", "sa_wasserstein")
SA_FAMILIES = ("sa_tv", "sa_kl", "sa_chi2", "sa_wasserstein")

KL_LAMBDA_LO = 1e-8
KL_LAMBDA_TOL = 1e-10
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def check_metric(rho, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("metric must be a square matrix")
    if not np.all(np.isfinite(rho)):
        raise ValueError("metric must be finite")
    if np.any(rho < -tol):
        raise ValueError("metric has negative entries")
    if np.any(np.abs(np.diag(rho)) > tol):
        raise ValueError("metric has a nonzero diagonal")
    if np.any(np.abs(rho - rho.T) > tol):
        raise ValueError("metric is not symmetric")
    # triangle inequality: rho[a, c] <= rho[a, b] + rho[b, c]
    if np.any(rho[:, None, :] > rho[:, :, None] + rho[None, :, :] + tol):
        raise ValueError("metric violates the triangle inequality")
    return rho


def _check_beta(beta) -> np.ndarray:
    b = np.asarray(beta, dtype=float)
    if np.any(~(b >= 0)):
        raise ValueError("radius must be nonnegative")
    return b


def _prep(pbar, v, beta):
    pbar = np.atleast_2d(np.asarray(pbar, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    pbar, v = np.broadcast_arrays(pbar, v)
    beta = np.broadcast_to(_check_beta(beta), pbar.shape[:1]).astype(float)
    return pbar, v, beta


# --------------------------------------------------------------------------- TV

def sa_dual_tv_batch(pbar, v, beta, return_dist: bool = False):
    """Greedy transport: move up to ``beta`` mass from the highest-value states
    onto one minimizer of ``v``."""
    pbar, v, beta = _prep(pbar, v, beta)
    B, S = v.shape
    rows = np.arange(B)
    jmin = np.argmin(v, axis=1)
    vmin = v[rows, jmin]
    order = np.argsort(-v, axis=1, kind="stable")
    avail = pbar.copy()
    avail[rows, jmin] = 0.0
    a_sorted = np.take_along_axis(avail, order, axis=1)
    before = np.cumsum(a_sorted, axis=1) - a_sorted
    moved_sorted = np.clip(beta[:, None] - before, 0.0, a_sorted)
    moved = np.empty_like(moved_sorted)
    np.put_along_axis(moved, order, moved_sorted, axis=1)
    val = -np.einsum("bs,bs->b", pbar, v) + np.einsum("bs,bs->b", moved, v - vmin[:, None])
    if not return_dist:
        return val
    dist = pbar - moved
    dist[rows, jmin] += moved.sum(axis=1)
    return val, dist


def sa_dual_tv(pbar, v, beta):
    val, dist = sa_dual_tv_batch(pbar, v, beta, return_dist=True)
    return float(val[0]), dist[0]


def tv_threshold_dual(pbar, v, beta) -> float:
    """Independent route to the TV support: min over a threshold eta of
    -E_pbar[min(v, eta)] + beta (eta - min v); the optimum sits at a value of v."""
    pbar = np.asarray(pbar, dtype=float)
    v = np.asarray(v, dtype=float)
    if beta < 0:
        raise ValueError("radius must be nonnegative")
    o = np.argsort(v)
    vs, ps = v[o], pbar[o]
    # E[min(v, vs[k])] = sum_{j<k} p_j v_j + vs[k] * mass(j >= k)
    below = np.concatenate([[0.0], np.cumsum(ps * vs)[:-1]])
    tail = np.cumsum(ps[::-1])[::-1]
    vals = -(below + vs * tail) + beta * (vs - vs[0])
    return float(vals.min())


def _upper_quantile(v, p, beta, lo, hi, bins: int = 1024, small: int = 2048) -> float:
    """Largest value eta of v with p(v >= eta) >= beta (the smallest value if
    no such one exists).  Equal-width value bins narrow the search until few
    candidates remain; only those get sorted."""
    start = 0.0  # mass strictly above the current window
    for _ in range(16):
        if v.size <= small or hi <= lo:
            break
        idx = v - lo
        idx *= (bins / (hi - lo)) * (1.0 - 1e-12)
        idx = idx.astype(np.int32)
        np.minimum(idx, bins - 1, out=idx)
        mass = np.bincount(idx, weights=p, minlength=bins)[::-1]
        cum = start + np.cumsum(mass)
        k = min(int(np.searchsorted(cum, beta)), bins - 1)
        start = float(cum[k] - mass[k])
        keep = idx == bins - 1 - k
        v, p = v[keep], p[keep]
        lo, hi = float(v.min()), float(v.max())
    o = np.argsort(-v)
    cum = start + np.cumsum(p[o])
    k = min(int(np.searchsorted(cum, beta)), v.size - 1)
    return float(v[o[k]])


def tv_support_value(pbar, v, beta) -> float:
    """Value of the TV dual for one long row without sorting the whole row.

    Same number as ``sa_dual_tv`` (up to rounding).  The optimal threshold of
    the threshold form is a weighted upper quantile of v, found by selection,
    so the cost is a few linear passes plus a sort of a small candidate set.
    """
    pbar = np.asarray(pbar, dtype=float)
    v = np.asarray(v, dtype=float)
    beta = float(_check_beta(beta))
    vmin = float(v.min())
    if beta == 0.0:
        return -float(pbar @ v)
    eta = max(_upper_quantile(v, pbar, beta, vmin, float(v.max())), vmin)
    return -float(pbar @ np.minimum(v, eta)) + beta * (eta - vmin)


# --------------------------------------------------------------------------- KL

def _kl_objective(lam, logp, v, beta):
    # beta*lam + lam*log sum pbar exp(-v/lam), lam > 0, all arrays (B,) / (B,S)
    z = logp - v / lam[:, None]
    return beta * lam + lam * logsumexp(z, axis=1)


def sa_dual_kl_batch(pbar, v, beta, return_lambda: bool = False):
    """min over lambda >= 0 of beta*lambda + lambda*log E_pbar exp(-v/lambda),
    golden-section over [1e-8, (max v - min v + 1)/beta] with both endpoints
    (lambda -> 0 and beta = 0) handled analytically."""
    pbar, v, beta = _prep(pbar, v, beta)
    B, S = v.shape
    supp = pbar > 0
    with np.errstate(divide="ignore"):
        logp = np.where(supp, np.log(np.where(supp, pbar, 1.0)), -np.inf)
    mean_val = -np.einsum("bs,bs->b", pbar, v)
    vmin_supp = np.where(supp, v, np.inf).min(axis=1)
    zero_val = -vmin_supp  # lambda -> 0 limit
    val = mean_val.copy()
    lam_star = np.full(B, np.inf)
    pos = beta > 0
    if np.any(pos):
        lp, vv, bb = logp[pos], v[pos], beta[pos]
        vs = np.where(supp[pos], vv, np.nan)
        span = np.nanmax(vs, axis=1) - np.nanmin(vs, axis=1)
        lo = np.full(bb.shape, KL_LAMBDA_LO)
        hi = np.maximum((span + 1.0) / bb, 2 * KL_LAMBDA_LO)
        c = hi - _GOLD * (hi - lo)
        d = lo + _GOLD * (hi - lo)
        fc = _kl_objective(c, lp, vv, bb)
        fd = _kl_objective(d, lp, vv, bb)
        while np.any(hi - lo > KL_LAMBDA_TOL * np.maximum(1.0, lo)):
            left = fc < fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            nc = hi - _GOLD * (hi - lo)
            nd = lo + _GOLD * (hi - lo)
            # reuse the surviving interior point
            c_new = np.where(left, nc, d)
            d_new = np.where(left, c, nd)
            fc_new = np.where(left, np.nan, fd)
            fd_new = np.where(left, fc, np.nan)
            need_c = np.isnan(fc_new)
            need_d = np.isnan(fd_new)
            if np.any(need_c):
                fc_new[need_c] = _kl_objective(c_new[need_c], lp[need_c], vv[need_c], bb[need_c])
            if np.any(need_d):
                fd_new[need_d] = _kl_objective(d_new[need_d], lp[need_d], vv[need_d], bb[need_d])
            c, d, fc, fd = c_new, d_new, fc_new, fd_new
        lam = 0.5 * (lo + hi)
        f_in = _kl_objective(lam, lp, vv, bb)
        zv = zero_val[pos]
        use_zero = zv <= f_in
        val[pos] = np.where(use_zero, zv, f_in)
        lam_star[pos] = np.where(use_zero, 0.0, lam)
    if return_lambda:
        return val, lam_star
    return val


def kl_tilted(pbar, v, lam) -> np.ndarray:
    """The worst-case distribution pbar * exp(-v/lambda), normalized; lambda = 0
    spreads mass over the minimizers of v on the support (in proportion to pbar)."""
    pbar = np.asarray(pbar, dtype=float)
    v = np.asarray(v, dtype=float)
    supp = pbar > 0
    if lam == 0.0:
        vmin = v[supp].min()
        w = np.where(supp & (v <= vmin), pbar, 0.0)
        return w / w.sum()
    if math.isinf(lam):
        return pbar.copy()
    z = np.where(supp, np.log(np.where(supp, pbar, 1.0)) - v / lam, -np.inf)
    return np.exp(z - logsumexp(z))


def sa_dual_kl(pbar, v, beta):
    val, lam = sa_dual_kl_batch(pbar, v, beta, return_lambda=True)
    return float(val[0]), float(lam[0])


# --------------------------------------------------------------------------- chi-square

def sa_dual_chi2_batch(pbar, v, beta, return_level: bool = False):
    """min over t of g(t) = -E_pbar[min(v, t)] + sqrt(beta * Var_pbar(min(v, t))).

    Between consecutive sorted values of v, the truncated mean and variance
    are polynomials in t, so each segment's stationary point solves a
    quadratic; g is evaluated at every segment endpoint and every admissible
    root and the smallest value is kept.
    """
    pbar, v, beta = _prep(pbar, v, beta)
    B, S = v.shape
    supp = pbar > 0
    # states off the support cannot receive mass: push them to the top so they
    # never matter (their weight is zero anyway)
    vs = np.where(supp, v, np.inf)
    order = np.argsort(vs, axis=1, kind="stable")
    v_sorted = np.take_along_axis(vs, order, axis=1)
    p_sorted = np.take_along_axis(pbar, order, axis=1)
    top = np.where(supp, v, -np.inf).max(axis=1, keepdims=True)
    # measure from the support minimum: the vertex candidate t = min v then has
    # exactly zero variance instead of a rounding residue under a square root
    base = v_sorted[:, :1].copy()
    v_sorted = v_sorted - base
    v_fin = np.where(np.isfinite(v_sorted), v_sorted, top - base)
    # prefix sums over the k smallest states: a_k = sum p v, b_k = sum p v^2, mass_k = sum p
    a = np.cumsum(p_sorted * v_fin, axis=1)
    b = np.cumsum(p_sorted * v_fin ** 2, axis=1)
    mass = np.cumsum(p_sorted, axis=1)
    m = np.clip(1.0 - mass, 0.0, 1.0)  # weight sitting at the truncation level

    def g(t, a_, b_, m_, beta_):
        mean = a_ + m_ * t
        var = np.maximum(b_ + m_ * t * t - mean * mean, 0.0)
        return -mean + np.sqrt(beta_ * var)

    bcol = beta[:, None]
    # segment k: t in [v_sorted[k], v_sorted[k+1]], the k+1 smallest states untruncated
    t_left = v_fin
    nxt = np.concatenate([v_sorted[:, 1:], np.full((B, 1), np.inf)], axis=1)
    t_right = np.where(np.isfinite(nxt), nxt, v_fin)
    cands = [t_left]
    vals = [g(t_left, a, b, m, bcol)]
    # stationary points: beta (c t - a m)^2 = m^2 Var(t), with c = m (1 - m)
    c = m * (1.0 - m)
    dvar = b - a * a
    A2 = bcol * c * c - m * m * c
    A1 = -2.0 * bcol * a * c * m + 2.0 * a * m ** 3
    A0 = bcol * a * a * m * m - m * m * dvar
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = A1 * A1 - 4.0 * A2 * A0
        sq = np.sqrt(np.maximum(disc, 0.0))
        lin = np.abs(A2) <= 1e-14 * (np.abs(A1) + np.abs(A0) + 1e-300)
        roots = [np.where(lin, -A0 / A1, (-A1 + sq) / (2.0 * A2)),
                 np.where(lin, np.nan, (-A1 - sq) / (2.0 * A2))]
    for r in roots:
        ok = np.isfinite(r) & (r >= t_left) & (r <= t_right) & (disc >= -1e-14)
        rr = np.where(ok, r, t_left)
        cands.append(rr)
        vals.append(np.where(ok, g(rr, a, b, m, bcol), np.inf))
    allv = np.concatenate(vals, axis=1)
    allt = np.concatenate(cands, axis=1)
    k_idx = np.argmin(allv, axis=1)
    rows = np.arange(B)
    val = allv[rows, k_idx] - base[:, 0]
    t_star = allt[rows, k_idx] + base[:, 0]
    mean = -np.einsum("bs,bs->b", pbar, v)
    val = np.clip(val, mean, -base[:, 0])
    val = np.where(beta == 0, mean, val)
    if return_level:
        return val, t_star
    return val


def chi2_worst_dist(pbar, v, beta, t) -> np.ndarray:
    """Primal maximizer rebuilt from the optimal truncation level:
    P = pbar (1 - sqrt(beta) (w - E w) / sd(w)) with w = min(v, t)."""
    pbar = np.asarray(pbar, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.minimum(v, t)
    mean = pbar @ w
    sd = math.sqrt(max(pbar @ (w - mean) ** 2, 0.0))
    if beta == 0.0:
        return pbar.copy()
    supp = pbar > 0
    if sd <= 1e-15:
        vmin = v[supp].min()
        q = np.where(supp & (v <= vmin + 1e-15), pbar, 0.0)
        return q / q.sum()
    p = pbar * (1.0 - math.sqrt(beta) * (w - mean) / sd)
    p = np.maximum(p, 0.0)
    return p / p.sum()


def sa_dual_chi2(pbar, v, beta):
    val, t = sa_dual_chi2_batch(pbar, v, beta, return_level=True)
    return float(val[0]), float(t[0])


# --------------------------------------------------------------------------- Wasserstein

def _wasserstein_candidates(v, rho):
    """All lambda >= 0 where two lines -v(s') - lambda rho(s~, s') cross, plus 0."""
    S = v.shape[-1]
    i1, i2 = np.triu_indices(S, k=1)
    dv = v[..., i2] - v[..., i1]  # (B, P)
    dr = rho[:, i1] - rho[:, i2]  # (S~, P)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = dv[:, None, :] / dr[None, :, :]
    lam = np.where(np.isfinite(lam) & (lam >= 0), lam, 0.0)
    return np.concatenate([np.zeros(v.shape[:1] + (1,)), lam.reshape(v.shape[0], -1)], axis=1)


def _wasserstein_objective(lam, pbar, v, rho, beta):
    # lam: (B, K) -> (B, K)
    inner = -v[:, None, None, :] - lam[:, :, None, None] * rho[None, None, :, :]
    sup = inner.max(axis=-1)  # (B, K, S~)
    return beta[:, None] * lam + np.einsum("bks,bs->bk", sup, pbar)


def sa_dual_wasserstein_batch(pbar, v, beta, rho, return_lambda: bool = False):
    """Exact minimization of the convex piecewise-linear dual by evaluating every
    breakpoint candidate."""
    rho = check_metric(rho)
    pbar, v, beta = _prep(pbar, v, beta)
    lam = _wasserstein_candidates(v, rho)
    f = _wasserstein_objective(lam, pbar, v, rho, beta)
    k = np.argmin(f, axis=1)
    rows = np.arange(v.shape[0])
    val = f[rows, k]
    lam_star = lam[rows, k]
    zero = beta == 0
    val = np.where(zero, -np.einsum("bs,bs->b", pbar, v), val)
    if return_lambda:
        return val, lam_star
    return val


def sa_dual_wasserstein(pbar, v, beta, rho):
    val, lam = sa_dual_wasserstein_batch(pbar, v, beta, rho, return_lambda=True)
    return float(val[0]), float(lam[0])


# --------------------------------------------------------------------------- sets

@dataclass(frozen=True, eq=False)
class TransSetDesc:
    """Transition uncertainty for a whole game.

    ``beta`` broadcasts to (H-1, S) for ``opnorm_ball`` and to (H-1, S, J) for
    the ``sa_*`` families.
    """

    family: str = "singleton"
    beta: float | np.ndarray = 0.0
    p: float = 2.0
    q: float = 1.0
    rho: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in TRANSITION_FAMILIES:
            raise ValueError(f"unknown transition set family {self.family!r}")
        object.__setattr__(self, "beta", _check_beta(self.beta))
        if self.family == "opnorm_ball":
            check_order(self.p)
            check_order(self.q)
        if self.family == "sa_wasserstein":
            if self.rho is None:
                raise ValueError("sa_wasserstein needs a metric matrix")
            object.__setattr__(self, "rho", check_metric(self.rho))

    @property
    def is_singleton(self) -> bool:
        return self.family == "singleton" or bool(np.all(self.beta == 0))

    def radii(self, h: int, num_states: int, num_joint: int) -> np.ndarray:
        """Radii at step h: (S,) for the ball, (S, J) for the sa families."""
        b = self.beta
        if self.family == "opnorm_ball":
            return b[h] if b.ndim == 2 else np.broadcast_to(b, (num_states,))
        if b.ndim == 3:
            return b[h]
        return np.broadcast_to(b, (num_states, num_joint))

    def sa_dual_batch(self, pbar, v, beta, **kw):
        f = self.family
        if f == "sa_tv":
            return sa_dual_tv_batch(pbar, v, beta, **kw)
        if f == "sa_kl":
            return sa_dual_kl_batch(pbar, v, beta)
        if f == "sa_chi2":
            return sa_dual_chi2_batch(pbar, v, beta)
        if f == "sa_wasserstein":
            return sa_dual_wasserstein_batch(pbar, v, beta, self.rho)
        raise ValueError(f"{f} is not an (s,a)-rectangular family")


def s_rect_ball_transition(pbar_block, v, mu, beta, p, q) -> float:
    """-E_mu[Pbar v] + beta ||v||_p ||mu||_q; ``pbar_block`` is (J, S)."""
    p, q = check_order(p), check_order(q)
    if beta < 0:
        raise ValueError("radius must be nonnegative")
    pbar_block = np.asarray(pbar_block, dtype=float)
    v = np.asarray(v, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(-mu @ (pbar_block @ v) + beta * lp_norm(v, p) * lp_norm(mu, q))


def s_rect_ball_maximizer(pbar_block, v, mu, beta, p, q) -> np.ndarray:
    """The attaining kernel Pbar + beta w u^T (J x S) with <u, -v> = ||v||_p, <w, mu> = ||mu||_q."""
    from .simplex import dual_vector
    u = dual_vector(-np.asarray(v, dtype=float), p)
    w = dual_vector(np.asarray(mu, dtype=float), q)
    return np.asarray(pbar_block, dtype=float) + beta * np.outer(w, u)


def sa_rect_support(pbar_block, v, mu, per_action_duals) -> float:
    """E_mu of per-joint-action duals.  ``per_action_duals`` is a sequence of
    callables ``(pbar_row, v) -> value`` or an array of already computed values."""
    mu = np.asarray(mu, dtype=float)
    if callable(per_action_duals) or (len(per_action_duals) and callable(per_action_duals[0])):
        fns = per_action_duals if not callable(per_action_duals) else [per_action_duals] * mu.size
        vals = np.array([fn(pbar_block[j], v) for j, fn in enumerate(fns)])
    else:
        vals = np.asarray(per_action_duals, dtype=float)
    return float(mu @ vals)
