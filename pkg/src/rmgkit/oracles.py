"""Brute-force references for validating closed forms and solvers.

Slow on purpose.  Nothing here calls the numeric kernels it is used to
check: norms, entropies, divergences and transports are recomputed locally,
and exact answers come from sampling, enumeration, line searches or LPs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

MAX_GRID_POINTS = 5_000_000


@dataclass(frozen=True)
class OracleConfig:
    samples: int = 2000
    local_steps: int = 400
    grid_resolution: int = 200
    seed: int = 0

    def __post_init__(self):
        if min(self.samples, self.local_steps, self.grid_resolution) <= 0:
            raise ValueError("oracle counts must be positive")


# --------------------------------------------------------------------------- local kernels

def _norm(x, p):
    a = np.abs(np.asarray(x, dtype=float))
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float(np.sum(a ** p) ** (1.0 / p))


def _dual(p):
    p = float(p)
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _entropy_terms(kind, x, ref=None, renyi_q=None):
    """omega(x(a)) per action, written out from the definitions."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if kind == "renyi":
        s = sum(float(v) ** renyi_q for v in x)
        return np.full_like(x, -math.log(s) / (1.0 - renyi_q))
    for a, v in enumerate(x):
        if kind == "shannon":
            out[a] = math.log(v) if v > 0 else -math.inf
        elif kind == "kl_reference":
            out[a] = math.log(v / ref[a]) if v > 0 else -math.inf
        elif kind == "tsallis":
            out[a] = 0.5 * (v - 1.0)
        else:
            raise ValueError(f"no sampler for kernel {kind!r}")
    return out


# --------------------------------------------------------------------------- reward sets

def _player_view(dists, i):
    """(pi_i, pi_{-i} over the others' joint actions, reorder) for player i."""
    dists = [np.asarray(d, dtype=float) for d in dists]
    others = [d for k, d in enumerate(dists) if k != i]
    y = np.ones(1)
    for d in others:
        y = np.outer(y, d).ravel()
    return dists[i], y


def _to_global(mat, actions, i):
    """Player-i matrix (A_i, prod A_-i) back to global joint order."""
    shape = [actions[i]] + [a for k, a in enumerate(actions) if k != i]
    t = np.asarray(mat).reshape(shape)
    return np.moveaxis(t, 0, i).ravel()


def _box_best(lo, hi, Y, rng, cfg):
    """Sampled points of a box plus coordinate ascent on <R, Y>."""
    best, arg = -math.inf, None
    n = min(cfg.samples, 64)
    for _ in range(n):
        R = lo + rng.uniform(size=lo.shape) * (hi - lo)
        for _ in range(2):
            for idx in np.ndindex(R.shape):
                cand = (lo[idx], hi[idx])
                vals = []
                for c in cand:
                    R[idx] = c
                    vals.append(float(np.sum(R * Y)))
                R[idx] = cand[int(np.argmax(vals))]
        val = float(np.sum(R * Y))
        if val > best:
            best, arg = val, R.copy()
    return best, arg


def _ball_best(alpha, p, q, Y, rng, cfg):
    """Feasible members of ||R||_{q -> p*} <= alpha: scaled sums of rank-one
    matrices (exact norm ||u||_{p*} ||w||_{q*}), then hill climbing on the best
    rank-one member."""
    m, n = Y.shape
    ps, qs = _dual(p), _dual(q)
    best, arg, bu, bw = -math.inf, np.zeros_like(Y), None, None
    for _ in range(cfg.samples):
        k = int(rng.integers(1, 3))
        U = rng.normal(size=(k, m))
        W = rng.normal(size=(k, n))
        scale = sum(_norm(U[t], ps) * _norm(W[t], qs) for t in range(k))
        if scale == 0:
            continue
        R = alpha * sum(np.outer(U[t], W[t]) for t in range(k)) / scale
        val = float(np.sum(R * Y))
        if val > best:
            best, arg = val, R
            if k == 1:
                bu, bw = U[0], W[0]
    if bu is None:
        bu, bw = rng.normal(size=m), rng.normal(size=n)

    def rank_one(u, w):
        s = _norm(u, ps) * _norm(w, qs)
        return alpha * np.outer(u, w) / s if s > 0 else np.zeros_like(Y)

    step = 0.5
    cur = float(np.sum(rank_one(bu, bw) * Y))
    for _ in range(cfg.local_steps):
        improved = False
        for which in (0, 1):
            for _ in range(4):
                if which == 0:
                    u2, w2 = bu + step * rng.normal(size=m), bw
                else:
                    u2, w2 = bu, bw + step * rng.normal(size=n)
                val = float(np.sum(rank_one(u2, w2) * Y))
                if val > cur:
                    bu, bw, cur, improved = u2, w2, val, True
        if not improved:
            step *= 0.7
        if step < 1e-9:
            break
    if cur > best:
        best, arg = cur, rank_one(bu, bw)
    return best, arg


def oracle_set_support(set_desc, i: int, dists, actions, cfg: OracleConfig | None = None):
    """Lower bound on sigma_R(-pi_i pi_{-i}^T) for player i, with the feasible
    member (global joint order) that attains it."""
    cfg = cfg or OracleConfig()
    rng = np.random.default_rng(cfg.seed)
    actions = tuple(int(a) for a in actions)
    J = int(np.prod(actions))
    fam = set_desc.family
    if fam == "singleton":
        return 0.0, np.zeros(J)
    if fam == "sum":
        total, wit = 0.0, np.zeros(J)
        for k, part in enumerate(set_desc.parts):
            sub = OracleConfig(cfg.samples, cfg.local_steps, cfg.grid_resolution, cfg.seed + k)
            v, w = oracle_set_support(part, i, dists, actions, sub)
            total, wit = total + v, wit + w
        return total, wit
    x, y = _player_view(dists, i)
    Y = -np.outer(x, y)
    if fam == "interval":
        lo = np.moveaxis(np.asarray(set_desc.lo).reshape(actions), i, 0).reshape(Y.shape)
        hi = np.moveaxis(np.asarray(set_desc.hi).reshape(actions), i, 0).reshape(Y.shape)
        v, R = _box_best(lo, hi, Y, rng, cfg)
    elif fam == "opnorm_ball":
        v, R = _ball_best(set_desc.alpha, set_desc.p, set_desc.q, Y, rng, cfg)
    elif fam == "kernel":
        om = _entropy_terms(set_desc.kernel, x, set_desc.ref, set_desc.renyi_q)
        lo = -set_desc.tau * om
        lo = np.where(np.isfinite(lo), lo, 0.0)  # unplayed actions carry no weight
        lo = np.repeat(lo[:, None], Y.shape[1], axis=1)
        v, R = _box_best(lo, np.maximum(lo, 0.0), Y, rng, cfg)
    else:
        raise ValueError(f"no sampler for family {fam!r}")
    return v, _to_global(R, actions, i)


def oracle_interval_corners(lo, hi, y) -> float:
    """max over the 2^n corners of the box of <R, y> (n <= 16)."""
    lo = np.ravel(np.asarray(lo, dtype=float))
    hi = np.ravel(np.asarray(hi, dtype=float))
    y = np.ravel(np.asarray(y, dtype=float))
    if lo.size > 16:
        raise ValueError("corner enumeration limited to 16 entries")
    best = -math.inf
    for pick in itertools.product((0, 1), repeat=lo.size):
        R = np.where(np.array(pick, dtype=bool), hi, lo)
        best = max(best, float(R @ y))
    return best


# --------------------------------------------------------------------------- simplex grid

def simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All points of the simplex with coordinates in multiples of 1/resolution."""
    count = math.comb(resolution + dim - 1, dim - 1)
    if count > MAX_GRID_POINTS:
        raise ValueError(f"grid of {count} points exceeds the {MAX_GRID_POINTS} limit")
    if dim == 1:
        return np.ones((1, 1))
    rows = []
    for head in range(resolution + 1):
        tail = simplex_grid(dim - 1, resolution - head) * (resolution - head) if head < resolution \
            else np.zeros((1, dim - 1))
        rows.append(np.column_stack([np.full(len(tail), head), tail]))
    return np.vstack(rows) / resolution


def oracle_simplex_grid_max(objective, dim: int, resolution: int = 200):
    """Exhaustive maximization over the regular simplex grid.  ``objective``
    gets one point at a time; returns (maximizer, value)."""
    pts = simplex_grid(dim, resolution)
    vals = np.array([objective(p) for p in pts])
    k = int(np.argmax(vals))
    return pts[k], float(vals[k])


# --------------------------------------------------------------------------- transition sets

def _tv(p, pbar):
    return 0.5 * float(np.abs(p - pbar).sum())


def _kl(p, pbar):
    total = 0.0
    for a, b in zip(p, pbar):
        if a > 0:
            if b <= 0:
                return math.inf
            total += a * math.log(a / b)
    return total


def _chi2(p, pbar):
    total = 0.0
    for a, b in zip(p, pbar):
        if b <= 0:
            if a > 0:
                return math.inf
            continue
        total += (a - b) ** 2 / b
    return total


DIVERGENCES = {"sa_tv": _tv, "sa_kl": _kl, "sa_chi2": _chi2}


def transport_cost(p, pbar, rho) -> float:
    """Earth mover's distance between two distributions by LP."""
    S = len(p)
    c = np.asarray(rho, dtype=float).ravel()
    A_eq = np.zeros((2 * S, S * S))
    for a in range(S):
        A_eq[a, a * S:(a + 1) * S] = 1.0
        A_eq[S + a, a::S] = 1.0
    res = linprog(c, A_eq=A_eq, b_eq=np.concatenate([pbar, p]), bounds=(0, None), method="highs")
    return float(res.fun)


def oracle_transition_lp(family, pbar, v, beta, rho=None) -> tuple[float, np.ndarray]:
    """sup over the TV or Wasserstein ball of <p, -v>, solved as one LP.
    Returns (value, worst distribution)."""
    pbar = np.asarray(pbar, dtype=float)
    v = np.asarray(v, dtype=float)
    S = pbar.size
    if family == "sa_tv":
        # variables p, d with d >= |p - pbar|, sum d <= 2 beta
        c = np.concatenate([v, np.zeros(S)])
        A_ub = np.block([[np.eye(S), -np.eye(S)], [-np.eye(S), -np.eye(S)],
                         [np.zeros((1, S)), np.ones((1, S))]])
        b_ub = np.concatenate([pbar, -pbar, [2.0 * beta]])
        A_eq = np.concatenate([np.ones(S), np.zeros(S)])[None]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * (2 * S), method="highs")
        return float(-res.fun), res.x[:S]
    if family == "sa_wasserstein":
        # transport plan T (S x S) from pbar to p; cost <rho, T> <= beta
        rho = np.asarray(rho, dtype=float)
        c = np.tile(v, S)
        A_eq = np.zeros((S, S * S))
        for a in range(S):
            A_eq[a, a * S:(a + 1) * S] = 1.0
        res = linprog(c, A_ub=rho.ravel()[None], b_ub=[beta], A_eq=A_eq, b_eq=pbar,
                      bounds=(0, None), method="highs")
        plan = res.x.reshape(S, S)
        return float(-res.fun), plan.sum(axis=0)
    raise ValueError(f"no LP oracle for {family!r}")


def _max_step(div, pbar, d, beta, cap, iters=200):
    """Largest t in [0, cap] with div(pbar + t d) <= beta (div convex in t)."""
    if div(pbar + cap * d, pbar) <= beta:
        return cap
    lo, hi = 0.0, cap
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if div(pbar + mid * d, pbar) <= beta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    return lo


def oracle_transition_ray(family, pbar, v, beta, directions: int = 720, refine: int = 80):
    """sup over a divergence ball of <p, -v> for |S| <= 3 by searching the ball's
    boundary: rays from pbar in every direction of the simplex plane, the
    step length by bisection, the direction by a dense scan and golden-section
    refinement.  Returns (value, worst distribution)."""
    div = DIVERGENCES[family]
    pbar = np.asarray(pbar, dtype=float)
    v = np.asarray(v, dtype=float)
    if family != "sa_tv" and np.any(pbar <= 0):
        # KL and chi-square balls live on the face spanned by the support
        keep = pbar > 0
        val, p = oracle_transition_ray(family, pbar[keep], v[keep], beta, directions, refine)
        full = np.zeros_like(pbar)
        full[keep] = p
        return val, full
    S = pbar.size
    if S == 1 or beta <= 0:
        return float(-pbar @ v), pbar.copy()
    if S == 2:
        basis = [np.array([1.0, -1.0]) / math.sqrt(2.0)]
    elif S == 3:
        e1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
        e2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
        basis = [e1, e2]
    else:
        raise ValueError("ray oracle handles at most three states")

    def endpoint(theta):
        d = basis[0] * math.cos(theta) + (basis[1] * math.sin(theta) if S == 3 else 0.0)
        neg = d < 0
        cap = float(np.min(pbar[neg] / -d[neg])) if np.any(neg) else 1.0
        t = _max_step(div, pbar, d, beta, cap)
        p = np.clip(pbar + t * d, 0.0, None)
        return p / p.sum()

    def value(theta):
        return float(-endpoint(theta) @ v)

    if S == 2:
        cands = [endpoint(0.0), endpoint(math.pi), pbar]
        vals = [float(-c @ v) for c in cands]
        k = int(np.argmax(vals))
        return vals[k], cands[k]
    thetas = np.linspace(0.0, 2.0 * math.pi, directions, endpoint=False)
    vals = np.array([value(t) for t in thetas])
    k = int(np.argmax(vals))
    width = 2.0 * math.pi / directions
    lo, hi = thetas[k] - width, thetas[k] + width
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = value(c), value(d)
    for _ in range(refine):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = value(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = value(d)
    best_t = max([(vals[k], thetas[k]), (fc, c), (fd, d)])[1]
    p = endpoint(best_t)
    return float(-p @ v), p


def oracle_transition_samples(family, pbar, v, beta, rho=None, samples: int = 10_000, seed: int = 0):
    """Largest <p, -v> over random feasible distributions (a lower bound)."""
    rng = np.random.default_rng(seed)
    pbar = np.asarray(pbar, dtype=float)
    v = np.asarray(v, dtype=float)
    best, arg = float(-pbar @ v), pbar.copy()
    for _ in range(samples):
        p = rng.dirichlet(np.ones(pbar.size))
        t = rng.uniform()
        p = (1 - t) * pbar + t * p
        if family == "sa_wasserstein":
            ok = transport_cost(p, pbar, rho) <= beta
        else:
            ok = DIVERGENCES[family](p, pbar) <= beta
        if ok and -p @ v > best:
            best, arg = float(-p @ v), p
    return best, arg


# --------------------------------------------------------------------------- games

def oracle_matrix_game_lp(M):
    """Value and optimal strategies of max_x min_y x^T M y by two LPs."""
    M = np.asarray(M, dtype=float)
    m, n = M.shape

    def solve(P):
        r, c = P.shape
        # variables (x, v): max v s.t. P^T x >= v, sum x = 1
        cost = np.zeros(r + 1)
        cost[-1] = -1.0
        A_ub = np.hstack([-P.T, np.ones((c, 1))])
        A_eq = np.concatenate([np.ones(r), [0.0]])[None]
        res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(c), A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * r + [(None, None)], method="highs")
        return res.x[:r], float(res.x[-1])

    x, val = solve(M)
    y, neg = solve(-M.T)
    return x, y, val


def oracle_shapley(game):
    """Nominal zero-sum backward induction with an LP per stage.
    Returns the player-1 value table (H+1, S)."""
    H, S = game.horizon, game.num_states
    A1, A2 = game.actions
    v = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        for s in range(S):
            M = game.rewards[0, h, s].copy()
            if h < H - 1:
                M = M + game.transitions[h, s] @ v[h + 1]
            _, _, v[h, s] = oracle_matrix_game_lp(M.reshape(A1, A2))
    return v


def oracle_mc_eval(game, policy, rollouts: int = 100_000, seed: int = 0, batch: int = 200_000):
    """Monte-Carlo estimate of every player's value from the initial state.
    Returns (mean (N,), standard error (N,))."""
    if rollouts < 1:
        raise ValueError("rollouts must be positive")
    rng = np.random.default_rng(seed)
    N, H = game.num_players, game.horizon
    acts = game.actions
    strides = [int(np.prod(acts[k + 1:])) for k in range(N)]
    total = np.zeros(N)
    total_sq = np.zeros(N)
    done = 0
    while done < rollouts:
        R = min(batch, rollouts - done)
        s = np.full(R, game.initial_state)
        ret = np.zeros((R, N))
        for h in range(H):
            joint = np.zeros(R, dtype=int)
            for k in range(N):
                cdf = np.cumsum(policy.probs[k][h][s], axis=1)
                a = (rng.uniform(size=(R, 1)) > cdf).sum(axis=1)
                a = np.minimum(a, acts[k] - 1)
                joint += a * strides[k]
            ret += game.rewards[:, h, s, joint].T
            if h < H - 1:
                cdf = np.cumsum(game.transitions[h, s, joint], axis=1)
                s = np.minimum((rng.uniform(size=(R, 1)) > cdf).sum(axis=1), game.num_states - 1)
        total += ret.sum(axis=0)
        total_sq += (ret ** 2).sum(axis=0)
        done += R
    mean = total / rollouts
    var = np.maximum(total_sq / rollouts - mean ** 2, 0.0)
    se = np.sqrt(var / max(rollouts - 1, 1))
    return mean, se


def oracle_random_search_br(values_of, num_actions: int, shape, samples: int = 100_000,
                            seed: int = 0, batch: int = 2000, local: float = 0.5,
                            local_batch: int = 200):
    """Best value found by random search over policies of one player.

    ``values_of(probs)`` maps a batch of policies (T, *shape, A) to the values
    being maximized (T,).  A ``1 - local`` share of the budget goes to global
    draws (deterministic and Dirichlet mixed); the rest perturbs the incumbent
    with an adaptive step (grown on success,
    shrunk on failure).  Every candidate is a valid policy, so the result is
    a lower bound on the best-response value.
    """
    rng = np.random.default_rng(seed)
    best, arg = -math.inf, None
    n_global = int(samples * (1.0 - local))
    done = 0

    def consider(probs):
        nonlocal best, arg
        vals = np.asarray(values_of(probs))
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, arg = float(vals[k]), probs[k].copy()

    while done < n_global:
        T = min(batch, n_global - done)
        probs = rng.dirichlet(np.full(num_actions, 0.3), size=(T, *shape))
        pure = rng.uniform(size=T) < 0.5
        if np.any(pure):
            idx = rng.integers(0, num_actions, size=(int(pure.sum()), *shape))
            probs[pure] = np.eye(num_actions)[idx]
        consider(probs)
        done += T
    step = 0.5
    while done < samples:
        T = min(local_batch, samples - done)
        w = step * rng.uniform(size=(T, *shape, 1))
        # perturb a random subset of the decision points
        frac = rng.uniform(0.05, 1.0, size=(T,) + (1,) * (len(shape) + 1))
        mask = rng.uniform(size=(T, *shape, 1)) < frac
        noise = rng.dirichlet(np.full(num_actions, 0.5), size=(T, *shape))
        before = best
        consider(np.where(mask, (1 - w) * arg + w * noise, arg))
        step = min(0.5, step * 2.0) if best > before else max(step * 0.3, 1e-9)
        done += T
    return best, arg
