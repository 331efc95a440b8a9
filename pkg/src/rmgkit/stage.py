"""Single-stage solvers: regularized best responses, two-player stage games
with own-strategy penalties, and support enumeration for small bimatrix games.

A two-player stage game here is ``(U1, U2, reg1, reg2)`` with both payoff
matrices indexed ``[a_1, a_2]``: player 1 maximizes ``x^T U1 y - reg1(x)``
and player 2 maximizes ``x^T U2 y - reg2(y)``.  The zero-sum case is
``U2 = -U1``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.special import logsumexp

from . import regularizers as regs
from .reward_support import RegularizerDesc, own_regularizer
from .simplex import project_simplex, softmax

log = logging.getLogger(__name__)

MAX_ITER = 1_000_000
BR_TOL = 1e-11


def as_own(reg) -> regs.OwnRegularizer:
    if reg is None:
        return regs.Zero()
    if isinstance(reg, regs.OwnRegularizer):
        return reg
    if isinstance(reg, RegularizerDesc):
        if not reg.separable:
            raise ValueError(f"regularizer {reg.kind!r} depends on the opponent; "
                             "fix the opponent strategy first")
        return own_regularizer(reg, None)
    raise TypeError(f"not a regularizer: {reg!r}")


@dataclass
class _Split:
    """reg = sum of entropic terms + linear part + the rest."""

    tau: float
    tau_logref: np.ndarray
    lin: np.ndarray
    rest: list
    n: int

    @property
    def rest_reg(self) -> regs.OwnRegularizer:
        return regs.combine(*self.rest)


def _split(reg: regs.OwnRegularizer, n: int) -> _Split:
    tau = 0.0
    tl = np.zeros(n)
    lin = np.zeros(n)
    rest = []
    for t in reg.terms():
        if t.is_zero:
            continue
        if isinstance(t, regs.Entropic):
            tau += t.tau
            tl += t.tau * t.log_ref(n)
        elif isinstance(t, regs.Linear):
            lin += np.asarray(t.coef, dtype=float)
        elif isinstance(t, regs.Norm) and t.p == 1.0:
            lin += t.weight
        else:
            rest.append(t)
    return _Split(tau, tl, lin, rest, n)


def _objective(c, reg, x) -> float:
    return float(c @ x - reg.value(x))


# --------------------------------------------------------------------------- best response

def _fw_gap(c, reg, x) -> float:
    g = c - reg.grad(x)
    return float(g.max() - g @ x)


def _certificate(c, reg, sp: _Split, x) -> float:
    """Upper bound on max f - f(x).  With an entropic part only the other
    (convex) terms are linearized and the entropic problem is solved exactly,
    which stays tight when some coordinates are vanishingly small; otherwise
    this is the Frank-Wolfe gap."""
    if sp.tau <= 0:
        return _fw_gap(c, reg, x)
    other = regs.combine(*sp.rest)
    go = other.grad(x)
    z = (c - sp.lin - go + sp.tau_logref) / sp.tau
    bound = sp.tau * logsumexp(z) - other.value(x) + go @ x
    return float(max(bound - _objective(c, reg, x), 0.0))


def _first_order(c, reg, sp: _Split, x, iters, eps, interior):
    """Composite mirror ascent (interior case) or projected gradient with
    backtracking; returns early once the Frank-Wolfe gap is below eps."""
    f = _objective(c, reg, x)
    smooth = regs.combine(*sp.rest, regs.Linear(tuple(sp.lin)))
    eta = 1.0 / (1.0 + sum(t.curvature for t in sp.rest) + sp.tau)
    for _ in range(iters):
        g = c - reg.grad(x)
        if _certificate(c, reg, sp, x) <= eps:
            break
        while True:
            if interior:
                gs = c - smooth.grad(x)
                z = (eta * gs + eta * sp.tau_logref + np.log(np.maximum(x, 1e-300))) \
                    / (1 + eta * sp.tau)
                xn = np.exp(z - logsumexp(z))
                ok = _objective(c, reg, xn) >= f
            else:
                xn = project_simplex(x + eta * g)
                ok = _objective(c, reg, xn) >= f + 1e-4 * (g @ (xn - x))
            if ok or eta < 1e-16:
                break
            eta *= 0.5
        if not ok:
            break
        x, f = xn, _objective(c, reg, xn)
        eta *= 1.5
    return x


def _newton(c, reg, sp, x, eps, interior, iters=60):
    """Newton steps on the tangent space of the face spanned by supp(x)."""
    f = _objective(c, reg, x)
    for _ in range(iters):
        cert = _certificate(c, reg, sp, x)
        if cert <= eps:
            break
        A = np.flatnonzero(x > (0.0 if interior else 1e-15))
        k = A.size
        if k < 2:
            break
        g = (c - reg.grad(x))[A]
        # rescale by sqrt(x) so an entropic block becomes tau * I
        sc = np.sqrt(x[A])
        H = sc[:, None] * reg.hess(x)[np.ix_(A, A)] * sc[None, :]
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = H
        kkt[:k, k] = sc
        kkt[k, :k] = sc
        sol, *_ = np.linalg.lstsq(kkt, np.concatenate([sc * g, [0.0]]), rcond=1e-15)
        d = np.zeros_like(x)
        d[A] = sc * sol[:k]
        if not np.all(np.isfinite(d)) or np.abs(d).max() <= 1e-16:
            break
        t = 1.0
        if interior:
            neg = d < 0
            if np.any(neg):
                t = min(1.0, 0.99 * float(np.min(x[neg] / -d[neg])))
        while t > 1e-12:
            xn = x + t * d
            if not interior:
                xn = project_simplex(xn)
            else:
                xn = np.maximum(xn, 0.0)
                xn /= xn.sum()
            fn = _objective(c, reg, xn)
            if fn > f:
                break
            # near the optimum objective differences drown in rounding; fall
            # back to the certificate
            if fn >= f - 4e-16 * (1.0 + abs(f)) and _certificate(c, reg, sp, xn) < cert:
                break
            t *= 0.5
        else:
            break
        if fn == f and np.array_equal(xn, x):
            break
        x, f = xn, fn
    return x


def _br_iterative(c, reg, sp: _Split, eps, rounds: int = 200):
    """Maximize c.x - reg(x) for concave objectives without a closed form.

    Alternates a first-order phase (which can change the support) with
    Newton steps on the current face.  The stopping rule is the Frank-Wolfe
    gap, an upper bound on the suboptimality.
    """
    interior = sp.tau > 0 or any(isinstance(t, regs.Renyi) for t in sp.rest)
    x = np.full(c.size, 1.0 / c.size)
    best = (math.inf, x)
    stale = 0
    for _ in range(rounds):
        x = _first_order(c, reg, sp, x, 200, eps, interior)
        x = _newton(c, reg, sp, x, eps, interior)
        gap = _certificate(c, reg, sp, x)
        if gap < best[0]:
            best, stale = (gap, x), 0
        else:
            stale += 1
        if gap <= eps or stale >= 3:
            break
    return best[1], _objective(c, reg, best[1])


def _br_inf_norm_lp(c, weight):
    # max c.x - w t  s.t.  x <= t, x in simplex
    n = c.size
    res = linprog(np.concatenate([-c, [weight]]),
                  A_ub=np.hstack([np.eye(n), -np.ones((n, 1))]), b_ub=np.zeros(n),
                  A_eq=np.concatenate([np.ones(n), [0.0]])[None], b_eq=[1.0],
                  bounds=[(0, None)] * (n + 1), method="highs")
    x = np.maximum(res.x[:n], 0.0)
    return x / x.sum()


def _br_renyi(c, tau, q):
    """max c.x + tau/(1-q) log sum x^q.  Stationarity gives
    x_j = (kappa / (nu - c_j))^(1/(1-q)) with kappa = tau q / ((1-q) sum x^q);
    nu normalizes x for each kappa and kappa is found by a scalar root."""
    e = 1.0 / (1.0 - q)
    cmax = c.max()
    n = c.size

    def x_of(kappa):
        # sum_j (kappa / (nu - c_j))^e = 1, decreasing in nu; write nu = cmax + kappa * u
        d = (cmax - c) / kappa
        def h(u):
            # u -> 0 overflows to +inf at the argmax, which is the right sign
            with np.errstate(over="ignore"):
                return np.sum((1.0 / (u + d)) ** e) - 1.0

        u = brentq(h, 1e-300, n ** (1.0 - q) + 1.0, xtol=1e-300, rtol=1e-15, maxiter=500)
        x = (1.0 / (u + d)) ** e
        return x / x.sum()

    def phi(lk):
        k = math.exp(lk)
        return lk - math.log(tau * q / ((1.0 - q) * np.sum(x_of(k) ** q)))

    lo, hi = -1.0, 1.0
    while phi(lo) > 0:
        lo *= 2
    while phi(hi) < 0:
        hi *= 2
    lk = brentq(phi, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return x_of(math.exp(lk))


def best_response_regularized(payoff_vec, reg, eps: float = BR_TOL):
    """argmax over the simplex of <x, payoff_vec> - reg(x), and its value."""
    c = np.asarray(payoff_vec, dtype=float)
    reg = as_own(reg)
    sp = _split(reg, c.size)
    cl = c - sp.lin
    if not sp.rest:
        if sp.tau == 0.0:
            j = int(np.argmax(cl))  # first maximizer: lexicographic tie-break
            x = np.zeros(c.size)
            x[j] = 1.0
            return x, float(cl[j])
        z = (cl + sp.tau_logref) / sp.tau
        x = softmax(z)
        return x, float(sp.tau * logsumexp(z))
    if sp.tau == 0.0 and len(sp.rest) == 1:
        t = sp.rest[0]
        if isinstance(t, regs.Tsallis):
            x = project_simplex((cl + 0.5 * t.tau) / t.tau)
            return x, _objective(c, reg, x)
        if isinstance(t, regs.Norm) and math.isinf(t.p):
            x = _br_inf_norm_lp(cl, t.weight)
            return x, _objective(c, reg, x)
        if isinstance(t, regs.Renyi):
            x = _br_renyi(cl, t.tau, t.q)
            return x, _objective(c, reg, x)
    return _br_iterative(c, reg, sp, eps)


# --------------------------------------------------------------------------- stage games

@dataclass
class SaddleResult:
    x: np.ndarray
    y: np.ndarray
    value: float
    duality_gap: float
    iterations: int
    converged: bool = True
    value2: float | None = None


def stage_gap(U1, U2, reg1, reg2, x, y, eps: float = BR_TOL) -> float:
    """Sum over both players of the best-response improvement."""
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    r1, r2 = as_own(reg1), as_own(reg2)
    _, b1 = best_response_regularized(U1 @ y, r1, eps)
    _, b2 = best_response_regularized(U2.T @ x, r2, eps)
    g1 = b1 - (x @ U1 @ y - r1.value(x))
    g2 = b2 - (x @ U2 @ y - r2.value(y))
    return float(max(g1, 0.0) + max(g2, 0.0))


def exploitability(M, reg1, reg2, x, y, eps: float = BR_TOL) -> float:
    """Zero-sum form: player 2 minimizes x^T M y + reg2(y)."""
    M = np.asarray(M, dtype=float)
    return stage_gap(M, -M, reg1, reg2, np.asarray(x, float), np.asarray(y, float), eps)


def _prox(logx0, g, eta, tau, tl):
    z = (eta * g + eta * tl + logx0) / (1.0 + eta * tau)
    return z - logsumexp(z)


def _is_linear(sp: _Split) -> bool:
    return sp.tau == 0.0 and not sp.rest


def _solve_zs_lp(M, c1, c2):
    """Exact saddle point of max_x min_y x^T M y - c1.x + c2.y by linear programming."""
    Mf = M - c1[:, None] + c2[None, :]
    n, m = Mf.shape
    # player 1: max v s.t. Mf^T x >= v
    res = linprog(np.concatenate([np.zeros(n), [-1.0]]),
                  A_ub=np.hstack([-Mf.T, np.ones((m, 1))]), b_ub=np.zeros(m),
                  A_eq=np.concatenate([np.ones(n), [0.0]])[None], b_eq=[1.0],
                  bounds=[(0, None)] * n + [(None, None)], method="highs")
    x = np.maximum(res.x[:n], 0.0)
    x /= x.sum()
    res2 = linprog(np.concatenate([np.zeros(m), [1.0]]),
                   A_ub=np.hstack([Mf, -np.ones((n, 1))]), b_ub=np.zeros(n),
                   A_eq=np.concatenate([np.ones(m), [0.0]])[None], b_eq=[1.0],
                   bounds=[(0, None)] * m + [(None, None)], method="highs")
    y = np.maximum(res2.x[:m], 0.0)
    y /= y.sum()
    return x, y


def solve_stage(U1, U2, reg1=None, reg2=None, eps: float = 1e-8, max_iter: int = MAX_ITER,
                check_every: int = 25, method: str = "auto") -> SaddleResult:
    """Nash equilibrium of a two-player stage game with own-strategy penalties.

    ``method``: ``auto`` (exact LP for unregularized zero-sum stages, support
    enumeration for small unregularized general-sum stages, mirror-prox
    otherwise), ``mirror_prox``, ``softmax`` (damped fixed point, Shannon only)
    or ``lp``.
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    r1, r2 = as_own(reg1), as_own(reg2)
    n, m = U1.shape
    s1, s2 = _split(r1, n), _split(r2, m)
    zero_sum = np.array_equal(U2, -U1)
    linear = _is_linear(s1) and _is_linear(s2)

    def result(x, y, it, conv=True):
        gap = stage_gap(U1, U2, r1, r2, x, y)
        return SaddleResult(x, y, float(x @ U1 @ y - r1.value(x)), gap, it,
                            conv and gap <= eps, float(x @ U2 @ y - r2.value(y)))

    if method == "lp" or (method == "auto" and linear and zero_sum):
        if not (linear and zero_sum):
            raise ValueError("the LP path needs a zero-sum stage with linear penalties")
        x, y = _solve_zs_lp(U1, s1.lin, s2.lin)
        return result(x, y, 0)
    if method == "auto" and linear and max(n, m) <= 8:
        eqs = solve_general_sum_support_enum(U1 - s1.lin[:, None], U2 - s2.lin[None, :])
        if eqs:
            x, y, _ = eqs[0]
            return result(x, y, 0)
    if method == "softmax":
        return _solve_softmax(U1, U2, r1, r2, s1, s2, eps, max_iter, check_every, result)
    return _mirror_prox(U1, U2, r1, r2, s1, s2, eps, max_iter, check_every, result)


def _mirror_prox(U1, U2, r1, r2, s1, s2, eps, max_iter, check_every, result):
    n, m = U1.shape
    g1 = regs.combine(*s1.rest, regs.Linear(tuple(s1.lin)))
    g2 = regs.combine(*s2.rest, regs.Linear(tuple(s2.lin)))
    L = max(np.abs(U1).max(), np.abs(U2).max(), 1e-12) + max(g1.curvature, g2.curvature)
    eta = 1.0 / (2.0 * L)
    lx = np.full(n, -math.log(n))
    ly = np.full(m, -math.log(m))
    avg_x = np.zeros(n)
    avg_y = np.zeros(m)
    strongly = s1.tau > 0 and s2.tau > 0
    best = None
    it = 0
    worse = 0
    last_gap = math.inf
    while it < max_iter:
        for _ in range(check_every):
            x, y = np.exp(lx), np.exp(ly)
            hx = _prox(lx, U1 @ y - g1.grad(x), eta, s1.tau, s1.tau_logref)
            hy = _prox(ly, U2.T @ x - g2.grad(y), eta, s2.tau, s2.tau_logref)
            xh, yh = np.exp(hx), np.exp(hy)
            lx = _prox(lx, U1 @ yh - g1.grad(xh), eta, s1.tau, s1.tau_logref)
            ly = _prox(ly, U2.T @ xh - g2.grad(yh), eta, s2.tau, s2.tau_logref)
            avg_x += xh
            avg_y += yh
            it += 1
        cands = [(np.exp(lx), np.exp(ly))]
        if not strongly:
            cands.append((avg_x / it, avg_y / it))
        for x, y in cands:
            x, y = x / x.sum(), y / y.sum()
            gap = stage_gap(U1, U2, r1, r2, x, y)
            if best is None or gap < best[0]:
                best = (gap, x, y)
        if best[0] <= eps:
            return result(best[1], best[2], it)
        # divergence guard: gap rising over many consecutive checks
        worse = worse + 1 if best[0] >= last_gap else 0
        last_gap = best[0]
        if worse >= 100 and strongly:
            break
    log.warning("stage solver stopped at %d iterations with gap %.3g", it, best[0])
    return result(best[1], best[2], it, conv=False)


def _solve_softmax(U1, U2, r1, r2, s1, s2, eps, max_iter, check_every, result,
                   damping: float = 0.5):
    if s1.rest or s2.rest or s1.tau <= 0 or s2.tau <= 0:
        raise ValueError("the softmax path needs purely entropic penalties on both sides")
    n, m = U1.shape
    x = np.full(n, 1.0 / n)
    y = np.full(m, 1.0 / m)
    best = (math.inf, x, y)
    worse = 0
    for it in range(1, max_iter + 1):
        bx = softmax((U1 @ y - s1.lin + s1.tau_logref) / s1.tau)
        by = softmax((U2.T @ x - s2.lin + s2.tau_logref) / s2.tau)
        x = (1 - damping) * x + damping * bx
        y = (1 - damping) * y + damping * by
        if it % check_every == 0:
            gap = stage_gap(U1, U2, r1, r2, x, y)
            if gap < best[0]:
                best, worse = (gap, x, y), 0
            else:
                worse += 1
            if gap <= eps:
                return result(x, y, it)
            if worse >= 100:
                # the map is not a contraction at this temperature: damp harder
                damping *= 0.5
                worse = 0
                x, y = best[1], best[2]
                if damping < 1e-3:
                    break
    log.warning("softmax iteration stalled at gap %.3g; switching to mirror-prox", best[0])
    return _mirror_prox(U1, U2, r1, r2, s1, s2, eps, max_iter, check_every, result)


def solve_zs_regularized(M, reg1=None, reg2=None, eps: float = 1e-8, **kw) -> SaddleResult:
    """Saddle point of x^T M y - reg1(x) + reg2(y); ``value`` is that objective."""
    M = np.asarray(M, dtype=float)
    res = solve_stage(M, -M, reg1, reg2, eps, **kw)
    r2 = as_own(reg2)
    res.value = float(res.x @ M @ res.y - as_own(reg1).value(res.x) + r2.value(res.y))
    res.value2 = None
    return res


# --------------------------------------------------------------------------- support enumeration

def _indifference(A, rows, cols):
    """Mix over ``cols`` making every row in ``rows`` indifferent under A."""
    k, l = len(rows), len(cols)
    sub = A[np.ix_(rows, cols)]
    lhs = np.zeros((k + 1, l + 1))
    lhs[:k, :l] = sub
    lhs[:k, l] = -1.0
    lhs[k, :l] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    if k == l:
        try:
            sol = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            return None
    else:
        sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        if np.max(np.abs(lhs @ sol - rhs)) > 1e-9:
            return None
    return sol[:l]


def bimatrix_gaps(A, B, x, y):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return float((A @ y).max() - x @ A @ y), float((x @ B).max() - x @ B @ y)


def solve_general_sum_support_enum(A, B, tol: float = 1e-9, equal_size_only: bool = False):
    """All Nash equilibria of the bimatrix game (A, B) found by support
    enumeration; both matrices are indexed [row, col]."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = A.shape
    found = []

    def supports(k):
        for size in range(1, k + 1):
            yield from itertools.combinations(range(k), size)

    def scan(pred):
        for I in supports(n):
            for J in supports(m):
                if not pred(len(I), len(J)):
                    continue
                ys = _indifference(A, list(I), list(J))
                xs = _indifference(B.T, list(J), list(I))
                if ys is None or xs is None:
                    log.debug("degenerate support pair %s %s skipped", I, J)
                    continue
                if np.any(xs < -tol) or np.any(ys < -tol):
                    continue
                x = np.zeros(n)
                y = np.zeros(m)
                x[list(I)] = np.maximum(xs, 0.0)
                y[list(J)] = np.maximum(ys, 0.0)
                x /= x.sum()
                y /= y.sum()
                g1, g2 = bimatrix_gaps(A, B, x, y)
                if g1 > tol or g2 > tol:
                    continue
                if any(np.allclose(x, fx, atol=1e-9) and np.allclose(y, fy, atol=1e-9)
                       for fx, fy, _ in found):
                    continue
                found.append((x, y, (float(x @ A @ y), float(x @ B @ y))))

    scan(lambda k, l: k == l)
    if not found and not equal_size_only:
        scan(lambda k, l: k != l)
    return found
