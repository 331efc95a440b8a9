"""Convex penalties on a single player's own mixed strategy.

These are the objects the stage solvers work with: a value, a gradient on the
relative interior of the simplex, and a curvature bound used for step sizes.
Entropic penalties additionally expose their temperature and reference so the
mirror-prox step can treat them in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .simplex import check_order, lp_norm

_TINY = 1e-300


class OwnRegularizer:
    curvature: float = 0.0

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x: np.ndarray) -> np.ndarray:
        return np.zeros((np.size(x), np.size(x)))

    @property
    def is_zero(self) -> bool:
        return False

    def terms(self) -> list["OwnRegularizer"]:
        return [self]


@dataclass(frozen=True)
class Zero(OwnRegularizer):
    curvature: float = 0.0

    def value(self, x):
        return 0.0

    def grad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def is_zero(self):
        return True


@dataclass(frozen=True)
class Entropic(OwnRegularizer):
    """tau * sum x log(x / ref); ``ref=None`` is the plain negative entropy."""

    tau: float
    ref: tuple[float, ...] | None = None
    curvature: float = 0.0

    def log_ref(self, n: int) -> np.ndarray:
        if self.ref is None:
            return np.zeros(n)
        return np.log(np.asarray(self.ref, dtype=float))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.tau * (xlogy(x, x).sum() - x @ self.log_ref(x.size)))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return self.tau * (np.log(np.maximum(x, _TINY)) + 1.0 - self.log_ref(x.size))

    def hess(self, x):
        return np.diag(self.tau / np.maximum(np.asarray(x, dtype=float), _TINY))

    @property
    def is_zero(self):
        return self.tau == 0.0


@dataclass(frozen=True)
class Tsallis(OwnRegularizer):
    """tau/2 * sum (x^2 - x)."""

    tau: float

    @property
    def curvature(self):
        return self.tau

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * self.tau * (x @ x - x.sum()))

    def grad(self, x):
        return self.tau * (np.asarray(x, dtype=float) - 0.5)

    def hess(self, x):
        return self.tau * np.eye(np.size(x))

    @property
    def is_zero(self):
        return self.tau == 0.0


@dataclass(frozen=True)
class Renyi(OwnRegularizer):
    """-tau/(1-q) * log sum x^q for q in (0, 1)."""

    tau: float
    q: float
    curvature: float = 0.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(-self.tau / (1.0 - self.q) * math.log(np.sum(x ** self.q)))

    def grad(self, x):
        x = np.maximum(np.asarray(x, dtype=float), _TINY)
        s = np.sum(x ** self.q)
        return -self.tau * self.q / (1.0 - self.q) * x ** (self.q - 1.0) / s

    def hess(self, x):
        x = np.maximum(np.asarray(x, dtype=float), _TINY)
        q = self.q
        s = np.sum(x ** q)
        g = x ** (q - 1.0)
        return -self.tau * q / (1.0 - q) * ((q - 1.0) * np.diag(x ** (q - 2.0)) / s
                                            - q * np.outer(g, g) / s ** 2)

    @property
    def is_zero(self):
        return self.tau == 0.0


@dataclass(frozen=True)
class Norm(OwnRegularizer):
    """weight * ||x||_p."""

    weight: float
    p: float

    def __post_init__(self):
        check_order(self.p)

    @property
    def curvature(self):
        # crude bound on the Hessian of ||x||_p over the simplex
        if self.p in (1.0, math.inf):
            return 0.0
        return self.weight * max(self.p - 1.0, 1.0) * 4.0

    def value(self, x):
        return float(self.weight * lp_norm(x, self.p))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        p = self.p
        if p == 1.0:
            return np.full_like(x, self.weight)
        if math.isinf(p):
            g = np.zeros_like(x)
            g[int(np.argmax(x))] = self.weight
            return g
        nrm = lp_norm(x, p)
        return self.weight * np.abs(x) ** (p - 1.0) / nrm ** (p - 1.0)

    def hess(self, x):
        # valid on the nonnegative orthant away from zero
        x = np.abs(np.asarray(x, dtype=float))
        p = self.p
        if p == 1.0 or math.isinf(p):
            return np.zeros((x.size, x.size))
        nrm = float(lp_norm(x, p))
        g = x ** (p - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(x > 0, x ** (p - 2.0), 0.0)
        return self.weight * (p - 1.0) * (np.diag(d) / nrm ** (p - 1.0)
                                          - np.outer(g, g) / nrm ** (2 * p - 1.0))

    @property
    def is_zero(self):
        return self.weight == 0.0


@dataclass(frozen=True)
class Linear(OwnRegularizer):
    """<c, x>; constant shifts (p = 1 norms) and folded payoff terms."""

    coef: tuple[float, ...]
    curvature: float = 0.0

    def value(self, x):
        return float(np.asarray(self.coef) @ np.asarray(x, dtype=float))

    def grad(self, x):
        return np.asarray(self.coef, dtype=float).copy()


class Sum(OwnRegularizer):
    def __init__(self, parts):
        flat = []
        for p in parts:
            flat.extend(p.terms())
        self.parts = tuple(p for p in flat if not p.is_zero)

    @property
    def curvature(self):
        return float(sum(p.curvature for p in self.parts))

    def value(self, x):
        return float(sum(p.value(x) for p in self.parts))

    def grad(self, x):
        g = np.zeros_like(np.asarray(x, dtype=float))
        for p in self.parts:
            g = g + p.grad(x)
        return g

    def hess(self, x):
        n = np.size(x)
        h = np.zeros((n, n))
        for p in self.parts:
            h = h + p.hess(x)
        return h

    @property
    def is_zero(self):
        return not self.parts

    def terms(self):
        return list(self.parts)

    def __repr__(self):
        return f"Sum({list(self.parts)!r})"


def combine(*parts: OwnRegularizer) -> OwnRegularizer:
    s = Sum(parts)
    if not s.parts:
        return Zero()
    if len(s.parts) == 1:
        return s.parts[0]
    return s


def spot_check_convexity(reg: OwnRegularizer, dim: int, seed: int = 0, trials: int = 64,
                         tol: float = 1e-10) -> bool:
    """Random secant test of convexity on the simplex."""
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        x, y = rng.dirichlet(np.ones(dim), size=2)
        t = rng.uniform()
        mid = reg.value(t * x + (1 - t) * y)
        if mid > t * reg.value(x) + (1 - t) * reg.value(y) + tol * (1 + abs(mid)):
            return False
    return True
