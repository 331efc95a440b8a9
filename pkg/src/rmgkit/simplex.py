"""Small numeric helpers shared across the package: norms, simplex projection,
entropy terms and product distributions."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy


def conjugate_order(p: float) -> float:
    """Hoelder conjugate p* with 1/p + 1/p* = 1 (1* = inf, inf* = 1)."""
    p = float(p)
    if p < 1.0:
        raise ValueError(f"invalid norm order {p}; must lie in [1, inf]")
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def check_order(p: float) -> float:
    p = float(p)
    if not (p >= 1.0):
        raise ValueError(f"invalid norm order {p}; must lie in [1, inf]")
    return p


def lp_norm(x: np.ndarray, p: float, axis: int = -1) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=float))
    p = check_order(p)
    if math.isinf(p):
        return x.max(axis=axis)
    if p == 1.0:
        return x.sum(axis=axis)
    if p == 2.0:
        return np.sqrt((x * x).sum(axis=axis))
    # scale first so large orders don't overflow
    m = x.max(axis=axis, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return np.squeeze(safe, axis=axis) * ((x / safe) ** p).sum(axis=axis) ** (1.0 / p)


def dual_vector(x: np.ndarray, p: float) -> np.ndarray:
    """A vector u with ||u||_{p*} = 1 and <u, x> = ||x||_p (zero vector for x = 0)."""
    x = np.asarray(x, dtype=float)
    p = check_order(p)
    nrm = float(lp_norm(x, p))
    u = np.zeros_like(x)
    if nrm == 0.0:
        return u
    if math.isinf(p):
        j = int(np.argmax(np.abs(x)))
        u[j] = np.sign(x[j])
        return u
    if p == 1.0:
        return np.sign(x)
    return np.sign(x) * (np.abs(x) / nrm) ** (p - 1.0)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def neg_entropy(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """sum x log x with the 0 log 0 = 0 convention."""
    return xlogy(x, x).sum(axis=axis)


def is_distribution(x: np.ndarray, tol: float = 1e-12) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)


def joint_product(dists: list[np.ndarray]) -> np.ndarray:
    """Row-major flattened product distribution over joint actions.

    Every entry of ``dists`` may carry the same leading batch shape; the
    product is taken over the last axis.
    """
    out = np.asarray(dists[0], dtype=float)
    for d in dists[1:]:
        d = np.asarray(d, dtype=float)
        out = (out[..., :, None] * d[..., None, :]).reshape(*out.shape[:-1], -1)
    return out
