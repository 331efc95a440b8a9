import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmgkit.instances import random_metric
from rmgkit.oracles import (oracle_simplex_grid_max, oracle_transition_lp, oracle_transition_ray,
                            oracle_transition_samples, transport_cost)
from rmgkit.regularized import kl_penalty
from rmgkit.transition_duals import (TransSetDesc, chi2_worst_dist, check_metric, kl_tilted,
                                     s_rect_ball_maximizer, s_rect_ball_transition,
                                     sa_dual_chi2, sa_dual_kl, sa_dual_tv, sa_dual_wasserstein,
                                     sa_rect_support, tv_support_value,
                                     tv_threshold_dual)

PB = np.array([0.5, 0.5])
V = np.array([0.0, 1.0])
DISCRETE = 1.0 - np.eye(2)


def dual(family, pbar, v, beta, rho=None):
    if family == "sa_tv":
        return sa_dual_tv(pbar, v, beta)[0]
    if family == "sa_kl":
        return sa_dual_kl(pbar, v, beta)[0]
    if family == "sa_chi2":
        return sa_dual_chi2(pbar, v, beta)[0]
    return sa_dual_wasserstein(pbar, v, beta, rho)[0]


FAMILIES = ("sa_tv", "sa_kl", "sa_chi2", "sa_wasserstein")


def random_case(seed, S=None):
    rng = np.random.default_rng(seed)
    S = S or int(rng.integers(2, 6))
    pbar = rng.dirichlet(np.ones(S))
    if rng.uniform() < 0.2:
        pbar[rng.integers(S)] = 0.0
        pbar /= pbar.sum()
    v = rng.uniform(-1, 1, S)
    return pbar, v, float(rng.uniform(0, 1)), random_metric(rng, S)


# --------------------------------------------------------------------------- examples

def test_zero_radius_is_nominal():
    for fam in FAMILIES:
        assert dual(fam, PB, V, 0.0, DISCRETE) == pytest.approx(-0.5, abs=1e-15)


def test_tv_examples():
    val, dist = sa_dual_tv(PB, V, 0.25)
    assert val == pytest.approx(-0.25)
    np.testing.assert_allclose(dist, [0.75, 0.25])
    assert sa_dual_tv(PB, V, 0.5)[0] == pytest.approx(0.0)
    assert tv_threshold_dual(PB, V, 0.25) == pytest.approx(-0.25)


def test_tv_against_sampling_and_grid():
    # [DERIVED] feasible sampling and a penalty-filtered simplex grid
    low, _ = oracle_transition_samples("sa_tv", PB, V, 0.25, samples=10_000)
    assert -0.25 - 1e-3 <= low <= -0.25 + 1e-9

    def obj(p):
        return -p @ V if 0.5 * np.abs(p - PB).sum() <= 0.25 + 1e-12 else -np.inf

    _, g = oracle_simplex_grid_max(obj, 2, 1000)
    assert g == pytest.approx(-0.25, abs=1e-3)


def test_kl_examples():
    # [DERIVED] tilting-family sweep: KL(p_lam || pbar) = beta
    val, lam = sa_dual_kl(PB, V, 0.1)
    tilt = kl_penalty(PB, V, 0.1)[0]
    assert val == pytest.approx(tilt, abs=1e-9)
    assert val == pytest.approx(-0.280, abs=5e-4)
    assert lam == pytest.approx(1.05, abs=0.02)
    assert sa_dual_kl(PB, V, 1e6)[0] == pytest.approx(0.0, abs=1e-6)


def test_kl_tilted_attains_value():
    val, lam = sa_dual_kl(PB, V, 0.1)
    p = kl_tilted(PB, V, lam)
    assert -p @ V == pytest.approx(val, abs=1e-6)
    kl = float(np.sum(p * np.log(p / PB)))
    assert kl == pytest.approx(0.1, abs=1e-6)


def test_chi2_examples():
    assert sa_dual_chi2(PB, V, 1.0)[0] == pytest.approx(0.0, abs=1e-12)
    val, t = sa_dual_chi2(PB, V, 0.25)
    assert val == pytest.approx(-0.25, abs=1e-12)
    np.testing.assert_allclose(chi2_worst_dist(PB, V, 0.25, t), [0.75, 0.25], atol=1e-9)
    # [DERIVED] line search over the two-state simplex
    ray, p = oracle_transition_ray("sa_chi2", PB, V, 0.25)
    assert ray == pytest.approx(-0.25, abs=1e-9)


def test_wasserstein_examples():
    assert sa_dual_wasserstein(PB, V, 0.25, DISCRETE)[0] == pytest.approx(sa_dual_tv(PB, V, 0.25)[0])
    assert sa_dual_wasserstein(PB, V, 1.0, DISCRETE)[0] == pytest.approx(0.0)


def test_negative_radius_rejected():
    for fam in FAMILIES:
        with pytest.raises(ValueError):
            dual(fam, PB, V, -0.1, DISCRETE)


def test_metric_checks():
    with pytest.raises(ValueError):
        check_metric(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        check_metric(np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]]))


# --------------------------------------------------------------------------- invariants

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_sandwich_monotone_shift(seed):
    pbar, v, beta, rho = random_case(seed)
    supp = pbar > 0
    for fam in FAMILIES:
        val = dual(fam, pbar, v, beta, rho)
        lo = -pbar @ v
        hi = -v.min() if fam in ("sa_tv", "sa_wasserstein") else -v[supp].min()
        assert lo - 1e-9 <= val <= hi + 1e-9
        assert dual(fam, pbar, v, 1.5 * beta, rho) >= val - 1e-10
        c = 0.37
        assert dual(fam, pbar, v + c, beta, rho) == pytest.approx(val - c, abs=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_dominates_sampled_members(seed):
    pbar, v, beta, rho = random_case(seed, S=3)
    for fam in FAMILIES:
        low, _ = oracle_transition_samples(fam, pbar, v, beta, rho, samples=300, seed=seed)
        assert dual(fam, pbar, v, beta, rho) >= low - 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_worst_distributions_feasible_and_attaining(seed):
    pbar, v, beta, _ = random_case(seed)
    val, p = sa_dual_tv(pbar, v, beta)
    assert np.all(p >= -1e-12) and p.sum() == pytest.approx(1.0)
    assert 0.5 * np.abs(p - pbar).sum() <= beta + 1e-8
    assert -p @ v == pytest.approx(val, abs=1e-8)
    val, t = sa_dual_chi2(pbar, v, beta)
    p = chi2_worst_dist(pbar, v, beta, t)
    supp = pbar > 0
    assert np.all(p >= -1e-12) and p.sum() == pytest.approx(1.0)
    assert np.sum((p[supp] - pbar[supp]) ** 2 / pbar[supp]) <= beta + 1e-8
    assert -p @ v == pytest.approx(val, abs=1e-8)


def test_tv_threshold_dual_agrees():
    for seed in range(50):
        pbar, v, beta, _ = random_case(seed)
        assert tv_threshold_dual(pbar, v, beta) == pytest.approx(sa_dual_tv(pbar, v, beta)[0], abs=1e-12)


def test_tv_selection_value_matches_greedy():
    rng = np.random.default_rng(0)
    for S in (1, 2, 5, 3000, 50_000):
        for _ in range(5):
            pbar = rng.dirichlet(np.full(S, rng.choice([0.05, 1.0])))
            v = np.round(rng.normal(size=S), int(rng.integers(1, 4)))
            beta = float(rng.uniform(0, 1.1))
            assert tv_support_value(pbar, v, beta) == pytest.approx(sa_dual_tv(pbar, v, beta)[0],
                                                                    abs=1e-12)


def test_wasserstein_matches_transport_lp():
    for seed in range(30):
        pbar, v, beta, rho = random_case(seed, S=4)
        lp, p = oracle_transition_lp("sa_wasserstein", pbar, v, beta, rho)
        assert sa_dual_wasserstein(pbar, v, beta, rho)[0] == pytest.approx(lp, abs=1e-9)
        assert transport_cost(p, pbar, rho) <= beta + 1e-8


def test_large_radius_wasserstein_reaches_min():
    pbar, v, _, rho = random_case(4, S=5)
    val, lam = sa_dual_wasserstein(pbar, v, float(rho.max()), rho)
    assert val == pytest.approx(-v.min(), abs=1e-12)
    assert lam == 0.0


# --------------------------------------------------------------------------- s- and sa-rectangular

def test_s_rect_ball_examples_and_sampling():
    rng = np.random.default_rng(0)
    S, J = 3, 4
    pb = rng.dirichlet(np.ones(S), size=J)
    mu = rng.dirichlet(np.ones(J))
    v = rng.normal(size=S)
    assert s_rect_ball_transition(pb, v, mu, 0.0, 2, 2) == pytest.approx(-mu @ (pb @ v))
    assert s_rect_ball_transition(pb, np.zeros(S), mu, 0.3, 2, 2) == 0.0
    for p in (1.0, 2.0, math.inf):
        for q in (1.0, 2.0, math.inf):
            closed = s_rect_ball_transition(pb, v, mu, 0.3, p, q)
            K = s_rect_ball_maximizer(pb, v, mu, 0.3, p, q)
            assert np.sum(K * -np.outer(mu, v)) == pytest.approx(closed, abs=1e-12)
            # [DERIVED] ball sampling: Pbar + E with rank-one E, ||E||_{q* -> p} <= beta
            ps = 1.0 if math.isinf(p) else (math.inf if p == 1 else p / (p - 1))
            for _ in range(10_000 // 9):
                u, w = rng.normal(size=S), rng.normal(size=J)
                nu = np.sum(np.abs(u) ** ps) ** (1 / ps) if not math.isinf(ps) else np.abs(u).max()
                qs = 1.0 if math.isinf(q) else (math.inf if q == 1 else q / (q - 1))
                nw = np.sum(np.abs(w) ** qs) ** (1 / qs) if not math.isinf(qs) else np.abs(w).max()
                E = 0.3 * np.outer(w, u) / (nu * nw)
                assert np.sum((pb + E) * -np.outer(mu, v)) <= closed + 1e-9


def test_sa_rect_support_examples():
    pb = np.array([PB, PB])
    assert sa_rect_support(pb, V, [1.0, 0.0], [sa_dual_tv(PB, V, 0.0)[0], 0.0]) == pytest.approx(-0.5)
    duals = [sa_dual_tv(PB, V, 0.0)[0], sa_dual_tv(PB, V, 0.25)[0]]
    mu = np.array([0.3, 0.7])
    assert sa_rect_support(pb, V, mu, duals) == pytest.approx(0.3 * -0.5 + 0.7 * -0.25)
    assert sa_rect_support(pb, V, [0.0, 1.0], duals) == pytest.approx(-0.25)


def test_trans_desc_validation():
    with pytest.raises(ValueError):
        TransSetDesc("sa_wasserstein", beta=0.1)
    with pytest.raises(ValueError):
        TransSetDesc("sa_tv", beta=-1.0)
    with pytest.raises(ValueError):
        TransSetDesc("bogus")
    assert TransSetDesc("sa_kl", beta=0.0).is_singleton
