import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmgkit import regularizers as regs
from rmgkit.oracles import OracleConfig, oracle_interval_corners, oracle_set_support
from rmgkit.reward_support import (RegularizerDesc, RewardSetDesc, kernel_eval, kernel_grad,
                                   kernel_interval, own_regularizer, regularizer_from_uncertainty,
                                   support_interval, support_kernel, support_opnorm_ball,
                                   support_reward, support_reward_batch,
                                   uncertainty_from_regularizer, worst_reward_perturbation)
from rmgkit.simplex import joint_product, lp_norm

ORDERS = [1.0, 1.5, 2.0, 3.0, math.inf]


def rand_sets(rng, actions):
    J = int(np.prod(actions))
    yield RewardSetDesc("singleton")
    yield RewardSetDesc("interval", lo=-rng.uniform(0, 1, J), hi=rng.uniform(0, 1, J))
    yield RewardSetDesc("opnorm_ball", alpha=rng.uniform(0, 1), p=float(rng.choice(ORDERS)),
                        q=float(rng.choice(ORDERS)))
    for kind in ("shannon", "tsallis"):
        yield RewardSetDesc("kernel", kernel=kind, tau=rng.uniform(0, 1))
    yield RewardSetDesc("kernel", kernel="renyi", tau=rng.uniform(0, 1), renyi_q=0.5)


# --------------------------------------------------------------------------- interval

def test_interval_zero_box():
    assert support_interval(np.zeros(4), np.zeros(4), np.array([1.0, -2, 3, 0])) == 0.0


def test_interval_unit_box_uniform():
    mu = joint_product([np.full(2, 0.5), np.full(2, 0.5)])
    assert support_interval(-np.ones(4), np.ones(4), -mu) == pytest.approx(1.0)


def test_interval_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        support_interval(np.ones(2), np.zeros(2), np.ones(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_interval_matches_corner_enumeration(seed):
    # [DERIVED] corner enumeration oracle
    rng = np.random.default_rng(seed)
    lo = rng.normal(size=4)
    hi = lo + rng.uniform(0, 1, 4)
    y = rng.normal(size=4)
    assert support_interval(lo, hi, y) == pytest.approx(oracle_interval_corners(lo, hi, y), abs=1e-12)


# --------------------------------------------------------------------------- operator ball

def test_opnorm_point_masses():
    assert support_opnorm_ball(1, 2, 2, [1, 0], [1, 0]) == pytest.approx(1.0)


def test_opnorm_l1_is_radius():
    assert support_opnorm_ball(2, 1, 1, [0.3, 0.7], [0.1, 0.2, 0.7]) == pytest.approx(2.0)


def test_opnorm_inf_2_example_and_sampling():
    # [DERIVED] sampled ball members with local ascent never exceed the closed form
    val, R = support_opnorm_ball(1, math.inf, 2, [0.5, 0.5], [0.6, 0.4], return_maximizer=True)
    assert val == pytest.approx(0.5 * math.sqrt(0.52), abs=1e-12)
    d = RewardSetDesc("opnorm_ball", alpha=1.0, p=math.inf, q=2.0)
    low, _ = oracle_set_support(d, 0, [[0.5, 0.5], [0.6, 0.4]], (2, 2), OracleConfig(samples=10_000))
    assert low <= val + 1e-9
    assert low == pytest.approx(val, abs=1e-3)


def test_opnorm_oracle_convergence_2x2():
    # [DERIVED] 10^5 samples reach the closed form within 1e-3
    rng = np.random.default_rng(3)
    for _ in range(3):
        d = RewardSetDesc("opnorm_ball", alpha=0.8, p=float(rng.choice(ORDERS)),
                          q=float(rng.choice(ORDERS)))
        ds = [rng.dirichlet([1, 1]), rng.dirichlet([1, 1])]
        low, _ = oracle_set_support(d, 0, ds, (2, 2), OracleConfig(samples=100_000))
        closed = support_reward(d, 0, ds, (2, 2))
        assert low <= closed + 1e-9
        assert closed - low <= 1e-3


def test_opnorm_maximizer_feasible_and_attaining():
    rng = np.random.default_rng(0)
    for p in ORDERS:
        for q in ORDERS:
            x, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
            val, R = support_opnorm_ball(0.7, p, q, x, y, return_maximizer=True)
            assert np.sum(R * -np.outer(x, y)) == pytest.approx(val, abs=1e-12)
            # rank-one: ||u w^T||_{q->p*} = ||u||_{p*} ||w||_{q*}
            u, s, wt = np.linalg.svd(R)
            assert s[1] <= 1e-12


def test_opnorm_invalid_order():
    with pytest.raises(ValueError):
        support_opnorm_ball(1, 0.5, 2, [1.0], [1.0])


# --------------------------------------------------------------------------- kernels

def test_shannon_uniform_and_point_mass():
    assert support_kernel("shannon", 1.0, [0.5, 0.5]) == pytest.approx(-math.log(2))
    assert support_kernel("shannon", 3.0, [1.0, 0.0, 0.0]) == 0.0


def test_shannon_against_interval_set():
    # [DERIVED] worst case over the policy-dependent interval set
    x = np.array([0.75, 0.25])
    want = 2 * (0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    assert support_kernel("shannon", 2.0, x) == pytest.approx(want, abs=1e-15)
    d = RewardSetDesc("kernel", kernel="shannon", tau=2.0)
    y = np.array([0.3, 0.7])
    low, _ = oracle_set_support(d, 0, [x, y], (2, 2))
    assert low == pytest.approx(want, abs=1e-12)
    lo, hi = kernel_interval("shannon", 2.0, x, 2)
    assert support_interval(lo, hi, -np.outer(x, y)) == pytest.approx(want, abs=1e-12)


def test_kernel_values_and_grad():
    assert kernel_eval("shannon", np.array(1.0)) == 0.0
    assert kernel_eval("tsallis", np.array(1.0)) == 0.0
    h = 1e-6
    fd = (kernel_eval("shannon", np.array(0.5 + h)) - kernel_eval("shannon", np.array(0.5 - h))) / (2 * h)
    assert kernel_grad("shannon", np.array(0.5)) == pytest.approx(fd, abs=1e-6)


def test_kernel_rejects_out_of_range():
    with pytest.raises(ValueError):
        kernel_eval("shannon", np.array(1.5))
    with pytest.raises(ValueError):
        support_kernel("nope", 1.0, [1.0])


# --------------------------------------------------------------------------- dictionary

def test_dictionary_examples():
    assert regularizer_from_uncertainty(RewardSetDesc("singleton")).kind == "zero"
    r = regularizer_from_uncertainty(RewardSetDesc("opnorm_ball", alpha=0.3, p=2, q=3))
    assert (r.kind, r.alpha, r.p, r.q) == ("lp_lq_norm", 0.3, 2, 3)
    r = regularizer_from_uncertainty(RewardSetDesc("kernel", kernel="shannon", tau=0.4))
    assert (r.kind, r.kernel, r.tau) == ("decomposable_kernel", "shannon", 0.4)
    assert uncertainty_from_regularizer(RegularizerDesc("zero")).family == "singleton"
    assert regularizer_from_uncertainty(
        RewardSetDesc("interval", lo=[-1.0], hi=[1.0])).kind == "numeric"


def test_round_trip_closed_forms():
    rng = np.random.default_rng(1)
    for d in rand_sets(rng, (2, 3)):
        if d.family == "interval":
            continue
        assert uncertainty_from_regularizer(regularizer_from_uncertainty(d)) == d


def test_nonconvex_kernel_rejected():
    with pytest.raises(ValueError):
        RegularizerDesc("decomposable_kernel", kernel="renyi", tau=1.0, renyi_q=1.5)


def test_convexity_spot_check_flags_concave():
    assert not regs.spot_check_convexity(regs.Entropic(-1.0), 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_regularizer_matches_support(seed):
    rng = np.random.default_rng(seed)
    acts = (3, 2)
    ds = [rng.dirichlet(np.ones(a)) for a in acts]
    for d in rand_sets(rng, acts):
        for i in range(2):
            reg = regularizer_from_uncertainty(d)
            y = ds[1 - i]
            val = own_regularizer(reg, y, actions=acts, i=i).value(ds[i])
            assert val == pytest.approx(support_reward(d, i, ds, acts), abs=1e-12)


# --------------------------------------------------------------------------- invariants

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 5.0))
def test_positive_homogeneity_and_zero(seed, t):
    rng = np.random.default_rng(seed)
    lo = -rng.uniform(0, 1, 6)
    hi = rng.uniform(0, 1, 6)
    y = rng.normal(size=6)
    assert support_interval(lo, hi, t * y) == pytest.approx(t * support_interval(lo, hi, y), abs=1e-10)
    assert support_interval(lo, hi, np.zeros(6)) == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_sampling_lower_bound_and_attainment(seed):
    rng = np.random.default_rng(seed)
    acts = (2, 3)
    ds = [rng.dirichlet(np.ones(a)) for a in acts]
    mu = joint_product(ds)
    cfg = OracleConfig(samples=300, local_steps=50, seed=seed)
    for d in rand_sets(rng, acts):
        for i in range(2):
            closed = support_reward(d, i, ds, acts)
            low, wit = oracle_set_support(d, i, ds, acts, cfg)
            assert low <= closed + 1e-9
            R = worst_reward_perturbation(d, i, ds, acts)
            assert R @ -mu == pytest.approx(closed, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_robust_stage_value_equals_worst_case(seed):
    # pi^T r* pi - sigma equals min over the set of E_pi[r*+R]
    rng = np.random.default_rng(seed)
    acts = (2, 2)
    r = rng.normal(size=4)
    ds = [rng.dirichlet(np.ones(a)) for a in acts]
    mu = joint_product(ds)
    cfg = OracleConfig(samples=2000, local_steps=300, seed=seed)
    for d in rand_sets(rng, acts):
        closed = mu @ r - support_reward(d, 0, ds, acts)
        low, R = oracle_set_support(d, 0, ds, acts, cfg)
        assert mu @ (r + R) >= closed - 1e-9
        assert mu @ (r + R) == pytest.approx(closed, abs=1e-6)


def test_batch_matches_single():
    rng = np.random.default_rng(5)
    acts = (3, 2)
    X = rng.dirichlet(np.ones(3), size=7)
    Y = rng.dirichlet(np.ones(2), size=7)
    for d in list(rand_sets(rng, acts)) + [RewardSetDesc("kernel", kernel="kl_reference", tau=0.2,
                                                         ref=[0.2, 0.3, 0.5])]:
        b = support_reward_batch(d, 0, [X, Y], acts)
        for t in range(7):
            assert b[t] == pytest.approx(support_reward(d, 0, [X[t], Y[t]], acts), abs=1e-13)


def test_sum_family_adds_supports():
    parts = (RewardSetDesc("kernel", kernel="shannon", tau=0.1),
             RewardSetDesc("opnorm_ball", alpha=0.2, p=2.0, q=1.0))
    d = RewardSetDesc("sum", parts=parts)
    ds = [np.array([0.2, 0.8]), np.array([0.5, 0.5])]
    want = sum(support_reward(p, 0, ds, (2, 2)) for p in parts)
    assert support_reward(d, 0, ds, (2, 2)) == pytest.approx(want)
    assert want == pytest.approx(0.1 * (0.2 * math.log(0.2) + 0.8 * math.log(0.8))
                                 + 0.2 * lp_norm(ds[0], 2))
