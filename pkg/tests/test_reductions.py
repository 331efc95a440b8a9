import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmgkit.planner import robust_policy_eval, solve_small_general_sum_rmg, stage_game
from rmgkit.reductions import (GeneralSumGame, gensum_ne_gap, instance_gap_sum, lift_policy,
                               normalize, reduce_gensum_to_tpzs_reward,
                               reduce_gensum_to_tpzs_transition, verify_reduction)
from rmgkit.stage import bimatrix_gaps, solve_general_sum_support_enum
from rmgkit.transition_duals import sa_dual_tv

BOS_A = np.array([[2.0, 0.0], [0.0, 1.0]])
BOS_B = np.array([[1.0, 0.0], [0.0, 2.0]])


def test_general_sum_game_validation():
    with pytest.raises(ValueError):
        GeneralSumGame(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        GeneralSumGame(np.array([[np.inf]]), np.zeros((1, 1)))


def test_ne_gap_examples():
    u = np.array([0.5, 0.5])
    pennies = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert gensum_ne_gap(pennies, -pennies, u, u) == pytest.approx(0.0)
    e1 = np.array([1.0, 0.0])
    assert gensum_ne_gap(pennies, -pennies, e1, e1) == pytest.approx(2.0)


def test_normalization_shift():
    A, B, c = normalize(BOS_A, BOS_B)
    assert c == pytest.approx(1.5)
    assert (A + B).max() <= 1e-15
    _, _, c0 = normalize(BOS_A, -BOS_A)
    assert c0 == 0.0


def test_reward_instance_structure():
    inst = reduce_gensum_to_tpzs_reward(BOS_A, BOS_B)
    g = inst.game
    assert (g.num_states, g.horizon, g.zero_sum) == (1, 1, True)
    assert inst.meta["reduction"] == "reward"
    d = inst.reward_set(0, 0, 0)
    assert np.all(np.asarray(d.lo) <= 0) and np.all(np.asarray(d.hi) >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_reward_gap_identity(seed):
    # [PAPER] the instance's total gap equals the bimatrix Nash gap
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    A, B = rng.uniform(-1, 1, (m, n)), rng.uniform(-1, 1, (m, n))
    inst = reduce_gensum_to_tpzs_reward(A, B)
    chk = verify_reduction(inst, A, B, trials=20, seed=seed)
    assert chk.max_gap_error <= 1e-10


def test_reward_robust_values_are_bimatrix_payoffs():
    inst = reduce_gensum_to_tpzs_reward(BOS_A, BOS_B)
    x, y = np.array([0.3, 0.7]), np.array([0.8, 0.2])
    v = robust_policy_eval(inst, lift_policy(inst, x, y)).v
    c = inst.meta["shift"]
    assert v[0, 0, 0] == pytest.approx(x @ BOS_A @ y - c, abs=1e-14)
    assert v[1, 0, 0] == pytest.approx(x @ BOS_B @ y - c, abs=1e-14)


def test_folded_stage_recovers_three_bos_equilibria():
    # [DERIVED] reduction identity plus support enumeration
    inst = reduce_gensum_to_tpzs_reward(BOS_A, BOS_B)
    U1, U2, _, _ = stage_game(inst, 0, 0, np.zeros((2, 1)))
    eqs = solve_general_sum_support_enum(U1, U2)
    assert len(eqs) == 3
    for x, y, _ in eqs:
        g1, g2 = bimatrix_gaps(BOS_A, BOS_B, x, y)
        assert g1 <= 1e-9 and g2 <= 1e-9
        assert instance_gap_sum(inst, x, y) <= 1e-9
    rep = solve_small_general_sum_rmg(inst)
    assert rep.max_gap <= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_transition_variant_values(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.uniform(-1, 1, (2, 2)), rng.uniform(-1, 1, (2, 2))
    inst = reduce_gensum_to_tpzs_transition(A, B)
    x, y = rng.dirichlet([1, 1]), rng.dirichlet([1, 1])
    v = robust_policy_eval(inst, lift_policy(inst, x, y)).v
    c = inst.meta["shift"]
    assert v[0, 0, 0] == pytest.approx(x @ A @ y - c, abs=1e-8)
    assert v[1, 0, 0] == pytest.approx(x @ B @ y - c, abs=1e-8)
    assert instance_gap_sum(inst, x, y) == pytest.approx(gensum_ne_gap(A, B, x, y), abs=1e-8)


def test_transition_worst_case_is_point_mass_at_full_radius():
    inst = reduce_gensum_to_tpzs_transition(BOS_A, BOS_B)
    K = inst.meta["scale"]
    beta = inst.trans.radii(0, 2, 4)[0]
    j = int(np.argmax(beta))
    assert beta[j] == pytest.approx(0.5)
    val, p = sa_dual_tv(np.array([0.5, 0.5]), np.array([-K, K]), beta[j])
    np.testing.assert_allclose(p, [1.0, 0.0])
    assert val == pytest.approx(K)


def test_zero_sum_input_has_no_uncertainty():
    A = np.array([[1.0, -2.0], [0.5, 0.0]])
    inst = reduce_gensum_to_tpzs_reward(A, -A)
    d = inst.reward_set(0, 0, 0)
    assert np.all(np.asarray(d.lo) == 0)
    inst = reduce_gensum_to_tpzs_transition(A, -A)
    assert inst.meta["scale"] == 0.0
