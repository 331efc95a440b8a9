"""Acceptance criteria 1-7.  Each test prints one ``ACCEPTANCE <n> PASS|FAIL``
line with the measured numbers, then asserts the same condition.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np

from rmgkit import regularizers as regs
from rmgkit.game import nominal_policy_eval, random_game, random_policy
from rmgkit.instances import decomposable_instance, random_instance, random_metric
from rmgkit.oracles import (oracle_matrix_game_lp, oracle_shapley, oracle_transition_lp,
                            oracle_transition_ray)
from rmgkit.planner import (RMGInstance, equivalence_check, rne_gap,
                            robust_policy_eval, robust_stage_q, solve_small_general_sum_rmg,
                            solve_tpzs_rmg)
from rmgkit.reductions import (gensum_ne_gap, instance_gap_sum, lift_policy,
                               reduce_gensum_to_tpzs_reward, reduce_gensum_to_tpzs_transition,
                               verify_reduction)
from rmgkit.regularized import kl_penalty
from rmgkit.reward_support import RewardSetDesc, support_interval, support_opnorm_ball
from rmgkit.stage import solve_zs_regularized
from rmgkit.transition_duals import (TransSetDesc, sa_dual_chi2, sa_dual_kl, sa_dual_tv,
                                     sa_dual_wasserstein, tv_support_value)


RESULTS = []  # repeated in the pytest terminal summary, which output capture cannot hide


def report(n, ok, detail):
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    sys.__stdout__.write(f"\n{line}\n")
    sys.__stdout__.flush()


# --------------------------------------------------------------------------- 1

REWARD_FAMILIES = ("interval", "opnorm_ball", "shannon", "kl_reference", "tsallis")
TRANSITION_FAMILIES = ("opnorm_ball", "sa_tv", "sa_kl", "sa_chi2", "sa_wasserstein")


def _small_instance(seed, reward="singleton", transition="singleton"):
    rng = np.random.default_rng([seed, 17])
    return random_instance(seed, reward=reward, transition=transition,
                           num_states=int(rng.integers(1, 5)),
                           actions=tuple(int(a) for a in rng.integers(1, 6, 2)),
                           horizon=int(rng.integers(1, 5)))


def test_1_robust_regularized_equivalence():
    t0 = time.perf_counter()
    worst = {}
    ok = True
    for fam in REWARD_FAMILIES + tuple("T:" + f for f in TRANSITION_FAMILIES):
        dev = 0.0
        for seed in range(100):
            if fam.startswith("T:"):
                inst = _small_instance(seed, transition=fam[2:])
                tol = 1e-6 if fam[2:] in ("sa_kl", "sa_chi2", "sa_wasserstein") else 1e-9
            else:
                inst = _small_instance(seed, reward=fam)
                tol = 1e-9
            rep = equivalence_check(inst, trials=10, seed=seed)
            dev = max(dev, rep.max_deviation)
            ok &= rep.passed and rep.max_deviation <= tol
        worst[fam] = dev
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(1, ok, f"100 instances x 10 policies per family; max deviation {detail}; "
                  f"{elapsed:.1f} s (limit 60 s)")
    assert ok


# --------------------------------------------------------------------------- 2

def test_2_reduction_gap_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    err_r = 0.0
    for k in range(20):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        A, B = rng.uniform(-1, 1, (m, n)), rng.uniform(-1, 1, (m, n))
        chk = verify_reduction(reduce_gensum_to_tpzs_reward(A, B), A, B, trials=50, seed=k)
        err_r = max(err_r, chk.max_gap_error)
    err_t = 0.0
    for k in range(20):
        A, B = rng.uniform(-1, 1, (2, 2)), rng.uniform(-1, 1, (2, 2))
        inst = reduce_gensum_to_tpzs_transition(A, B)
        c = inst.meta["shift"]
        for _ in range(10):
            x, y = rng.dirichlet([1, 1]), rng.dirichlet([1, 1])
            v = robust_policy_eval(inst, lift_policy(inst, x, y)).v[:, 0, 0]
            err_t = max(err_t, abs(v[0] - (x @ A @ y - c)), abs(v[1] - (x @ B @ y - c)),
                        abs(instance_gap_sum(inst, x, y) - gensum_ne_gap(A, B, x, y)))
    elapsed = time.perf_counter() - t0
    ok = err_r <= 1e-10 and err_t <= 1e-8 and elapsed < 30
    report(2, ok, f"reward variant max |gap error| {err_r:.1e} over 1000 policies (limit 1e-10); "
                  f"transition variant max value error {err_t:.1e} (limit 1e-8); "
                  f"{elapsed:.1f} s (limit 30 s)")
    assert ok


# --------------------------------------------------------------------------- 3

def _timed_solve(inst):
    t = time.perf_counter()
    rep = solve_tpzs_rmg(inst, eps=1e-6, certify=False)
    return rep, time.perf_counter() - t


def test_3_efficient_tpzs_planning():
    gaps, times = [], []
    for seed in range(3):
        inst = decomposable_instance(seed, num_states=5, actions=4, horizon=5, tau=0.1,
                                     alpha=0.2)
        rep, dt = _timed_solve(inst)
        gaps.append(rne_gap(inst, rep.policy).max_gap)
        times.append(dt)
    scale_t, scale_it = [], []
    sizes = (2, 4, 8)
    for A in sizes:
        rep, dt = _timed_solve(decomposable_instance(0, actions=A))
        scale_t.append(dt)
        scale_it.append(rep.iterations)
    slope_t = np.polyfit(np.log(sizes), np.log(scale_t), 1)[0]
    slope_it = np.polyfit(np.log(sizes), np.log(scale_it), 1)[0]
    ok = max(gaps) <= 1e-4 and max(times) < 10 and slope_t <= 3 and slope_it <= 3
    report(3, ok, f"max certified RNE gap {max(gaps):.1e} (limit 1e-4); slowest solve "
                  f"{max(times):.1f} s (limit 10 s); A=2,4,8 wall {', '.join(f'{t:.1f}' for t in scale_t)} s, "
                  f"log-log slope {slope_t:.2f}; iterations {scale_it}, slope {slope_it:.2f} (limit 3)")
    assert ok


# --------------------------------------------------------------------------- 4

def _best_time(f, reps=15):
    out = math.inf
    for _ in range(reps):
        t = time.perf_counter()
        f()
        out = min(out, time.perf_counter() - t)
    return out


def test_4_transition_duals_vs_oracles():
    rng = np.random.default_rng(4)
    err = {"sa_tv": 0.0, "sa_chi2": 0.0, "sa_wasserstein": 0.0, "sa_kl": 0.0}
    for k in range(200):
        S = 2 + k % 2
        pbar = rng.dirichlet(np.ones(S))
        if k % 5 == 0:
            pbar[rng.integers(S)] = 0.0
            pbar /= pbar.sum()
        v = rng.uniform(-1, 1, S)
        beta = float(rng.uniform(0, 1))
        rho = random_metric(rng, S)
        err["sa_tv"] = max(err["sa_tv"], abs(sa_dual_tv(pbar, v, beta)[0]
                                             - oracle_transition_ray("sa_tv", pbar, v, beta)[0]))
        err["sa_chi2"] = max(err["sa_chi2"], abs(sa_dual_chi2(pbar, v, beta)[0]
                                                 - oracle_transition_ray("sa_chi2", pbar, v, beta)[0]))
        err["sa_wasserstein"] = max(err["sa_wasserstein"], abs(
            sa_dual_wasserstein(pbar, v, beta, rho)[0]
            - oracle_transition_lp("sa_wasserstein", pbar, v, beta, rho)[0]))
        err["sa_kl"] = max(err["sa_kl"], abs(sa_dual_kl(pbar, v, beta)[0]
                                             - float(kl_penalty(pbar, v, beta)[0])))
    sizes = (10**3, 10**4, 10**5)
    ratios, t_tv = [], []
    for S in sizes:
        pbar = rng.dirichlet(np.ones(S))
        v = rng.normal(size=S)
        t = _best_time(lambda: tv_support_value(pbar, v, 0.3))
        t_tv.append(t)
        ratios.append(t / _best_time(lambda: np.sort(v)))
    slope = np.polyfit(np.log(sizes[1:]), np.log(t_tv[1:]), 1)[0]
    ok = (max(err["sa_tv"], err["sa_chi2"], err["sa_wasserstein"]) <= 1e-4
          and err["sa_kl"] <= 1e-5 and ratios[-1] <= 2.0)
    report(4, ok, f"200 cases |S| in {{2,3}}: max error TV {err['sa_tv']:.1e}, chi2 "
                  f"{err['sa_chi2']:.1e}, Wasserstein {err['sa_wasserstein']:.1e} (limit 1e-4), "
                  f"KL {err['sa_kl']:.1e} (limit 1e-5); TV time / sort time at |S|=1e3,1e4,1e5: "
                  f"{', '.join(f'{r:.2f}' for r in ratios)} (limit 2 at 1e5), "
                  f"log-log slope 1e4->1e5 {slope:.2f}")
    assert ok


# --------------------------------------------------------------------------- 5

def _scaled(inst, c):
    t = inst.trans
    kw = {"beta": c * np.asarray(t.beta)}
    if t.family == "opnorm_ball":
        kw.update(p=t.p, q=t.q)
    if t.rho is not None:
        kw["rho"] = t.rho
    sets = {key: RewardSetDesc("interval", lo=c * np.asarray(d.lo), hi=c * np.asarray(d.hi))
            for key, d in inst.reward_sets.items()}
    return RMGInstance(inst.game, reward_sets=sets, trans=TransSetDesc(t.family, **kw))


def test_5_structural_invariants():
    trials = 1000
    fails = dict.fromkeys(("monotone", "below_nominal", "bellman", "homogeneity", "gap"), 0)
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    for k in range(trials):
        trans = TRANSITION_FAMILIES[k % 5]
        base = random_instance(k, reward="interval", transition=trans, num_states=2,
                               actions=2, horizon=3)
        pol = random_policy(k, base.game)
        v1 = robust_policy_eval(base, pol).v
        v2 = robust_policy_eval(_scaled(base, 1.0 + rng.uniform(0, 1)), pol).v
        fails["monotone"] += int(np.any(v2 > v1 + 1e-10))
        fails["below_nominal"] += int(np.any(v1 > nominal_policy_eval(base.game, pol).v + 1e-10))

        inst = random_instance(k, reward=("shannon", "opnorm_ball", "tsallis", "sum")[k % 4],
                               transition=trans, num_states=2, actions=2, horizon=3)
        pol = random_policy(k + 1, inst.game)
        v = robust_policy_eval(inst, pol).v
        bad = False
        for h in range(inst.game.horizon):
            for s in range(inst.game.num_states):
                q = robust_stage_q(inst, v[:, h + 1], h, s, [p[h, s] for p in pol.probs])
                bad |= bool(np.any(np.abs(q - v[:, h, s]) > 1e-10))
        fails["bellman"] += int(bad)

        t = float(rng.uniform(0, 5))
        x, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(2))
        lo, hi = -rng.uniform(0, 1, 6), rng.uniform(0, 1, 6)
        Y = rng.normal(size=6)
        p, q = float(rng.choice([1.0, 2.0, 3.0, math.inf])), float(rng.choice([1.0, 2.0, math.inf]))
        pbar, vv, beta = rng.dirichlet(np.ones(3)), rng.normal(size=3), float(rng.uniform(0, 1))
        pairs = [(support_interval(lo, hi, t * Y), t * support_interval(lo, hi, Y)),
                 (support_opnorm_ball(0.7, p, q, t * x, y), t * support_opnorm_ball(0.7, p, q, x, y)),
                 (sa_dual_tv(pbar, t * vv, beta)[0], t * sa_dual_tv(pbar, vv, beta)[0]),
                 (sa_dual_kl(pbar, t * vv, beta)[0], t * sa_dual_kl(pbar, vv, beta)[0]),
                 (sa_dual_chi2(pbar, t * vv, beta)[0], t * sa_dual_chi2(pbar, vv, beta)[0])]
        fails["homogeneity"] += int(any(abs(a - b) > 1e-8 * max(1.0, abs(b)) for a, b in pairs))

        gi = random_instance(k, reward=("interval", "shannon", "opnorm_ball", "kl_reference")[k % 4],
                             transition=trans, num_states=2, actions=2, horizon=2)
        fails["gap"] += int(rne_gap(gi, random_policy(k, gi.game)).gaps.min() < -1e-8)
    elapsed = time.perf_counter() - t0
    ok = sum(fails.values()) == 0
    report(5, ok, f"failures over {trials} trials each: "
                  + ", ".join(f"{k} {v}" for k, v in fails.items()) + f"; {elapsed:.1f} s")
    assert ok


# --------------------------------------------------------------------------- 6

def test_6_degenerate_consistency():
    shapley = 0.0
    for seed in range(10):
        g = random_game(seed, 2, 3, (3, 4), 4, zero_sum=True)
        inst = RMGInstance(g, trans=TransSetDesc("sa_tv", beta=0.0), decomposable=True)
        rep = solve_tpzs_rmg(inst, eps=1e-9)
        shapley = max(shapley, float(np.abs(rep.values[0] - oracle_shapley(g)).max()))
    saddle = 0.0
    for seed in range(10):
        g = random_game(100 + seed, 2, 1, (4, 3), 1, zero_sum=True)
        M = g.reward_block(0, 0, 0)
        rep = solve_tpzs_rmg(RMGInstance(g, decomposable=True), eps=1e-10)
        saddle = max(saddle, abs(rep.values[0, 0, 0] - oracle_matrix_game_lp(M)[2]))
        tau = 0.2
        d = RewardSetDesc("kernel", kernel="shannon", tau=tau)
        rep = solve_tpzs_rmg(RMGInstance(g, reward_default=d, decomposable=True), eps=1e-11)
        ref = solve_zs_regularized(M, regs.Entropic(tau), regs.Entropic(tau), eps=1e-12)
        x, y = rep.policy.probs[0][0, 0], rep.policy.probs[1][0, 0]
        # strategies are pinned down only to O(sqrt(gap / tau)); the saddle value to O(gap)
        ent = regs.Entropic(tau)
        saddle = max(saddle, abs(x @ M @ y - ent.value(x) + ent.value(y) - ref.value))
    ok = shapley <= 1e-10 and saddle <= 1e-9
    report(6, ok, f"zero-radius planner vs Shapley max error {shapley:.1e} (limit 1e-10); "
                  f"H=1 planner vs saddle solvers max error {saddle:.1e} (limit 1e-9)")
    assert ok


# --------------------------------------------------------------------------- 7

def test_7_small_general_sum_oracle():
    gaps = []
    for seed in range(50):
        inst = random_instance(seed, reward="interval", num_states=2, actions=2 + seed % 2,
                               horizon=1 + seed % 2)
        gaps.append(solve_small_general_sum_rmg(inst).max_gap)
    ok = max(gaps) <= 1e-6
    report(7, ok, f"50 instances (2x2 and 3x3, H<=2): max certified RNE gap {max(gaps):.1e} "
                  f"(limit 1e-6)")
    assert ok


if __name__ == "__main__":
    status = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            try:
                fn()
            except AssertionError:
                status = 1
    sys.exit(status)
