"""Command-line entry point: ``rmgkit <command> [options]``.

Exit codes: 0 success, 1 input error, 2 the computation ran but did not
certify (non-convergence, gap above ``--eps``, equivalence out of tolerance).
Reports go to ``--out`` (stdout if omitted); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import io
from .game import GameValidationError, nominal_policy_eval, random_policy
from .instances import REWARD_KINDS, TRANSITION_KINDS, decomposable_instance, random_instance
from .oracles import oracle_mc_eval, oracle_shapley
from .planner import (NotDecomposableError, decomposability_problems, equivalence_check,
                      regularized_policy_eval, rne_gap, robust_policy_eval,
                      solve_small_general_sum_rmg, solve_tpzs_rmg)
from .reductions import (reduce_gensum_to_tpzs_reward, reduce_gensum_to_tpzs_transition,
                         verify_reduction)

log = logging.getLogger("rmgkit")

OK, INPUT_ERROR, NOT_CERTIFIED = 0, 1, 2


class InputError(Exception):
    pass


# --------------------------------------------------------------------------- report helpers

def _report(command, args, body, started=None):
    doc = {"schema": io.SCHEMA, "kind": "report", "command": command, "config": _echo(args)}
    doc.update(body)
    if started is not None and getattr(args, "timing", False):
        doc["wall_time"] = time.perf_counter() - started
    return doc


def _echo(args):
    skip = {"func", "timing", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args, doc):
    text = io.dumps(doc)
    if args.out:
        io.write_json(args.out, doc)
    else:
        sys.stdout.write(text)


def _gap_dict(rep):
    return {"gaps": rep.gaps, "max_gap": rep.max_gap, "values": rep.values,
            "best_values": rep.best_values, "witnesses": rep.witnesses,
            "exact": rep.exact}


def _load_instance(path):
    if not path:
        raise InputError("--game is required")
    return io.load_instance(path)


def _load_policy(path, game):
    if not path:
        raise InputError("--policy is required")
    return io.load_policy(path, game)


# --------------------------------------------------------------------------- commands

def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    inst = _load_instance(args.game)
    method = args.method
    if method == "auto":
        method = "tpzs" if not decomposability_problems(inst) and inst.game.num_players == 2 \
            else "general-sum"
    log.info("solving with %s", method)
    if method == "tpzs":
        rep = solve_tpzs_rmg(inst, args.eps, max_iter=args.max_iter, jobs=args.jobs)
    else:
        rep = solve_small_general_sum_rmg(inst, args.eps)
    certified = rep.converged and rep.max_gap <= args.eps
    body = {"method": rep.method, "policy": io.policy_to_dict(rep.policy),
            "stage_values": rep.values, "gap": _gap_dict(rep.gap), "max_gap": rep.max_gap,
            "iterations": rep.iterations, "converged": rep.converged, "certified": certified}
    if rep.stage_gaps is not None:
        body["stage_gaps"] = rep.stage_gaps
    _emit(args, _report("solve", args, body, t0))
    if not certified:
        log.warning("not certified: converged=%s, max gap %.3g > eps %.3g",
                    rep.converged, rep.max_gap, args.eps)
        return NOT_CERTIFIED
    return OK


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    inst = _load_instance(args.game)
    pol = _load_policy(args.policy, inst.game)
    body = {"robust": robust_policy_eval(inst, pol).v,
            "regularized": regularized_policy_eval(inst, pol).v,
            "nominal": nominal_policy_eval(inst.game, pol).v}
    _emit(args, _report("eval", args, body, t0))
    return OK


def cmd_gap(args) -> int:
    t0 = time.perf_counter()
    inst = _load_instance(args.game)
    pol = _load_policy(args.policy, inst.game)
    rep = rne_gap(inst, pol)
    body = _gap_dict(rep)
    body["certified"] = rep.max_gap <= args.eps
    _emit(args, _report("gap", args, body, t0))
    return OK if body["certified"] else NOT_CERTIFIED


def cmd_reduce(args) -> int:
    t0 = time.perf_counter()
    if not args.game:
        raise InputError("--game (a bimatrix document) is required")
    A, B = io.load_bimatrix(args.game)
    build = reduce_gensum_to_tpzs_reward if args.variant == "reward" \
        else reduce_gensum_to_tpzs_transition
    inst = build(A, B)
    chk = verify_reduction(inst, A, B, args.trials, args.seed)
    doc = io.instance_to_dict(inst)
    doc["verification"] = {"trials": chk.trials, "max_gap_error": chk.max_gap_error,
                           "instance_gap_vs_ne_gap": chk.gaps, "config": _echo(args)}
    if args.timing:
        doc["verification"]["wall_time"] = time.perf_counter() - t0
    _emit(args, doc)
    return OK


def cmd_check_equivalence(args) -> int:
    t0 = time.perf_counter()
    inst = _load_instance(args.game)
    rep = equivalence_check(inst, args.trials, args.seed)
    body = {"max_deviation": rep.max_deviation, "tolerance": rep.tolerance,
            "trials": rep.trials, "per_trial": rep.per_trial, "passed": rep.passed}
    _emit(args, _report("check-equivalence", args, body, t0))
    return OK if rep.passed else NOT_CERTIFIED


def cmd_gen(args) -> int:
    acts = tuple(args.actions) if len(args.actions) > 1 else args.actions[0]
    if args.kind == "instance":
        inst = random_instance(args.seed, args.reward, args.transition, args.players,
                               args.states, acts, args.horizon, args.zero_sum, args.scale)
        doc = io.instance_to_dict(inst)
    elif args.kind == "decomposable":
        inst = decomposable_instance(args.seed, args.states, acts, args.horizon,
                                     transition=args.transition)
        doc = io.instance_to_dict(inst)
    elif args.kind == "bimatrix":
        rng = np.random.default_rng(args.seed)
        m = args.actions[0]
        n = args.actions[-1]
        doc = io.bimatrix_to_dict(rng.uniform(-1, 1, (m, n)), rng.uniform(-1, 1, (m, n)))
    else:
        inst = _load_instance(args.game)
        doc = io.policy_to_dict(random_policy(args.seed, inst.game))
    _emit(args, doc)
    return OK


def cmd_oracle(args) -> int:
    t0 = time.perf_counter()
    inst = _load_instance(args.game)
    g = inst.game
    if args.kind == "mc":
        pol = _load_policy(args.policy, g)
        mean, se = oracle_mc_eval(g, pol, args.rollouts, args.seed)
        exact = nominal_policy_eval(g, pol).v[:, 0, g.initial_state]
        body = {"estimate": mean, "standard_error": se, "nominal": exact,
                "within_3se": bool(np.all(np.abs(mean - exact) <= 3 * se + 1e-12))}
    else:
        if g.num_players != 2 or not g.zero_sum:
            raise InputError("the Shapley oracle needs a two-player zero-sum game")
        body = {"values": oracle_shapley(g)}
    _emit(args, _report("oracle", args, body, t0))
    return OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--game", help="game, instance or bimatrix JSON file")
    common.add_argument("--policy", help="policy JSON file (or a solve report)")
    common.add_argument("--eps", type=float, default=1e-6)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=100)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--timing", action="store_true", help="add wall time to reports")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rmgkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="plan an equilibrium and certify it")
    s.add_argument("--method", choices=("auto", "tpzs", "general-sum"), default="auto")
    s.add_argument("--max-iter", type=int, default=1_000_000)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", parents=[common], help="robust, regularized and nominal values")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gap", parents=[common], help="robust Nash gap of a policy")
    s.set_defaults(func=cmd_gap)

    s = sub.add_parser("reduce", parents=[common], help="encode a bimatrix game as a robust game")
    s.add_argument("--variant", choices=("reward", "transition"), default="reward")
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("check-equivalence", parents=[common],
                       help="robust vs regularized evaluation on random policies")
    s.set_defaults(func=cmd_check_equivalence)

    s = sub.add_parser("gen", parents=[common], help="generate instances, bimatrix games, policies")
    s.add_argument("--kind", choices=("instance", "decomposable", "bimatrix", "policy"),
                   default="instance")
    s.add_argument("--reward", choices=REWARD_KINDS, default="singleton")
    s.add_argument("--transition", choices=("singleton",) + TRANSITION_KINDS, default="singleton")
    s.add_argument("--players", type=int, default=2)
    s.add_argument("--states", type=int, default=3)
    s.add_argument("--actions", type=int, nargs="+", default=[3])
    s.add_argument("--horizon", type=int, default=3)
    s.add_argument("--zero-sum", action="store_true")
    s.add_argument("--scale", type=float, default=0.3)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("oracle", parents=[common], help="brute-force references")
    s.add_argument("--kind", choices=("mc", "shapley"), default="mc")
    s.add_argument("--rollouts", type=int, default=100_000)
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return INPUT_ERROR if e.code else OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "eps", 1.0) <= 0:
        print("error: --eps must be positive", file=sys.stderr)
        return INPUT_ERROR
    try:
        return args.func(args)
    except (InputError, io.FormatError, GameValidationError, NotDecomposableError,
            ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
