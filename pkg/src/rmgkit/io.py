"""JSON documents for games, instances, policies, value tables and reports.

Every document carries ``"schema": "rmg-v1"`` and a ``"kind"``.  Floats are
written with ``repr`` (shortest string that round-trips exactly) and infinite
norm orders as the string ``"inf"``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .game import GameSpec, Policy, ValueTable, validate_game, validate_policy
from .planner import RMGInstance
from .reward_support import RewardSetDesc
from .transition_duals import TransSetDesc

SCHEMA = "rmg-v1"


class FormatError(ValueError):
    pass


# --------------------------------------------------------------------------- encoding helpers

def _order(p):
    return "inf" if math.isinf(float(p)) else float(p)


def _read_order(p):
    return math.inf if p == "inf" else float(p)


def to_jsonable(x):
    """numpy arrays and scalars to lists and Python numbers; non-finite floats
    to strings."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def dumps(doc) -> str:
    return json.dumps(to_jsonable(doc), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: malformed JSON ({e})") from e
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise FormatError(f"{path}: missing schema version {SCHEMA!r}")
    return doc


def _array(doc, key, shape=None):
    if key not in doc:
        raise FormatError(f"missing field {key!r}")
    try:
        a = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError) as e:
        raise FormatError(f"field {key!r} is not a numeric array") from e
    if shape is not None and a.shape != tuple(shape):
        raise FormatError(f"field {key!r} has shape {a.shape}, expected {tuple(shape)}")
    return a


# --------------------------------------------------------------------------- descriptors

def reward_desc_to_dict(d: RewardSetDesc) -> dict:
    f = d.family
    out = {"family": f}
    if f == "interval":
        out.update(lo=list(d.lo), hi=list(d.hi))
    elif f == "opnorm_ball":
        out.update(alpha=d.alpha, p=_order(d.p), q=_order(d.q))
    elif f == "kernel":
        out.update(kernel=d.kernel, tau=d.tau)
        if d.ref is not None:
            out["ref"] = list(d.ref)
        if d.renyi_q is not None:
            out["renyi_q"] = d.renyi_q
    elif f == "sum":
        out["parts"] = [reward_desc_to_dict(p) for p in d.parts]
    if d.value_bound is not None:
        out["value_bound"] = d.value_bound
    return out


def reward_desc_from_dict(doc: dict) -> RewardSetDesc:
    f = doc.get("family", "singleton")
    kw = {}
    if f == "interval":
        kw.update(lo=doc["lo"], hi=doc["hi"])
    elif f == "opnorm_ball":
        kw.update(alpha=float(doc["alpha"]), p=_read_order(doc["p"]), q=_read_order(doc["q"]))
    elif f == "kernel":
        kw.update(kernel=doc["kernel"], tau=float(doc["tau"]), ref=doc.get("ref"),
                  renyi_q=doc.get("renyi_q"))
    elif f == "sum":
        kw["parts"] = tuple(reward_desc_from_dict(p) for p in doc["parts"])
    if "value_bound" in doc:
        kw["value_bound"] = float(doc["value_bound"])
    return RewardSetDesc(f, **kw)


def trans_desc_to_dict(t: TransSetDesc) -> dict:
    out = {"family": t.family, "beta": np.asarray(t.beta)}
    if t.family == "opnorm_ball":
        out.update(p=_order(t.p), q=_order(t.q))
    if t.rho is not None:
        out["rho"] = np.asarray(t.rho)
    return out


def trans_desc_from_dict(doc: dict) -> TransSetDesc:
    kw = {"beta": np.asarray(doc.get("beta", 0.0), dtype=float)}
    if "p" in doc:
        kw["p"] = _read_order(doc["p"])
    if "q" in doc:
        kw["q"] = _read_order(doc["q"])
    if "rho" in doc:
        kw["rho"] = np.asarray(doc["rho"], dtype=float)
    return TransSetDesc(doc.get("family", "singleton"), **kw)


# --------------------------------------------------------------------------- games and instances

def game_to_dict(g: GameSpec) -> dict:
    return {"schema": SCHEMA, "kind": "game", "num_players": g.num_players,
            "states": g.num_states, "actions": list(g.actions), "horizon": g.horizon,
            "initial_state": g.initial_state, "zero_sum": g.zero_sum,
            "transitions": g.transitions, "rewards": g.rewards}


def game_from_dict(doc: dict) -> GameSpec:
    try:
        N = int(doc["num_players"])
        S = int(doc["states"])
        acts = tuple(int(a) for a in doc["actions"])
        H = int(doc["horizon"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad or missing game header field: {e}") from e
    J = int(np.prod(acts))
    P = _array(doc, "transitions") if H > 1 else np.zeros((0, S, J, S))
    if P.size == 0:
        P = P.reshape(max(H - 1, 0), S, J, S)
    R = _array(doc, "rewards")
    g = GameSpec(N, S, acts, H, P, R, int(doc.get("initial_state", 0)),
                 bool(doc.get("zero_sum", False)))
    return validate_game(g)


def instance_to_dict(inst: RMGInstance) -> dict:
    doc = game_to_dict(inst.game)
    doc["kind"] = "instance"
    entries = [dict(player=i, step=h, state=s, **reward_desc_to_dict(d))
               for (i, h, s), d in sorted(inst.reward_sets.items())]
    doc["reward_uncertainty"] = {"default": reward_desc_to_dict(inst.reward_default),
                                 "entries": entries}
    doc["transition_uncertainty"] = trans_desc_to_dict(inst.trans)
    doc["decomposable"] = inst.decomposable
    if inst.meta:
        doc["meta"] = inst.meta
    return doc


def instance_from_dict(doc: dict) -> RMGInstance:
    """Accepts plain game documents too (no uncertainty)."""
    game = game_from_dict(doc)
    ru = doc.get("reward_uncertainty", {})
    default = reward_desc_from_dict(ru.get("default", {"family": "singleton"}))
    sets = {}
    for e in ru.get("entries", []):
        key = (int(e["player"]), int(e["step"]), int(e["state"]))
        body = {k: v for k, v in e.items() if k not in ("player", "step", "state")}
        sets[key] = reward_desc_from_dict(body)
    trans = trans_desc_from_dict(doc.get("transition_uncertainty", {"family": "singleton"}))
    return RMGInstance(game, default, sets, trans, bool(doc.get("decomposable", False)),
                       dict(doc.get("meta", {})))


def load_instance(path) -> RMGInstance:
    doc = read_json(path)
    if doc.get("kind") not in ("game", "instance"):
        raise FormatError(f"{path}: expected a game or instance document, got {doc.get('kind')!r}")
    return instance_from_dict(doc)


# --------------------------------------------------------------------------- policies, values, bimatrix

def policy_to_dict(p: Policy) -> dict:
    return {"schema": SCHEMA, "kind": "policy", "probs": [np.asarray(x) for x in p.probs]}


def policy_from_dict(doc: dict, game: GameSpec | None = None) -> Policy:
    if "probs" not in doc:
        raise FormatError("missing field 'probs'")
    pol = Policy(tuple(np.asarray(x, dtype=float) for x in doc["probs"]))
    if game is not None:
        validate_policy(game, pol)
    return pol


def load_policy(path, game: GameSpec | None = None) -> Policy:
    doc = read_json(path)
    if doc.get("kind") == "report" and "policy" in doc:
        doc = doc["policy"]
    return policy_from_dict(doc, game)


def values_to_dict(v: ValueTable) -> dict:
    return {"schema": SCHEMA, "kind": "values", "v": np.asarray(v.v)}


def values_from_dict(doc: dict) -> ValueTable:
    return ValueTable(_array(doc, "v"))


def bimatrix_to_dict(A, B) -> dict:
    return {"schema": SCHEMA, "kind": "bimatrix", "A": np.asarray(A), "B": np.asarray(B)}


def load_bimatrix(path):
    doc = read_json(path)
    if doc.get("kind") != "bimatrix":
        raise FormatError(f"{path}: expected a bimatrix document")
    return _array(doc, "A"), _array(doc, "B")
