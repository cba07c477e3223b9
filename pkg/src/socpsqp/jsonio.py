"""Lossless JSON serialization for problems, primal-dual triples, and
generated-instance metadata."""

from __future__ import annotations

import json

import numpy as np

from .model import ConeProblem, ConeSpec, LinearRow, PrimalDualTriple

FORMAT = "socpsqp-instance/1"


class SchemaError(ValueError):
    pass


def _bound_list(v):
    return [None if not np.isfinite(x) else float(x) for x in v]


def _bound_array(lst, n, sign):
    if lst is None:
        return None
    if len(lst) != n:
        raise SchemaError("bound list has wrong length")
    return np.array([sign * np.inf if x is None else float(x) for x in lst])


def problem_to_dict(problem):
    return {
        "format": FORMAT,
        "num_vars": problem.num_vars,
        "objective": [float(v) for v in problem.objective],
        "rows": [
            {
                "indices": [int(i) for i in r.indices],
                "values": [float(v) for v in r.values],
                "rhs": float(r.rhs),
                "sense": r.sense,
            }
            for r in problem.rows
        ],
        "lower": _bound_list(problem.lower),
        "upper": _bound_list(problem.upper),
        "cones": [[int(i) for i in c.indices] for c in problem.cones],
    }


def problem_from_dict(data):
    if not isinstance(data, dict) or data.get("format") != FORMAT:
        raise SchemaError(f"not a {FORMAT} document")
    for key in ("num_vars", "objective", "rows", "cones"):
        if key not in data:
            raise SchemaError(f"missing field {key!r}")
    n = int(data["num_vars"])
    rows = []
    for k, r in enumerate(data["rows"]):
        try:
            rows.append(LinearRow(r["indices"], r["values"], r["rhs"], r["sense"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad row {k}: {exc}") from exc
    try:
        return ConeProblem(
            n,
            np.array(data["objective"], dtype=float),
            rows,
            _bound_array(data.get("lower"), n, -1),
            _bound_array(data.get("upper"), n, +1),
            [ConeSpec(tuple(c)) for c in data["cones"]],
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def triple_to_dict(triple):
    return {
        "x": [float(v) for v in triple.x],
        "lambda": [float(v) for v in triple.lam],
        "z": [float(v) for v in triple.z],
        "bound_duals": [float(v) for v in triple.bound_duals],
    }


def triple_from_dict(data):
    if not isinstance(data, dict) or "x" not in data or "lambda" not in data:
        raise SchemaError("a triple needs at least 'x' and 'lambda'")
    x = np.array(data["x"], dtype=float)
    lam = np.array(data["lambda"], dtype=float)
    z = np.array(data.get("z", np.zeros_like(x)), dtype=float)
    bd = data.get("bound_duals")
    return PrimalDualTriple(x, lam, z, None if bd is None else np.array(bd, dtype=float))


def write_instance(path, problem, triple=None, activity=None, gen_params=None):
    data = problem_to_dict(problem)
    if triple is not None:
        data["triple"] = triple_to_dict(triple)
    if activity is not None:
        data["activity"] = list(activity)
    if gen_params is not None:
        data["gen_params"] = gen_params
    text = json.dumps(data, indent=1)
    with open(path, "w") as f:
        f.write(text + "\n")
    return text


def read_instance(path):
    """Returns (problem, triple or None, activity or None)."""
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    problem = problem_from_dict(data)
    triple = triple_from_dict(data["triple"]) if "triple" in data else None
    activity = data.get("activity")
    return problem, triple, activity


def write_triple(path, triple):
    with open(path, "w") as f:
        json.dump(triple_to_dict(triple), f, indent=1)
        f.write("\n")


def read_triple(path):
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    return triple_from_dict(data)
