"""JSON encoding of PMDs, ensembles, free operations and certificates.

Loaders check structure only (shapes, labels, keys); semantic validation is
left to the objects' own ``validate`` so that invalid devices can still be
loaded and reported on.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .devices import DeviceError, Ensemble, FreeOperation, Pmd
from .operators import ChoiMap, OperatorError, matrix_from_json, matrix_to_json


class FormatError(DeviceError):
    """A JSON document does not follow the expected schema."""


def _nested_to_json(ops, outer, inner) -> dict:
    return {o: {i: matrix_to_json(ops[j, k]) for k, i in enumerate(inner)} for j, o in enumerate(outer)}


def _nested_from_json(obj, outer, inner, dim, what) -> np.ndarray:
    out = np.zeros((len(outer), len(inner), dim, dim), dtype=complex)
    try:
        for j, o in enumerate(outer):
            row = obj[o]
            for k, i in enumerate(inner):
                m = matrix_from_json(row[i])
                if m.shape != (dim, dim):
                    raise FormatError(f"{what} ({o}, {i}) has shape {m.shape}, expected {(dim, dim)}")
                out[j, k] = m
    except KeyError as exc:
        raise FormatError(f"{what} missing entry {exc}") from exc
    except OperatorError as exc:
        raise FormatError(str(exc)) from exc
    return out


def _labels(obj, key) -> list[str]:
    labels = obj.get(key)
    if not isinstance(labels, list) or not labels or not all(isinstance(s, str) for s in labels):
        raise FormatError(f"{key!r} must be a non-empty list of strings")
    if len(set(labels)) != len(labels):
        raise FormatError(f"{key!r} contains duplicate labels")
    return labels


def _dim(obj) -> int:
    d = obj.get("dim")
    if not isinstance(d, int) or d < 1:
        raise FormatError("'dim' must be a positive integer")
    return d


def pmd_to_json(pmd: Pmd) -> dict:
    return {
        "dim": pmd.dim,
        "programs": list(pmd.programs),
        "outcomes": list(pmd.outcomes),
        "effects": _nested_to_json(pmd.effects, pmd.programs, pmd.outcomes),
    }


def pmd_from_json(obj: dict) -> Pmd:
    if not isinstance(obj, dict):
        raise FormatError("PMD document must be a JSON object")
    d = _dim(obj)
    programs, outcomes = _labels(obj, "programs"), _labels(obj, "outcomes")
    effects = _nested_from_json(obj.get("effects", {}), programs, outcomes, d, "effect")
    return Pmd(effects, programs, outcomes)


def ensemble_to_json(ens: Ensemble) -> dict:
    return {
        "dim": ens.dim,
        "post_info": list(ens.post_info),
        "answers": list(ens.answers),
        "states": _nested_to_json(ens.states, ens.post_info, ens.answers),
    }


def ensemble_from_json(obj: dict) -> Ensemble:
    if not isinstance(obj, dict):
        raise FormatError("ensemble document must be a JSON object")
    d = _dim(obj)
    post_info, answers = _labels(obj, "post_info"), _labels(obj, "answers")
    states = _nested_from_json(obj.get("states", {}), post_info, answers, d, "state")
    return Ensemble(states, post_info, answers)


def free_operation_to_json(op: FreeOperation) -> dict:
    return {
        "in_dim": op.in_dim,
        "out_dim": op.out_dim,
        "mu": op.mu.tolist(),
        "instruments": [[matrix_to_json(m.choi) for m in fam] for fam in op.instruments],
        "pre": op.pre.tolist(),
        "post": op.post.tolist(),
        "target_programs": list(op.target_programs),
        "target_outcomes": list(op.target_outcomes),
    }


def free_operation_from_json(obj: dict) -> FreeOperation:
    try:
        din, dout = int(obj["in_dim"]), int(obj["out_dim"])
        inst = [[ChoiMap(din, dout, matrix_from_json(c)) for c in fam] for fam in obj["instruments"]]
        return FreeOperation(
            np.asarray(obj["mu"], dtype=float),
            inst,
            np.asarray(obj["pre"], dtype=float),
            np.asarray(obj["post"], dtype=float),
            obj.get("target_programs"),
            obj.get("target_outcomes"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed free operation: {exc}") from exc


def certificate_to_json(cert) -> dict:
    out = {"verdict": cert.verdict, "margins": _plain(cert.margins)}
    out["protocol"] = None if cert.protocol is None else free_operation_to_json(cert.protocol)
    out["witness_game"] = None if cert.witness_game is None else ensemble_to_json(cert.witness_game)
    return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


_KINDS = {
    "pmd": (pmd_to_json, pmd_from_json),
    "ensemble": (ensemble_to_json, ensemble_from_json),
    "free_operation": (free_operation_to_json, free_operation_from_json),
}


def dumps(obj, kind: str) -> str:
    return json.dumps(_KINDS[kind][0](obj), indent=1)


def loads(text: str, kind: str):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    return _KINDS[kind][1](data)


def load(path, kind: str):
    return loads(Path(path).read_text(encoding="utf-8"), kind)


def save(obj, path, kind: str) -> None:
    Path(path).write_text(dumps(obj, kind) + "\n", encoding="utf-8")
