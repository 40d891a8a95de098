"""JSON files for kernels, policies and pmfs.

Every document carries a header::

    {"schema_version": 1, "kind": "...", "nx": 5, "ny": 5,
     "orientations": ["R", "U", "L", "D"], "actions": ["forward", "turn_right"]}

Kernels add ``"entries": [[s, u, s_next, p], ...]``; policies add
``"probs"`` and pmfs ``"values"``, both dense ``[state][action]`` arrays.
Floats are written with Python's shortest round-trip repr, so a
write/read cycle is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .mdp import ActionSpace, DimensionMismatch, JointPmf, Policy, StateSpace, TransitionKernel

SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


def header(kind: str, states: StateSpace, actions: ActionSpace) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "nx": states.nx,
        "ny": states.ny,
        "orientations": list(states.orientations),
        "actions": list(actions.labels),
    }


def dumps(doc: Mapping[str, Any]) -> str:
    """Canonical text: sorted keys, no NaN, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path: str | Path, doc: Mapping[str, Any]) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def kernel_to_json(kernel: TransitionKernel) -> dict:
    doc = header("kernel", kernel.states, kernel.actions)
    doc["entries"] = [[s, u, t, p] for s, u, t, p in kernel.triplets()]
    return doc


def policy_to_json(policy: Policy) -> dict:
    doc = header("policy", policy.states, policy.actions)
    doc["probs"] = policy.probs.tolist()
    return doc


def pmf_to_json(f: JointPmf) -> dict:
    doc = header("joint_pmf", f.states, f.actions)
    doc["values"] = f.values.tolist()
    return doc


def _spaces(doc: Mapping, kind: str) -> tuple[StateSpace, ActionSpace]:
    if not isinstance(doc, Mapping):
        raise FormatError("document must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") != kind:
        raise FormatError(f"expected kind {kind!r}, got {doc.get('kind')!r}")
    try:
        states = StateSpace(int(doc["nx"]), int(doc["ny"]), tuple(doc["orientations"]))
        actions = ActionSpace(tuple(doc["actions"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad header: {exc}") from exc
    return states, actions


def _dense(doc: Mapping, key: str) -> np.ndarray:
    try:
        a = np.asarray(doc[key], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad {key!r}: {exc}") from exc
    if a.ndim != 2:
        raise FormatError(f"{key!r} must be a 2-d array")
    return a


def kernel_from_json(doc: Mapping) -> TransitionKernel:
    states, actions = _spaces(doc, "kernel")
    rows: list[list[tuple[int, float]]] = [[] for _ in range(states.size * actions.size)]
    for i, e in enumerate(doc.get("entries", ())):
        try:
            s, u, t, p = int(e[0]), int(e[1]), int(e[2]), float(e[3])
        except (IndexError, TypeError, ValueError) as exc:
            raise FormatError(f"entries[{i}]: {exc}") from exc
        if not (0 <= s < states.size and 0 <= u < actions.size):
            raise FormatError(f"entries[{i}]: (state, action) out of range")
        rows[s * actions.size + u].append((t, p))
    return TransitionKernel.from_rows(states, actions, rows)


def policy_from_json(doc: Mapping) -> Policy:
    states, actions = _spaces(doc, "policy")
    return Policy(states, actions, _dense(doc, "probs"))


def pmf_from_json(doc: Mapping) -> JointPmf:
    states, actions = _spaces(doc, "joint_pmf")
    return JointPmf(states, actions, _dense(doc, "values"))


def read_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def check_space(states: StateSpace, expected: StateSpace) -> None:
    if states.size != expected.size:
        raise DimensionMismatch("state", states.size, expected.size)
