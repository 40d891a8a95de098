import json

import numpy as np
import pytest

from surveil.serialize import (
    FormatError, dumps, kernel_from_json, kernel_to_json, pmf_from_json, pmf_to_json, policy_from_json,
    policy_to_json, read_json,
)
from helpers import solved


def cycle(doc):
    return json.loads(dumps(doc))


def test_kernel_roundtrip_is_exact():
    k = solved("ex3").kernel
    assert kernel_from_json(cycle(kernel_to_json(k))) == k


def test_policy_and_pmf_roundtrip_bitwise():
    s = solved("ex3")
    pol = policy_from_json(cycle(policy_to_json(s.policy)))
    f = pmf_from_json(cycle(pmf_to_json(s.f)))
    assert np.array_equal(pol.probs, s.policy.probs)
    assert np.array_equal(f.values, s.f.values)
    assert pol == s.policy and f == s.f


def test_header_fields():
    doc = policy_to_json(solved("ex1").policy)
    assert doc["schema_version"] == 1 and doc["kind"] == "policy"
    assert (doc["nx"], doc["ny"]) == (5, 5)
    assert doc["orientations"] == ["R", "U", "L", "D"]
    assert doc["actions"] == ["forward", "turn_right"]


def test_dumps_is_canonical():
    doc = pmf_to_json(solved("ex1").f)
    assert dumps(doc) == dumps(cycle(doc))
    assert dumps(doc).endswith("\n")


def test_wrong_kind_and_version_rejected():
    doc = policy_to_json(solved("ex1").policy)
    with pytest.raises(FormatError, match="kind"):
        pmf_from_json(doc)
    with pytest.raises(FormatError, match="schema_version"):
        policy_from_json({**doc, "schema_version": 99})
    with pytest.raises(FormatError, match="header"):
        policy_from_json({k: v for k, v in doc.items() if k != "nx"})


def test_bad_kernel_entry_rejected():
    doc = kernel_to_json(solved("ex1").kernel)
    doc["entries"].append([10_000, 0, 0, 0.5])
    with pytest.raises(FormatError, match="out of range"):
        kernel_from_json(doc)


def test_read_json_reports_position(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"a": 1,\n "b": }')
    with pytest.raises(FormatError, match="line 2 column"):
        read_json(p)
