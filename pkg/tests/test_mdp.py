import numpy as np
import pytest

from surveil.mdp import (
    ActionSpace, ClosedLoopChain, DimensionMismatch, JointPmf, Policy, StateSet, StateSpace, TransitionKernel,
    compose_closed_loop, marginal_state_pmf, validate,
)
from helpers import random_world


def test_state_index_layout():
    space = StateSpace(5, 4)
    assert space.size == 80
    assert space.index(1, 1, "R") == 0
    assert space.index(1, 1, "D") == 3
    assert space.index(2, 1, "R") == 4
    assert space.index(1, 2, "R") == 20
    for s in range(space.size):
        assert space.index(*space.coords(s)) == s
    assert space.cell_states(3, 2) == [space.index(3, 2, h) for h in "RULD"]


def test_state_index_rejects_out_of_range():
    space = StateSpace(3, 3)
    with pytest.raises(ValueError):
        space.index(4, 1, "R")
    with pytest.raises(ValueError):
        space.index(1, 1, "X")


def test_stateset_algebra():
    a = StateSet.from_ids(6, [0, 1, 2])
    b = StateSet.from_ids(6, [2, 3])
    assert list((a | b).ids) == [0, 1, 2, 3]
    assert list((a & b).ids) == [2]
    assert list((a - b).ids) == [0, 1]
    assert list(a.complement().ids) == [3, 4, 5]
    assert (a & b).issubset(a)
    assert not a.isdisjoint(b)
    assert 2 in a and 5 not in a
    assert len(StateSet.empty(6)) == 0 and len(StateSet.full(6)) == 6
    with pytest.raises(DimensionMismatch):
        a | StateSet.empty(5)


def _tiny_kernel():
    space, actions = StateSpace(1, 1), ActionSpace(("a", "b"))
    rows = [
        [(1, 1.0)], [(0, 0.5), (2, 0.5)],
        [(2, 1.0)], [(3, 1.0)],
        [(3, 1.0)], [(0, 1.0)],
        [(0, 0.25), (1, 0.75)], [(3, 1.0)],
    ]
    return TransitionKernel.from_rows(space, actions, rows)


def test_kernel_rows_and_matrix():
    k = _tiny_kernel()
    ts, ps = k.row(0, 1)
    assert dict(zip(ts.tolist(), ps.tolist())) == {0: 0.5, 2: 0.5}
    M = k.matrix().toarray()
    assert M.shape == (8, 4)
    np.testing.assert_allclose(M.sum(axis=1), 1.0)
    assert validate(k) == []


def test_validate_reports_defects():
    space, actions = StateSpace(1, 1), ActionSpace(("a",))
    rows = [[(1, 0.6)], [(0, 1.2), (1, -0.2)], [(2, 0.5), (2, 0.5)], [(7, 1.0)]]
    k = TransitionKernel.from_rows(space, actions, rows)
    msgs = " | ".join(str(f) for f in validate(k))
    assert "sums to" in msgs
    assert "negative" in msgs
    assert "duplicate" in msgs
    assert "outside [0, 4)" in msgs


def test_policy_shape_checked():
    space, actions = StateSpace(1, 1), ActionSpace(("a", "b"))
    with pytest.raises(DimensionMismatch):
        Policy(space, actions, np.full((3, 2), 0.5))
    with pytest.raises(DimensionMismatch):
        Policy(space, actions, np.full((4, 3), 1 / 3))


def test_closed_loop_deterministic_matches_kernel_row():
    k = _tiny_kernel()
    pol = Policy.deterministic(k.states, k.actions, [1, 0, 1, 0])
    P = compose_closed_loop(k, pol).dense()
    M = k.matrix().toarray()
    for s, u in enumerate([1, 0, 1, 0]):
        np.testing.assert_array_equal(P[s], M[s * 2 + u])


def test_closed_loop_is_linear_in_policy():
    rng = np.random.default_rng(3)
    k, _ = random_world(rng)
    p1 = rng.dirichlet(np.ones(2), size=k.n_states)
    p2 = rng.dirichlet(np.ones(2), size=k.n_states)
    lam = 0.3
    mix = Policy(k.states, k.actions, lam * p1 + (1 - lam) * p2)
    a = compose_closed_loop(k, Policy(k.states, k.actions, p1)).dense()
    b = compose_closed_loop(k, Policy(k.states, k.actions, p2)).dense()
    np.testing.assert_allclose(compose_closed_loop(k, mix).dense(), lam * a + (1 - lam) * b, atol=1e-15)


def test_closed_loop_rows_are_stochastic():
    rng = np.random.default_rng(4)
    k, _ = random_world(rng)
    chain = compose_closed_loop(k, Policy.uniform(k.states, k.actions))
    assert validate(chain) == []
    np.testing.assert_allclose(chain.dense().sum(axis=1), 1.0)


def test_chain_from_rows_roundtrip():
    space = StateSpace(1, 1)
    chain = ClosedLoopChain.from_rows(space, [[(1, 1.0)], [(0, 0.5), (1, 0.5)], [(2, 1.0)], [(3, 1.0)]])
    assert chain.dense()[1, 0] == 0.5


def test_marginal_state_pmf():
    space, actions = StateSpace(1, 1), ActionSpace(("a", "b"))
    vals = np.array([[0.1, 0.2], [0.3, 0.0], [0.0, 0.0], [0.25, 0.15]])
    np.testing.assert_allclose(marginal_state_pmf(JointPmf(space, actions, vals)), [0.3, 0.3, 0.0, 0.4])


def test_marginal_rejects_invalid_pmf():
    space, actions = StateSpace(1, 1), ActionSpace(("a", "b"))
    with pytest.raises(ValueError):
        marginal_state_pmf(JointPmf(space, actions, np.full((4, 2), 0.2)))
