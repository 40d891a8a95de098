import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from surveil.mdp import ClosedLoopChain, Policy, StateSet, StateSpace, compose_closed_loop
from surveil.maxent import stationarity_matrix
from surveil.oracle import (
    closed_classes, maximal_safe_recurrent_set, prune_safe_invariant, recurrent_actions,
    strongly_connected_components,
)
from helpers import random_safe_policy, random_world, world


def _partition(comps):
    return {frozenset(c) for c in comps}


@pytest.mark.parametrize("seed", range(25))
def test_tarjan_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    density = rng.uniform(0.01, 0.15)
    A = (rng.random((n, n)) < density).astype(int)
    adj = [np.flatnonzero(A[v]).tolist() for v in range(n)]
    ours = _partition(strongly_connected_components(n, adj))
    k, labels = connected_components(sp.csr_matrix(A), directed=True, connection="strong")
    ref = _partition(np.flatnonzero(labels == i).tolist() for i in range(k))
    assert ours == ref


def test_tarjan_deep_path_does_not_recurse():
    n = 50_000
    adj = [[v + 1] for v in range(n - 1)] + [[0]]
    comps = strongly_connected_components(n, adj)
    assert len(comps) == 1 and len(comps[0]) == n


def test_example1_oracle():
    _, k, F, _ = world("ex1")
    S, part = maximal_safe_recurrent_set(k, F)
    assert len(S) == 40
    assert part.n_classes == 1
    assert S.isdisjoint(F)


def test_example2_oracle():
    spec, k, F, _ = world("ex2")
    S, part = maximal_safe_recurrent_set(k, F)
    assert len(S) == 34
    assert sorted(len(c) for c in part.classes) == [8, 8, 18]
    sp_ = spec.states
    idx = [part.class_containing(sp_.index(x, y, "U")) for x, y in ((1, 2), (2, 1), (2, 4))]
    assert None not in idx and len(set(idx)) == 3


def test_prune_empty_when_everything_forbidden():
    _, k, _, _ = world("ex1")
    allowed = prune_safe_invariant(k, StateSet.full(k.n_states))
    assert not allowed.mask.any()
    S, part = maximal_safe_recurrent_set(k, StateSet.full(k.n_states))
    assert len(S) == 0 and part.n_classes == 0


@pytest.mark.parametrize("seed", range(20))
def test_pruning_is_monotone_in_forbidden_set(seed):
    rng = np.random.default_rng(100 + seed)
    k, F = random_world(rng)
    extra = StateSet.from_ids(k.n_states, rng.choice(k.n_states, size=4, replace=False))
    a_small = prune_safe_invariant(k, F).mask
    a_big = prune_safe_invariant(k, F | extra).mask
    assert not np.any(a_big & ~a_small)
    S_small, _ = maximal_safe_recurrent_set(k, F)
    S_big, _ = maximal_safe_recurrent_set(k, F | extra)
    assert S_big.issubset(S_small)


def _lp_recurrent_set(k, F) -> StateSet:
    """States carrying positive mass in some forbidden-avoiding stationary pmf."""
    active = np.ones((k.n_states, k.n_actions), dtype=bool)
    active[F.mask] = False
    A = stationarity_matrix(k, active)
    m = A.shape[1]
    A_eq = sp.vstack([A, sp.csr_matrix(np.ones((1, m)))]).tocsr()
    b_eq = np.r_[np.zeros(k.n_states), 1.0]
    col_state = np.flatnonzero(active.ravel()) // k.n_actions
    out = np.zeros(k.n_states, dtype=bool)
    for s in np.flatnonzero(~F.mask):
        c = -(col_state == s).astype(float)
        if not c.any():
            continue
        res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:  # no safe stationary pmf at all
            return StateSet(out)
        out[s] = -res.fun > 1e-9
    return StateSet(out)


@pytest.mark.parametrize("seed", range(30))
def test_oracle_matches_lp_characterization(seed):
    rng = np.random.default_rng(200 + seed)
    k, F = random_world(rng)
    S, _ = maximal_safe_recurrent_set(k, F)
    assert S == _lp_recurrent_set(k, F)


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_oracle_matches_lp_on_examples(name):
    _, k, F, _ = world(name)
    S, _ = maximal_safe_recurrent_set(k, F)
    assert S == _lp_recurrent_set(k, F)


@pytest.mark.parametrize("seed", range(10))
def test_no_safe_policy_beats_the_oracle(seed):
    rng = np.random.default_rng(300 + seed)
    k, F = random_world(rng)
    allowed, _ = recurrent_actions(k, F)
    S, _ = maximal_safe_recurrent_set(k, F)
    pruned = prune_safe_invariant(k, F).mask
    for _ in range(20):
        pol = Policy(k.states, k.actions, random_safe_policy(rng, pruned))
        part = closed_classes(compose_closed_loop(k, pol))
        for c in part.classes:
            if c.isdisjoint(F):
                assert c.issubset(S)


def test_oracle_actions_keep_classes_closed():
    _, k, F, _ = world("ex2")
    allowed, part = recurrent_actions(k, F)
    cls = part.class_of
    for s in part.union.ids:
        for u in allowed.actions_at(s):
            ts, ps = k.row(s, u)
            assert np.all(cls[ts[ps > 0]] == cls[s])


def test_closed_classes_on_hand_chain():
    # 0 -> 1 <-> 2 closed, 3 loops on itself
    space = StateSpace(1, 1, ("a", "b", "c", "d"))
    rows = [[(1, 1.0)], [(2, 1.0)], [(1, 1.0)], [(3, 1.0)]]
    part = closed_classes(ClosedLoopChain.from_rows(space, rows))
    assert [list(c.ids) for c in part.classes] == [[1, 2], [3]]
    assert list(part.transient.ids) == [0]
    # restricting away state 2 leaves {1} with an edge leaving the restriction: not closed
    part = closed_classes(ClosedLoopChain.from_rows(space, rows), StateSet.from_ids(4, [0, 1, 3]))
    assert [list(c.ids) for c in part.classes] == [[3]]
