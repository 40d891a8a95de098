"""Combinatorial ground truth for the safe recurrent set.

Nothing here is numerical: edges exist iff a probability is exactly
positive, and all sets are computed by graph fixed points.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import ClosedLoopChain, DimensionMismatch, StateSet, TransitionKernel


@dataclass(frozen=True, eq=False)
class AllowedActions:
    """``mask[s, u]`` is True iff action ``u`` is admissible at ``s``."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def states(self) -> StateSet:
        return StateSet(self.mask.any(axis=1))

    def actions_at(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.mask[s])

    def __eq__(self, other) -> bool:
        if not isinstance(other, AllowedActions):
            return NotImplemented
        return np.array_equal(self.mask, other.mask)


@dataclass(frozen=True)
class RecurrentPartition:
    """Closed classes (smallest member first) plus the transient remainder."""

    classes: tuple[StateSet, ...]
    transient: StateSet

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def union(self) -> StateSet:
        mask = np.zeros(self.transient.universe, dtype=bool)
        for c in self.classes:
            mask |= c.mask
        return StateSet(mask)

    @property
    def class_of(self) -> np.ndarray:
        """Class index per state, ``-1`` outside every class."""
        out = np.full(self.transient.universe, -1, dtype=np.int64)
        for i, c in enumerate(self.classes):
            out[c.mask] = i
        return out

    def class_containing(self, s: int) -> int | None:
        for i, c in enumerate(self.classes):
            if s in c:
                return i
        return None


def strongly_connected_components(n: int, adj: Sequence[Sequence[int]]) -> list[list[int]]:
    """Iterative Tarjan; components come out in reverse topological order.

    ``adj[v]`` lists the successors of vertex ``v``.
    """
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, i = work[-1]
            nbrs = adj[v]
            if i < len(nbrs):
                work[-1] = (v, i + 1)
                w = nbrs[i]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[v] < low[parent]:
                    low[parent] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def _sorted_partition(n: int, classes: list[list[int]], analyzed: np.ndarray) -> RecurrentPartition:
    classes = sorted((sorted(c) for c in classes), key=lambda c: c[0])
    sets = tuple(StateSet.from_ids(n, c) for c in classes)
    mask = analyzed.copy()
    for c in sets:
        mask &= ~c.mask
    return RecurrentPartition(sets, StateSet(mask))


def prune_safe_invariant(kernel: TransitionKernel, forbidden: StateSet) -> AllowedActions:
    """Greatest safe-invariant action structure avoiding ``forbidden``.

    Repeatedly removes an action whose successors may reach a forbidden or
    already-removed state, and removes a state once it has no action left.
    Runs as backward propagation over predecessor lists in O(edges).
    """
    n, nu = kernel.n_states, kernel.n_actions
    if forbidden.universe != n:
        raise DimensionMismatch("state", forbidden.universe, n)
    allowed = np.ones((n, nu), dtype=bool)
    allowed[forbidden.mask] = False
    n_allowed = allowed.sum(axis=1)

    # predecessor rows of each state, only through positive-probability edges
    rows = np.repeat(np.arange(n * nu), np.diff(kernel.indptr))
    keep = kernel.probs > 0.0
    order = np.argsort(kernel.successors[keep], kind="stable")
    pred_rows = rows[keep][order]
    pred_ptr = np.searchsorted(kernel.successors[keep][order], np.arange(n + 1))

    removed = forbidden.mask.copy()
    queue = deque(int(s) for s in np.flatnonzero(removed))
    while queue:
        t = queue.popleft()
        for r in pred_rows[pred_ptr[t]:pred_ptr[t + 1]].tolist():
            s, u = divmod(r, nu)
            if allowed[s, u]:
                allowed[s, u] = False
                n_allowed[s] -= 1
                if n_allowed[s] == 0 and not removed[s]:
                    removed[s] = True
                    queue.append(s)
    return AllowedActions(allowed)


def _edges(kernel: TransitionKernel, allowed: np.ndarray) -> list[list[int]]:
    n, nu = kernel.n_states, kernel.n_actions
    adj: list[list[int]] = []
    for s in range(n):
        succ: set[int] = set()
        for u in np.flatnonzero(allowed[s]).tolist():
            ts, ps = kernel.row(s, u)
            succ.update(ts[ps > 0.0].tolist())
        adj.append(sorted(succ))
    return adj


def recurrent_actions(kernel: TransitionKernel, forbidden: StateSet) -> tuple[AllowedActions, RecurrentPartition]:
    """Actions that keep the robot safe and recurrent, and the induced classes.

    Starting from :func:`prune_safe_invariant`, alternately split the
    permissive graph into strongly connected components and drop any action
    that can leave its component, until nothing changes.  The surviving
    components are closed and strongly connected under the surviving
    actions (end components of the safe sub-model).
    """
    n, nu = kernel.n_states, kernel.n_actions
    allowed = prune_safe_invariant(kernel, forbidden).mask.copy()
    while True:
        adj = _edges(kernel, allowed)
        live = allowed.any(axis=1)
        comp_id = np.full(n, -1, dtype=np.int64)
        comps = [c for c in strongly_connected_components(n, adj) if live[c[0]]]
        for i, c in enumerate(comps):
            comp_id[c] = i
        changed = False
        for s in np.flatnonzero(live).tolist():
            for u in np.flatnonzero(allowed[s]).tolist():
                ts, ps = kernel.row(s, u)
                ts = ts[ps > 0.0]
                if np.any(comp_id[ts] != comp_id[s]):
                    allowed[s, u] = False
                    changed = True
        if not changed:
            break
        # states that lost every action poison their predecessors again
        dead = StateSet(~allowed.any(axis=1))
        allowed &= prune_safe_invariant(kernel, dead | forbidden).mask
    partition = _sorted_partition(n, comps, np.ones(n, dtype=bool))
    return AllowedActions(allowed), partition


def maximal_safe_recurrent_set(kernel: TransitionKernel, forbidden: StateSet) -> tuple[StateSet, RecurrentPartition]:
    """The maximal set of forbidden-avoiding recurrent states and its classes."""
    _, partition = recurrent_actions(kernel, forbidden)
    return partition.union, partition


def closed_classes(chain: ClosedLoopChain, restrict: StateSet | None = None) -> RecurrentPartition:
    """Recurrent classes of ``chain`` among the states of ``restrict``.

    A strongly connected component of the restricted graph is a class iff
    no edge of the full chain leaves it.  Other states of ``restrict`` are
    reported transient.
    """
    n = chain.n_states
    if restrict is None:
        restrict = StateSet.full(n)
    if restrict.universe != n:
        raise DimensionMismatch("state", restrict.universe, n)
    inside = restrict.mask
    full_adj: list[list[int]] = []
    adj: list[list[int]] = []
    for s in range(n):
        ts, ps = chain.row(s)
        ts = ts[ps > 0.0].tolist()
        full_adj.append(ts)
        adj.append([t for t in ts if inside[t]] if inside[s] else [])
    comp_id = np.full(n, -1, dtype=np.int64)
    comps = [c for c in strongly_connected_components(n, adj) if inside[c[0]]]
    for i, c in enumerate(comps):
        comp_id[c] = i
    closed = [
        c for i, c in enumerate(comps)
        if all(comp_id[t] == i for s in c for t in full_adj[s])
    ]
    return _sorted_partition(n, closed, inside)
