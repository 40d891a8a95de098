"""Finite state/action spaces, sparse kernels, policies and pmfs.

States of the lattice robot are triples ``(x, y, theta)`` with
``x in 1..nx``, ``y in 1..ny`` (row 1 on top, ``y`` grows downward) and
``theta`` one of the headings ``R, U, L, D``.  Ids are row-major::

    id = ((y - 1) * nx + (x - 1)) * 4 + heading_index

Kernel rows are indexed by ``s * n_actions + u``.  All arrays held by the
types below are flagged read-only after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

ORIENTATIONS = ("R", "U", "L", "D")
DEFAULT_ACTIONS = ("forward", "turn_right")

ROW_TOL = 1e-12
PMF_TOL = 1e-9


class DimensionMismatch(ValueError):
    """Two objects disagree on the size of one axis."""

    def __init__(self, axis: str, left: int, right: int):
        super().__init__(f"dimension mismatch on {axis} axis: {left} != {right}")
        self.axis = axis
        self.left = left
        self.right = right


def _frozen(a, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpace:
    nx: int
    ny: int
    orientations: tuple[str, ...] = ORIENTATIONS

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"lattice must be at least 1x1, got {self.nx}x{self.ny}")
        if len(self.orientations) != 4 or len(set(self.orientations)) != 4:
            raise ValueError("exactly four distinct orientation labels are required")

    @property
    def size(self) -> int:
        return self.nx * self.ny * 4

    def __len__(self) -> int:
        return self.size

    def index(self, x: int, y: int, theta: str | int) -> int:
        if not (1 <= x <= self.nx and 1 <= y <= self.ny):
            raise ValueError(f"cell ({x}, {y}) outside {self.nx}x{self.ny} lattice")
        h = theta if isinstance(theta, (int, np.integer)) else self.orientations.index(theta)
        if not 0 <= h < 4:
            raise ValueError(f"heading index {h} out of range")
        return ((y - 1) * self.nx + (x - 1)) * 4 + int(h)

    def coords(self, s: int) -> tuple[int, int, str]:
        if not 0 <= s < self.size:
            raise ValueError(f"state id {s} out of range [0, {self.size})")
        cell, h = divmod(int(s), 4)
        y, x = divmod(cell, self.nx)
        return x + 1, y + 1, self.orientations[h]

    def cell_states(self, x: int, y: int) -> list[int]:
        return [self.index(x, y, h) for h in range(4)]


@dataclass(frozen=True)
class ActionSpace:
    labels: tuple[str, ...] = DEFAULT_ACTIONS

    def __post_init__(self):
        if not self.labels:
            raise ValueError("action space must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"action labels must be unique: {self.labels}")

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


class StateSet:
    """Immutable subset of a state space, stored as a boolean mask."""

    __slots__ = ("_mask",)

    def __init__(self, mask):
        self._mask = _frozen(mask, dtype=bool)
        if self._mask.ndim != 1:
            raise ValueError("state set mask must be one-dimensional")

    @classmethod
    def from_ids(cls, n: int, ids: Iterable[int]) -> "StateSet":
        mask = np.zeros(n, dtype=bool)
        ids = np.fromiter((int(i) for i in ids), dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise ValueError(f"state ids outside [0, {n})")
        mask[ids] = True
        return cls(mask)

    @classmethod
    def empty(cls, n: int) -> "StateSet":
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def full(cls, n: int) -> "StateSet":
        return cls(np.ones(n, dtype=bool))

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def universe(self) -> int:
        return self._mask.size

    @property
    def ids(self) -> np.ndarray:
        return np.flatnonzero(self._mask)

    def __len__(self) -> int:
        return int(self._mask.sum())

    def __iter__(self) -> Iterator[int]:
        return iter(int(i) for i in np.flatnonzero(self._mask))

    def __contains__(self, s) -> bool:
        return 0 <= s < self._mask.size and bool(self._mask[s])

    def _check(self, other: "StateSet"):
        if other.universe != self.universe:
            raise DimensionMismatch("state", self.universe, other.universe)

    def __or__(self, other: "StateSet") -> "StateSet":
        self._check(other)
        return StateSet(self._mask | other._mask)

    def __and__(self, other: "StateSet") -> "StateSet":
        self._check(other)
        return StateSet(self._mask & other._mask)

    def __sub__(self, other: "StateSet") -> "StateSet":
        self._check(other)
        return StateSet(self._mask & ~other._mask)

    def complement(self) -> "StateSet":
        return StateSet(~self._mask)

    def issubset(self, other: "StateSet") -> bool:
        self._check(other)
        return not np.any(self._mask & ~other._mask)

    def isdisjoint(self, other: "StateSet") -> bool:
        self._check(other)
        return not np.any(self._mask & other._mask)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateSet):
            return NotImplemented
        return self.universe == other.universe and bool(np.array_equal(self._mask, other._mask))

    def __hash__(self) -> int:
        return hash((self.universe, self._mask.tobytes()))

    def __repr__(self) -> str:
        ids = self.ids
        shown = ", ".join(map(str, ids[:8])) + (", ..." if ids.size > 8 else "")
        return f"StateSet(n={self.universe}, size={ids.size}, {{{shown}}})"


class TransitionKernel:
    """Sparse conditional pmf ``Q(s+ | s, u)``.

    Row ``s * n_actions + u`` holds the successors of ``(s, u)`` in CSR form.
    Construction only checks shapes; use :func:`validate` for the
    probabilistic invariants.
    """

    def __init__(self, states: StateSpace, actions: ActionSpace, indptr, successors, probs):
        self.states = states
        self.actions = actions
        self.indptr = _frozen(indptr, dtype=np.int64)
        self.successors = _frozen(successors, dtype=np.int64)
        self.probs = _frozen(probs, dtype=np.float64)
        n_rows = states.size * actions.size
        if self.indptr.shape != (n_rows + 1,):
            raise DimensionMismatch("row", self.indptr.size - 1, n_rows)
        if self.successors.shape != self.probs.shape or self.indptr[-1] != self.successors.size:
            raise ValueError("successor and probability arrays disagree with indptr")

    @classmethod
    def from_rows(cls, states: StateSpace, actions: ActionSpace, rows: Sequence[Sequence[tuple[int, float]]]):
        """Build from one ``[(s+, p), ...]`` list per ``(s, u)`` row."""
        indptr = [0]
        succ: list[int] = []
        probs: list[float] = []
        for row in rows:
            for t, p in row:
                succ.append(int(t))
                probs.append(float(p))
            indptr.append(len(succ))
        return cls(states, actions, indptr, succ, probs)

    @property
    def n_states(self) -> int:
        return self.states.size

    @property
    def n_actions(self) -> int:
        return self.actions.size

    def row(self, s: int, u: int) -> tuple[np.ndarray, np.ndarray]:
        r = s * self.n_actions + u
        lo, hi = self.indptr[r], self.indptr[r + 1]
        return self.successors[lo:hi], self.probs[lo:hi]

    def matrix(self) -> sp.csr_matrix:
        """``(|S||U|, |S|)`` sparse matrix with entry ``Q(s+ | s, u)``."""
        return sp.csr_matrix(
            (self.probs, self.successors, self.indptr),
            shape=(self.n_states * self.n_actions, self.n_states),
        )

    def triplets(self) -> Iterator[tuple[int, int, int, float]]:
        nu = self.n_actions
        for r in range(self.n_states * nu):
            s, u = divmod(r, nu)
            for k in range(self.indptr[r], self.indptr[r + 1]):
                yield s, u, int(self.successors[k]), float(self.probs[k])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionKernel):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.successors, other.successors)
            and np.array_equal(self.probs, other.probs)
        )

    def __repr__(self) -> str:
        return (
            f"TransitionKernel({self.states.nx}x{self.states.ny}, "
            f"actions={self.actions.labels}, nnz={self.successors.size})"
        )


@dataclass(frozen=True, eq=False)
class Policy:
    """Memoryless randomized policy; ``probs[s, u] = K(u | s)``."""

    states: StateSpace
    actions: ActionSpace
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs, dtype=np.float64))
        expected = (self.states.size, self.actions.size)
        if self.probs.shape != expected:
            axis = "state" if self.probs.shape[:1] != expected[:1] else "action"
            got = self.probs.shape[0] if axis == "state" else self.probs.shape[-1]
            raise DimensionMismatch(axis, got, expected[0] if axis == "state" else expected[1])

    @classmethod
    def uniform(cls, states: StateSpace, actions: ActionSpace) -> "Policy":
        return cls(states, actions, np.full((states.size, actions.size), 1.0 / actions.size))

    @classmethod
    def deterministic(cls, states: StateSpace, actions: ActionSpace, choice) -> "Policy":
        choice = np.broadcast_to(np.asarray(choice, dtype=np.int64), (states.size,))
        probs = np.zeros((states.size, actions.size))
        probs[np.arange(states.size), choice] = 1.0
        return cls(states, actions, probs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Policy):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and np.array_equal(self.probs, other.probs)
        )


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Pmf on ``S x U`` stored densely as ``values[s, u]``."""

    states: StateSpace
    actions: ActionSpace
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, dtype=np.float64))
        expected = (self.states.size, self.actions.size)
        if self.values.shape != expected:
            axis = "state" if self.values.shape[:1] != expected[:1] else "action"
            raise DimensionMismatch(axis, self.values.shape[0 if axis == "state" else -1],
                                    expected[0 if axis == "state" else 1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, JointPmf):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and np.array_equal(self.values, other.values)
        )


class ClosedLoopChain:
    """State-to-state Markov chain ``Q_K(s+ | s)`` in CSR form."""

    def __init__(self, states: StateSpace, indptr, successors, probs):
        self.states = states
        self.indptr = _frozen(indptr, dtype=np.int64)
        self.successors = _frozen(successors, dtype=np.int64)
        self.probs = _frozen(probs, dtype=np.float64)
        if self.indptr.shape != (states.size + 1,):
            raise DimensionMismatch("state", self.indptr.size - 1, states.size)

    @classmethod
    def from_rows(cls, states: StateSpace, rows: Sequence[Sequence[tuple[int, float]]]):
        indptr = [0]
        succ, probs = [], []
        for row in rows:
            for t, p in row:
                succ.append(int(t))
                probs.append(float(p))
            indptr.append(len(succ))
        return cls(states, indptr, succ, probs)

    @property
    def n_states(self) -> int:
        return self.states.size

    def row(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[s], self.indptr[s + 1]
        return self.successors[lo:hi], self.probs[lo:hi]

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.probs, self.successors, self.indptr), shape=(self.n_states, self.n_states)
        )

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()


def compose_closed_loop(kernel: TransitionKernel, policy: Policy) -> ClosedLoopChain:
    """Average the kernel rows over the policy: ``Q_K(s+|s) = sum_u Q(s+|s,u) K(u|s)``.

    Successors with zero closed-loop probability are dropped; the remaining
    successors of each state are listed in increasing id order.
    """
    if kernel.states != policy.states:
        raise DimensionMismatch("state", kernel.n_states, policy.states.size)
    if kernel.actions != policy.actions:
        raise DimensionMismatch("action", kernel.n_actions, policy.actions.size)

    n, nu = kernel.n_states, kernel.n_actions
    weights = policy.probs.ravel()
    rows = np.repeat(np.arange(n * nu) // nu, np.diff(kernel.indptr))
    vals = np.repeat(weights, np.diff(kernel.indptr)) * kernel.probs
    keep = vals > 0.0
    m = sp.coo_matrix((vals[keep], (rows[keep], kernel.successors[keep])), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return ClosedLoopChain(kernel.states, m.indptr, m.indices, m.data)


def marginal_state_pmf(f: JointPmf) -> np.ndarray:
    """``f_S(s) = sum_u f(s, u)``."""
    problems = validate(f)
    if problems:
        raise ValueError("invalid joint pmf: " + "; ".join(map(str, problems[:5])))
    out = f.values.sum(axis=1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Finding:
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


def _check_rows(indptr, probs, successors, n, label, tol, findings):
    bad = (successors < 0) | (successors >= n)
    for k in np.flatnonzero(bad):
        findings.append(Finding(f"successor slot {k}", f"state id {successors[k]} outside [0, {n})"))
    for r in range(indptr.size - 1):
        lo, hi = indptr[r], indptr[r + 1]
        ps = probs[lo:hi]
        for k in np.flatnonzero(~(ps >= 0.0)):
            findings.append(Finding(f"{label(r)} entry {int(successors[lo + k])}",
                                    f"negative or non-finite probability {float(ps[k])!r}"))
        total = float(ps.sum())
        if not abs(total - 1.0) <= tol:
            findings.append(Finding(label(r), f"sums to {total!r} (deficit {1.0 - total:+.3e})"))
        ts = successors[lo:hi]
        if np.unique(ts).size != ts.size:
            findings.append(Finding(label(r), "duplicate successor"))


def validate(obj, tol: float | None = None) -> list[Finding]:
    """Return every violated invariant of a kernel, chain, policy or joint pmf.

    Never raises for malformed content; an empty list means valid.
    """
    findings: list[Finding] = []
    if isinstance(obj, TransitionKernel):
        tol = ROW_TOL if tol is None else tol
        nu = obj.n_actions

        def label(r):
            s, u = divmod(r, nu)
            return f"row (s={s}, u={obj.actions.labels[u]})"

        _check_rows(obj.indptr, obj.probs, obj.successors, obj.n_states, label, tol, findings)
    elif isinstance(obj, ClosedLoopChain):
        tol = ROW_TOL if tol is None else tol
        _check_rows(obj.indptr, obj.probs, obj.successors, obj.n_states, lambda r: f"row s={r}", tol, findings)
    elif isinstance(obj, Policy):
        tol = ROW_TOL if tol is None else tol
        for s, u in zip(*np.nonzero(~((obj.probs >= 0.0) & (obj.probs <= 1.0)))):
            findings.append(Finding(f"policy (s={s}, u={obj.actions.labels[u]})",
                                    f"entry {obj.probs[s, u]!r} outside [0, 1]"))
        sums = obj.probs.sum(axis=1)
        for s in np.flatnonzero(~(np.abs(sums - 1.0) <= tol)):
            findings.append(Finding(f"policy row s={s}", f"sums to {sums[s]!r} (deficit {1.0 - sums[s]:+.3e})"))
    elif isinstance(obj, JointPmf):
        tol = PMF_TOL if tol is None else tol
        for s, u in zip(*np.nonzero(~(obj.values >= 0.0))):
            findings.append(Finding(f"pmf (s={s}, u={obj.actions.labels[u]})",
                                    f"negative or non-finite entry {obj.values[s, u]!r}"))
        total = float(obj.values.sum())
        if not abs(total - 1.0) <= tol:
            findings.append(Finding("pmf", f"total mass {total!r} (deficit {1.0 - total:+.3e})"))
    else:
        findings.append(Finding(type(obj).__name__, "not a kernel, chain, policy or joint pmf"))
    return findings
