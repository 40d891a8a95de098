"""Seeded Monte Carlo rollouts of a closed-loop chain.

Random numbers come from NumPy's Philox counter-based generator keyed by
``SeedSequence(seed, spawn_key=(stream,))``; the stream index separates
robots of a fleet (stream = robot index) and repeated trials.  Successors
are drawn by inverse CDF over each row's stored order, so a trajectory is
fully determined by ``(chain, s0, steps, seed, stream)``.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .deploy import DeploymentPlan
from .mdp import ClosedLoopChain, StateSet

CHUNK = 1 << 16


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass(frozen=True, eq=False)
class Trajectory:
    initial: int
    steps: int
    visits: np.ndarray  # visits[s] counts S_1..S_k equal to s
    forbidden_visits: int
    seed: int
    stream: int = 0

    def __post_init__(self):
        self.visits.setflags(write=False)

    @property
    def visited(self) -> StateSet:
        return StateSet(self.visits > 0)


def _tables(chain: ClosedLoopChain):
    succ, cdfs = [], []
    for s in range(chain.n_states):
        ts, ps = chain.row(s)
        keep = ps > 0.0
        ts, ps = ts[keep].tolist(), ps[keep]
        c = np.cumsum(ps).tolist()
        if c:
            c[-1] = 2.0  # absorb rounding in the row sum
        succ.append(ts)
        cdfs.append(c)
    return succ, cdfs


def rollout(
    chain: ClosedLoopChain,
    s0: int,
    steps: int,
    seed: int,
    stream: int = 0,
    forbidden: StateSet | None = None,
) -> Trajectory:
    """Simulate ``steps`` transitions from ``s0`` and count the visits."""
    n = chain.n_states
    if not 0 <= s0 < n:
        raise ValueError(f"initial state {s0} outside [0, {n})")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    succ, cdfs = _tables(chain)
    rng = make_rng(seed, stream)
    counts = [0] * n
    s = int(s0)
    left = steps
    while left:
        m = min(CHUNK, left)
        left -= m
        for r in rng.random(m).tolist():
            row = succ[s]
            if len(row) == 1:
                s = row[0]
            elif row:
                s = row[bisect_right(cdfs[s], r)]
            else:
                raise ValueError(f"closed-loop row of state {s} is empty")
            counts[s] += 1
    visits = np.array(counts, dtype=np.int64)
    bad = int(visits[forbidden.mask].sum()) if forbidden is not None else 0
    return Trajectory(int(s0), steps, visits, bad, seed, stream)


@dataclass(frozen=True, eq=False)
class OccupancyStats:
    frequency: np.ndarray
    reference: np.ndarray  # reference pmf, renormalized on the class if one is given
    conditional: np.ndarray  # empirical frequency renormalized on the class
    empirical_class_mass: float
    reference_class_mass: float
    l1: float
    max_abs: float


def occupancy(traj: Trajectory, reference, cls: StateSet | None = None) -> OccupancyStats:
    """Compare visit frequencies with a reference state pmf.

    Without ``cls`` the comparison is direct.  With ``cls`` both sides are
    restricted to the class and divided by their mass on it, which is the
    right limit for a robot that started inside that class.
    """
    reference = np.asarray(reference, dtype=float)
    freq = traj.visits / traj.steps
    if cls is None:
        mask = np.ones(freq.size, dtype=bool)
    else:
        mask = cls.mask
    beta = float(reference[mask].sum())
    beta_hat = float(freq[mask].sum())
    if beta <= 0.0:
        raise ValueError("class carries no reference mass")
    if beta_hat <= 0.0:
        raise ValueError("trajectory never visited the class")
    ref = np.where(mask, reference, 0.0) / beta
    cond = np.where(mask, freq, 0.0) / beta_hat
    diff = np.abs(cond - ref)
    return OccupancyStats(freq, ref, cond, beta_hat, beta, float(diff.sum()), float(diff.max()))


@dataclass(frozen=True, eq=False)
class FleetRun:
    trajectories: tuple[Trajectory, ...]
    unvisited: StateSet
    escaped: tuple[bool, ...]  # robot i visited a state outside its class

    @property
    def visited(self) -> StateSet:
        mask = np.zeros(self.unvisited.universe, dtype=bool)
        for t in self.trajectories:
            mask |= t.visits > 0
        return StateSet(mask)


def fleet_run(
    chain: ClosedLoopChain,
    plan: DeploymentPlan,
    steps: int,
    seed: int,
    forbidden: StateSet | None = None,
) -> FleetRun:
    """One independent rollout per robot; robot ``i`` uses stream ``i``."""
    trajs = []
    escaped = []
    for i, (s0, k) in enumerate(plan.assignments):
        t = rollout(chain, s0, steps, seed, stream=i, forbidden=forbidden)
        trajs.append(t)
        if plan.classes:
            escaped.append(bool(np.any(t.visits[~plan.classes[k].mask])))
        else:
            escaped.append(bool(np.any(t.visits[~plan.coverage.mask])))
    visited = np.zeros(chain.n_states, dtype=bool)
    for t in trajs:
        visited |= t.visits > 0
    return FleetRun(tuple(trajs), StateSet(plan.coverage.mask & ~visited), tuple(escaped))
