"""Robot count and initial states for maximal persistent surveillance."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mdp import Policy, StateSet, TransitionKernel, compose_closed_loop
from .oracle import RecurrentPartition, closed_classes, recurrent_actions

log = logging.getLogger(__name__)


class NothingToSurveil(ValueError):
    """The partition has no recurrent class, so no robot can be placed."""


@dataclass(frozen=True)
class DeploymentPlan:
    r: int
    assignments: tuple[tuple[int, int], ...]  # (initial state, class index)
    coverage: StateSet
    classes: tuple[StateSet, ...] = ()


def partition_closed_loop(kernel: TransitionKernel, policy: Policy, support: StateSet) -> RecurrentPartition:
    """Recurrent classes of the closed loop among the ``support`` states."""
    return closed_classes(compose_closed_loop(kernel, policy), support)


def plan_deployment(
    partition: RecurrentPartition,
    selector: Callable[[int, StateSet], int] | None = None,
) -> DeploymentPlan:
    """One robot per recurrent class.

    ``selector(class_index, members)`` picks the initial state; the default
    takes the smallest state id so plans are reproducible.
    """
    if partition.n_classes == 0:
        raise NothingToSurveil("no recurrent class to surveil")
    assignments = []
    for i, members in enumerate(partition.classes):
        s = int(members.ids[0]) if selector is None else int(selector(i, members))
        if s not in members:
            raise ValueError(f"selector chose state {s}, which is not in class {i}")
        assignments.append((s, i))
    return DeploymentPlan(partition.n_classes, tuple(assignments), partition.union, partition.classes)


def selector_from_states(states) -> Callable[[int, StateSet], int]:
    """Selector preferring the given states, falling back to the smallest id."""
    wanted = [int(s) for s in states]

    def select(i: int, members: StateSet) -> int:
        for s in wanted:
            if s in members:
                return s
        return int(members.ids[0])

    return select


@dataclass(frozen=True)
class MinimalityReport:
    reference_classes: int
    trials: int
    qualifying: int
    attempts: int
    class_counts: tuple[int, ...]
    violations: int

    @property
    def min_classes(self) -> int | None:
        return min(self.class_counts) if self.class_counts else None

    @property
    def ok(self) -> bool:
        return self.violations == 0


def safe_partition(kernel: TransitionKernel, policy: Policy, forbidden: StateSet) -> RecurrentPartition:
    """Closed classes of the closed loop that avoid every forbidden state.

    Needs no support set: any forbidden-avoiding closed class is an end
    component of the safe sub-model, so it lies inside the oracle's set.
    """
    part = closed_classes(compose_closed_loop(kernel, policy))
    keep = tuple(c for c in part.classes if c.isdisjoint(forbidden))
    union = np.zeros(kernel.n_states, dtype=bool)
    for c in keep:
        union |= c.mask
    return RecurrentPartition(keep, StateSet(~union))


def verify_minimality(
    kernel: TransitionKernel,
    forbidden: StateSet,
    policy: Policy,
    trials: int = 50,
    seed: int = 0,
    keep_prob: float = 0.85,
    max_attempts: int = 1000,
) -> MinimalityReport:
    """Look for a policy with the same safe recurrent set but fewer classes.

    Each trial draws random policies over the oracle's recurrent actions
    (each action kept with ``keep_prob``, Dirichlet weights) until one
    keeps the full safe recurrent set recurrent, then records its class
    count.  Trials use independent streams spawned from ``seed``.
    """
    allowed, oracle_part = recurrent_actions(kernel, forbidden)
    target = oracle_part.union
    reference = partition_closed_loop(kernel, policy, target).n_classes
    n, nu = kernel.n_states, kernel.n_actions
    members = target.ids
    sub = allowed.mask[members]

    counts: list[int] = []
    attempts = 0
    for stream in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.Generator(np.random.Philox(stream))
        for _ in range(max_attempts):
            attempts += 1
            keep = sub & (rng.random(sub.shape) < keep_prob)
            empty = ~keep.any(axis=1)
            if empty.any():
                # fall back to one uniformly chosen admissible action
                pick = rng.random(sub.shape) * sub
                keep[empty] = pick[empty] == pick[empty].max(axis=1, keepdims=True)
            # normalized Gamma(1) draws are Dirichlet(1, ..., 1) on the kept actions
            w = rng.standard_gamma(1.0, sub.shape) * keep
            probs = np.full((n, nu), 1.0 / nu)
            probs[members] = w / w.sum(axis=1, keepdims=True)
            candidate = Policy(kernel.states, kernel.actions, probs)
            part = safe_partition(kernel, candidate, forbidden)
            if part.union == target:
                counts.append(part.n_classes)
                break
        else:
            log.info("trial found no qualifying policy in %d attempts", max_attempts)

    violations = sum(c < reference for c in counts)
    return MinimalityReport(reference, trials, len(counts), attempts, tuple(counts), violations)
