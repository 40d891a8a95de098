"""Shared fixtures data: shipped worlds and random small worlds."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from surveil import worlds
from surveil.gridworld import WorldSpec, expand_kernel, forbidden_from_cells, load_world, region_states
from surveil.maxent import solve_world_program
from surveil.mdp import ActionSpace, JointPmf, Policy, StateSet, StateSpace, TransitionKernel

# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


@dataclass(frozen=True, eq=False)
class Solved:
    spec: WorldSpec
    kernel: TransitionKernel
    forbidden: StateSet
    region: StateSet | None
    f: JointPmf
    policy: Policy
    report: object
    program: object

    @property
    def fs(self) -> np.ndarray:
        return self.f.values.sum(axis=1)


def world(name: str):
    spec = load_world(worlds.path(name))
    return spec, expand_kernel(spec), forbidden_from_cells(spec), region_states(spec)


@lru_cache(maxsize=None)
def solved(name: str, prerestrict: bool = True) -> Solved:
    spec, kernel, forbidden, region = world(name)
    reg = None if region is None else (region, spec.alpha)
    f, policy, report, program = solve_world_program(kernel, forbidden, reg, prerestrict=prerestrict)
    return Solved(spec, kernel, forbidden, region, f, policy, report, program)


def random_world(rng: np.random.Generator, nx: int = 3, ny: int = 3, max_forbidden: int = 3):
    """Random sparse kernel on an nx-by-ny lattice plus random forbidden cells.

    Every (state, action) row gets one to three distinct successors with
    Dirichlet weights; the lattice only fixes the state count.
    """
    space, actions = StateSpace(nx, ny), ActionSpace()
    rows = []
    for _ in range(space.size * actions.size):
        k = int(rng.integers(1, 4))
        succ = rng.choice(space.size, size=k, replace=False)
        p = rng.dirichlet(np.ones(k))
        rows.append(list(zip(succ.tolist(), (p / p.sum()).tolist())))
    kernel = TransitionKernel.from_rows(space, actions, rows)
    n_cells = int(rng.integers(0, max_forbidden + 1))
    cells = [(int(x), int(y)) for x, y in zip(rng.integers(1, nx + 1, n_cells), rng.integers(1, ny + 1, n_cells))]
    ids = [s for c in cells for s in space.cell_states(*c)]
    return kernel, StateSet.from_ids(space.size, ids)


def random_safe_policy(rng: np.random.Generator, allowed: np.ndarray) -> np.ndarray:
    """Random policy over ``allowed`` actions (uniform where nothing is allowed)."""
    n, nu = allowed.shape
    keep = allowed & (rng.random(allowed.shape) < 0.7)
    empty = ~keep.any(axis=1)
    keep[empty] = allowed[empty]
    w = rng.random((n, nu)) * keep
    probs = np.full((n, nu), 1.0 / nu)
    on = keep.any(axis=1)
    probs[on] = w[on] / w[on].sum(axis=1, keepdims=True)
    return probs
