"""Entropy-maximizing stationary state-action pmf and its policy.

Primal::

    maximize    -sum f(s,u) ln f(s,u)         over pmfs f on S x U
    subject to  sum_u f(t,u) = sum_{s,u} Q(t|s,u) f(s,u)     for every t
                f(s,u) = 0                                    for s in F
                sum_{(s,u) in D} f(s,u) >= alpha              (optional)

The solver works on the dual.  With a multiplier ``lam[t]`` per
stationarity row and ``nu >= 0`` for the region row, the primal optimum
has Gibbs form ``f = softmax(A^T lam + nu * d)`` over the active pairs, and
the dual objective ``logsumexp(A^T lam + nu * d) - nu * alpha`` is smooth
and convex.  It is minimized with a damped Newton iteration whose
Hessian ``B diag(f) B^T - (B f)(B f)^T`` is inverted on its range (the
null space holds one gauge direction per closed class) through an SVD of
its square-root factor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import logsumexp

from .mdp import DimensionMismatch, JointPmf, Policy, StateSet, TransitionKernel, validate
from .oracle import recurrent_actions

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_GAP_TOL = 1e-9
DEFAULT_MAX_ITER = 500
DEFAULT_EPS_SUPP = 1e-9


class ParameterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProgramSpec:
    kernel: TransitionKernel
    forbidden: StateSet
    active: np.ndarray  # (n_states, n_actions) bool; False = variable eliminated
    stationarity: sp.csr_matrix  # (n_states, n_active)
    region: np.ndarray | None  # bool over active variables
    alpha: float | None
    oracle_set: StateSet
    prerestricted: bool
    tol: float = DEFAULT_TOL
    gap_tol: float = DEFAULT_GAP_TOL
    max_iter: int = DEFAULT_MAX_ITER
    eps_supp: float = DEFAULT_EPS_SUPP

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def n_rows(self) -> int:
        """Stationarity rows plus the region row when present."""
        return self.stationarity.shape[0] + (self.region is not None)


@dataclass(frozen=True)
class SolveReport:
    status: str  # "optimal", "max_iter" or "infeasible"
    entropy: float | None
    stationarity_residual: float | None
    normalization_residual: float | None
    duality_gap: float | None  # absolute value
    forbidden_mass: float | None
    region_mass: float | None
    region_multiplier: float | None
    iterations: int
    n_active: int
    prerestricted: bool
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def stationarity_matrix(kernel: TransitionKernel, active: np.ndarray) -> sp.csr_matrix:
    """Rows ``t``, columns active ``(s,u)``: ``[t == s] - Q(t|s,u)``."""
    n, nu = kernel.n_states, kernel.n_actions
    cols = np.flatnonzero(active.ravel())
    Q = kernel.matrix()[cols]  # (n_active, n)
    outflow = sp.csr_matrix(
        (np.ones(cols.size), (cols // nu, np.arange(cols.size))), shape=(n, cols.size)
    )
    A = (outflow - Q.T).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_program(
    kernel: TransitionKernel,
    forbidden: StateSet,
    region: tuple[StateSet, float] | None = None,
    *,
    prerestrict: bool = True,
    tol: float = DEFAULT_TOL,
    gap_tol: float = DEFAULT_GAP_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    eps_supp: float = DEFAULT_EPS_SUPP,
) -> ProgramSpec:
    """Build the variable set and constraint rows.

    With ``prerestrict`` only the state-action pairs that the oracle keeps
    safe and recurrent stay active; otherwise every pair with ``s`` outside
    ``forbidden`` is a variable.  ``region`` is ``(states, alpha)``.
    """
    if forbidden.universe != kernel.n_states:
        raise DimensionMismatch("state", forbidden.universe, kernel.n_states)
    allowed, partition = recurrent_actions(kernel, forbidden)
    if prerestrict:
        active = allowed.mask.copy()
    else:
        active = np.ones((kernel.n_states, kernel.n_actions), dtype=bool)
        active[forbidden.mask] = False

    region_mask = alpha = None
    if region is not None:
        states, alpha = region
        alpha = float(alpha)
        if not 0.0 < alpha < 1.0:
            raise ParameterError(f"region threshold alpha must lie in (0, 1), got {alpha}")
        if states.universe != kernel.n_states:
            raise DimensionMismatch("state", states.universe, kernel.n_states)
        full = np.repeat(states.mask[:, None], kernel.n_actions, axis=1)
        region_mask = full[active]

    return ProgramSpec(
        kernel=kernel,
        forbidden=forbidden,
        active=active,
        stationarity=stationarity_matrix(kernel, active),
        region=region_mask,
        alpha=alpha,
        oracle_set=partition.union,
        prerestricted=prerestrict,
        tol=tol,
        gap_tol=gap_tol,
        max_iter=max_iter,
        eps_supp=eps_supp,
    )


def _max_region_mass(program: ProgramSpec) -> float:
    A = program.stationarity
    k = A.shape[1]
    res = linprog(
        -program.region.astype(float),
        A_eq=sp.vstack([A, sp.csr_matrix(np.ones((1, k)))]).tocsr(),
        b_eq=np.r_[np.zeros(A.shape[0]), 1.0],
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        return 0.0
    return float(-res.fun)


class _Dual:
    """``phi(y) = logsumexp(B^T y) - c . y`` with ``B`` sparse (m, k)."""

    def __init__(self, B: sp.csr_matrix, c: np.ndarray):
        self.B = B
        self.BT = B.T.tocsr()
        self.Bd = B.toarray()
        self.c = c

    def value(self, y):
        return logsumexp(self.BT @ y) - self.c @ y

    def evaluate(self, y):
        theta = self.BT @ y
        lse = logsumexp(theta)
        f = np.exp(theta - lse)
        return theta, lse, f

    def minimize(self, y, done, max_iter):
        """Damped Newton; ``done(y, theta, f, stalled)`` decides termination.

        ``stalled`` is set once a full iteration lowers the objective by
        less than rounding noise, which is how a dual without a minimizer
        (some variable forced to zero) settles.
        """
        it = 0
        stalled = False
        while True:
            theta, lse, f = self.evaluate(y)
            if done(y, theta, f, stalled):
                return y, it, True
            if it >= max_iter:
                return y, it, False
            it += 1
            Bf = self.Bd @ f
            g = Bf - self.c
            # H = W^T W with W = diag(sqrt f)(B^T - 1 (Bf)^T); factoring W rather
            # than H keeps curvature ~1e-13 below the top resolvable
            W = np.sqrt(f)[:, None] * (self.Bd.T - Bf[None, :])
            try:
                _, sv, Vt = la.svd(W, full_matrices=False)
            except np.linalg.LinAlgError:
                _, sv, Vt = la.svd(W, full_matrices=False, lapack_driver="gesvd")
            keep = sv > max(sv[0], 1e-300) * 1e-12
            gv = Vt[keep] @ g
            step = -(Vt[keep].T @ (gv / sv[keep] ** 2))
            slope = g @ step
            if not slope < 0:
                step, slope = -g, -(g @ g)
            phi0 = lse - self.c @ y
            t = 1.0
            phi1 = phi0
            while t > 1e-12:
                y_new = y + t * step
                phi1 = self.value(y_new)
                if phi1 <= phi0 + 1e-4 * t * slope:
                    break
                t *= 0.5
            else:
                y_new, phi1 = y, phi0
            stalled = phi0 - phi1 <= 1e-15 * max(1.0, abs(phi0))
            y = y_new


def solve_maxent(program: ProgramSpec) -> tuple[JointPmf | None, SolveReport]:
    """Maximize the entropy of the stationary state-action pmf.

    Returns ``(None, report)`` with status ``infeasible`` when no safe
    recurrent state exists or the region threshold cannot be met.
    """
    kernel = program.kernel
    space, actions = kernel.states, kernel.actions
    n, nu = kernel.n_states, kernel.n_actions
    A = program.stationarity
    k = A.shape[1]

    def infeasible(msg):
        log.info("infeasible program: %s", msg)
        return None, SolveReport("infeasible", None, None, None, None, None, None, None,
                                 0, k, program.prerestricted, msg)

    if len(program.oracle_set) == 0:
        return infeasible("no forbidden-avoiding recurrent state exists (oracle set is empty)")
    if program.region is not None:
        best = _max_region_mass(program)
        if best < program.alpha:
            return infeasible(f"region mass at most {best:.6g} < alpha={program.alpha}")

    tol, gap_tol = program.tol, program.gap_tol
    region = program.region.astype(float) if program.region is not None else None

    def stationary_ok(y, theta, f, stalled, extra=0.0):
        resid = np.max(np.abs(A @ f)) if k else 0.0
        gap = f @ theta - extra
        if not program.prerestricted:
            # no interior optimum: keep pushing vanishing variables down
            return resid <= tol and stalled
        return resid <= tol and (abs(gap) <= gap_tol or stalled)

    # phase 1: stationarity only
    dual = _Dual(A, np.zeros(n))
    lam, iters, converged = dual.minimize(np.zeros(n), stationary_ok, program.max_iter)
    theta, lse, f = dual.evaluate(lam)
    nu_ = 0.0

    if region is not None and region @ f < program.alpha:
        # phase 2: region row active as an equality with a free multiplier
        B = sp.vstack([A, sp.csr_matrix(region[None, :])]).tocsr()
        c = np.zeros(n + 1)
        c[-1] = program.alpha

        def region_ok(y, theta, f, stalled):
            return (abs(region @ f - program.alpha) <= tol
                    and stationary_ok(y, theta, f, stalled, program.alpha * y[-1]))

        dual = _Dual(B, c)
        y, more, converged = dual.minimize(np.r_[lam, 0.0], region_ok, program.max_iter - iters)
        iters += more
        theta, lse, f = dual.evaluate(y)
        lam, nu_ = y[:n], float(y[-1])
        if nu_ < 0:
            log.warning("region multiplier came out negative (%g)", nu_)

    values = np.zeros((n, nu))
    values[program.active] = f
    pmf = JointPmf(space, actions, values)

    logf = theta - lse
    entropy = float(-(f @ logf))
    # dual value minus entropy; can come out a hair negative in floating point
    gap = abs(float(f @ theta - nu_ * (program.alpha or 0.0)))
    report = SolveReport(
        status="optimal" if converged else "max_iter",
        entropy=entropy,
        stationarity_residual=stationarity_residual(kernel, pmf),
        normalization_residual=float(abs(values.sum() - 1.0)),
        duality_gap=gap,
        forbidden_mass=float(values[program.forbidden.mask].sum()),
        region_mass=float(region @ f) if region is not None else None,
        region_multiplier=nu_ if region is not None else None,
        iterations=iters,
        n_active=k,
        prerestricted=program.prerestricted,
        message="" if converged else "iteration limit reached; returning best iterate",
    )
    if converged and program.prerestricted:
        found = support(pmf.values.sum(axis=1), 0.0)
        if found != program.oracle_set:
            raise AssertionError("maxent support differs from the oracle's safe recurrent set")
    return pmf, report


def stationarity_residual(kernel: TransitionKernel, f: JointPmf) -> float:
    """Max-norm of outflow minus inflow over every state, on the full kernel."""
    vals = f.values
    inflow = kernel.matrix().T @ vals.ravel()
    return float(np.max(np.abs(vals.sum(axis=1) - inflow)))


def entropy(f: JointPmf) -> float:
    v = f.values[f.values > 0]
    return float(-(v * np.log(v)).sum())


def support(f_s: np.ndarray, eps_supp: float = 0.0) -> StateSet:
    """States whose marginal mass exceeds ``eps_supp``."""
    f_s = np.asarray(f_s, dtype=float)
    return StateSet(f_s > eps_supp)


def extract_policy(f: JointPmf, completion: Policy | None = None, threshold: float = 0.0) -> Policy:
    """Conditional ``f(u|s)`` on the support, ``completion`` elsewhere.

    Entries of ``f`` at or below ``threshold`` are treated as zero, so the
    policy of a thresholded solve never takes an action the solver drove
    to (numerical) zero.  ``completion`` defaults to uniform.
    """
    problems = validate(f)
    if problems:
        raise ValueError("invalid joint pmf: " + "; ".join(map(str, problems[:5])))
    if completion is None:
        completion = Policy.uniform(f.states, f.actions)
    elif completion.states != f.states or completion.actions != f.actions:
        raise DimensionMismatch("state", completion.states.size, f.states.size)
    vals = np.where(f.values > threshold, f.values, 0.0)
    mass = vals.sum(axis=1)
    on = mass > threshold
    probs = np.array(completion.probs, dtype=float)
    probs[on] = vals[on] / mass[on, None]
    return Policy(f.states, f.actions, probs)


def solve_world_program(
    kernel: TransitionKernel,
    forbidden: StateSet,
    region: tuple[StateSet, float] | None = None,
    **options,
) -> tuple[JointPmf | None, Policy | None, SolveReport, ProgramSpec]:
    """Assemble, solve and extract the policy in one call."""
    program = assemble_program(kernel, forbidden, region, **options)
    f, report = solve_maxent(program)
    if f is None:
        return None, None, report, program
    threshold = 0.0 if program.prerestricted else program.eps_supp
    return f, extract_policy(f, threshold=threshold), report, program


def region_mass(f: JointPmf, states: Iterable[int] | StateSet) -> float:
    ids = states.ids if isinstance(states, StateSet) else np.fromiter(states, dtype=np.int64)
    return float(f.values[ids].sum())
