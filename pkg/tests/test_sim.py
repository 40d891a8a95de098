import numpy as np
import pytest

from surveil.deploy import partition_closed_loop, plan_deployment
from surveil.mdp import ClosedLoopChain, StateSet, StateSpace, compose_closed_loop
from surveil.sim import fleet_run, make_rng, occupancy, rollout
from helpers import solved

SPACE = StateSpace(1, 1)


def two_state_chain(p: float, q: float) -> ClosedLoopChain:
    # 0 -> 1 with p, 1 -> 0 with q; states 2, 3 absorbing
    return ClosedLoopChain.from_rows(SPACE, [
        [(0, 1 - p), (1, p)], [(0, q), (1, 1 - q)], [(2, 1.0)], [(3, 1.0)],
    ])


def test_rollout_is_reproducible_and_stream_dependent():
    chain = two_state_chain(0.3, 0.6)
    a = rollout(chain, 0, 10_000, seed=7)
    b = rollout(chain, 0, 10_000, seed=7)
    c = rollout(chain, 0, 10_000, seed=7, stream=1)
    np.testing.assert_array_equal(a.visits, b.visits)
    assert not np.array_equal(a.visits, c.visits)
    assert a.visits.sum() == 10_000


def test_make_rng_is_philox():
    assert isinstance(make_rng(0).bit_generator, np.random.Philox)


def test_two_state_frequencies_converge():
    p, q = 0.3, 0.6
    traj = rollout(two_state_chain(p, q), 0, 200_000, seed=1)
    pi = np.array([q, p, 0, 0]) / (p + q)
    st = occupancy(traj, pi)
    assert st.l1 < 0.01
    assert traj.visits[2] == traj.visits[3] == 0


def test_deterministic_cycle_counts_exactly():
    chain = ClosedLoopChain.from_rows(SPACE, [[(1, 1.0)], [(2, 1.0)], [(3, 1.0)], [(0, 1.0)]])
    traj = rollout(chain, 0, 10, seed=0)
    # visits count S_1..S_10 = 1,2,3,0,1,2,3,0,1,2
    assert traj.visits.tolist() == [2, 3, 3, 2]


def test_rollout_rejects_bad_input():
    chain = ClosedLoopChain.from_rows(SPACE, [[(1, 1.0)], [], [(2, 1.0)], [(3, 1.0)]])
    with pytest.raises(ValueError, match="empty"):
        rollout(chain, 0, 5, seed=0)
    with pytest.raises(ValueError):
        rollout(chain, 4, 5, seed=0)
    with pytest.raises(ValueError):
        rollout(chain, 0, 0, seed=0)


def test_forbidden_visits_counted():
    chain = two_state_chain(0.5, 0.5)
    traj = rollout(chain, 0, 1000, seed=0, forbidden=StateSet.from_ids(4, [1]))
    assert traj.forbidden_visits == traj.visits[1] > 0


def test_occupancy_class_conditional():
    chain = two_state_chain(0.5, 0.5)
    traj = rollout(chain, 0, 50_000, seed=3)
    ref = np.array([0.1, 0.1, 0.8, 0.0])
    st = occupancy(traj, ref, StateSet.from_ids(4, [0, 1]))
    assert st.reference_class_mass == pytest.approx(0.2)
    assert st.empirical_class_mass == pytest.approx(1.0)
    np.testing.assert_allclose(st.reference, [0.5, 0.5, 0, 0])
    assert st.l1 < 0.02


def test_occupancy_zero_reference_mass_errors():
    traj = rollout(two_state_chain(0.5, 0.5), 0, 100, seed=0)
    with pytest.raises(ValueError):
        occupancy(traj, np.array([0, 0, 1.0, 0]), StateSet.from_ids(4, [0, 1]))


def test_fleet_on_example2_stays_in_classes_and_covers():
    s = solved("ex2")
    plan = plan_deployment(partition_closed_loop(s.kernel, s.policy, s.program.oracle_set))
    chain = compose_closed_loop(s.kernel, s.policy)
    run = fleet_run(chain, plan, 50_000, seed=2, forbidden=s.forbidden)
    assert len(run.trajectories) == 3
    assert not any(run.escaped)
    assert all(t.forbidden_visits == 0 for t in run.trajectories)
    assert len(run.unvisited) == 0
    assert run.visited == plan.coverage
    assert [t.stream for t in run.trajectories] == [0, 1, 2]
