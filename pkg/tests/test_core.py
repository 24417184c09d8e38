import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polisum.core import (
    ConfigError,
    DemonstrationSet,
    Policy,
    Summary,
    TabularMDP,
    Trajectory,
    unseen_states,
    validate_trajectory,
)


def chain_mdp(n=3, n_actions=2, discount=0.9):
    # action 0 advances (absorbing at the end), action 1 stays
    nxt = np.stack([np.minimum(np.arange(n) + 1, n - 1), np.arange(n)], axis=1)
    return TabularMDP(
        n_states=n,
        n_actions=n_actions,
        features=np.eye(n),
        discount=discount,
        start_distribution=np.full(n, 1.0 / n),
        next_state=nxt,
    )


def singleton_summary(pairs):
    return Summary(trajectories=tuple(Trajectory((p,)) for p in pairs))


class TestTypes:
    def test_transition_rows_must_normalize(self):
        tm = np.zeros((2, 1, 2))
        tm[:, 0, 0] = 0.5  # rows sum to 0.5
        with pytest.raises(ConfigError):
            TabularMDP(n_states=2, n_actions=1, features=np.eye(2),
                       discount=0.9, start_distribution=[0.5, 0.5],
                       transition_matrix=tm)

    def test_discount_range(self):
        with pytest.raises(ConfigError):
            chain_mdp(discount=1.0)

    def test_policy_canonical_must_be_optimal(self):
        with pytest.raises(ConfigError):
            Policy(canonical=np.array([1]), optimal_mask=np.array([[True, False]]))

    def test_trajectory_needs_steps(self):
        with pytest.raises(ConfigError):
            Trajectory(())

    def test_trajectory_validation(self):
        mdp = chain_mdp()
        policy = Policy(canonical=np.zeros(3, dtype=int),
                        optimal_mask=np.array([[True, False]] * 3))
        validate_trajectory(Trajectory(((0, 0), (1, 0))), mdp, policy)
        with pytest.raises(ConfigError):  # not the canonical action
            validate_trajectory(Trajectory(((0, 1),)), mdp, policy)
        with pytest.raises(ConfigError):  # state 2 unreachable from (0, 0)
            validate_trajectory(Trajectory(((0, 0), (2, 0))), mdp, policy)

    def test_demonstration_set_requires_sorted_unique(self):
        with pytest.raises(ConfigError):
            DemonstrationSet(states=np.array([2, 1]), actions=np.array([0, 0]))
        with pytest.raises(ConfigError):
            DemonstrationSet(states=np.array([1, 1]), actions=np.array([0, 0]))

    def test_summary_budget_counts_pairs_not_unique_states(self):
        traj = Trajectory(((0, 0), (0, 0), (1, 0)))
        summary = Summary(trajectories=(traj,))
        assert summary.budget == 3
        assert summary.states() == [0, 1]


class TestUnseenStates:
    def demo(self, states):
        states = np.asarray(sorted(states))
        return DemonstrationSet(states=states, actions=np.zeros(len(states), dtype=int))

    def test_simple_difference(self):
        d = self.demo([0, 1, 2])
        assert unseen_states(d, singleton_summary([(1, 0)])) == [0, 2]

    def test_full_coverage_is_empty(self):
        d = self.demo([0, 1, 2])
        t = singleton_summary([(0, 0), (1, 0), (2, 0)])
        assert unseen_states(d, t) == []

    def test_gridworld_count(self):
        # 24 distinct summary states out of 81 leave 57 unseen
        d = self.demo(range(81))
        t = singleton_summary([(s, 0) for s in range(0, 48, 2)])
        assert len(unseen_states(d, t)) == 81 - 24

    def test_rejects_states_outside_demo(self):
        with pytest.raises(ConfigError):
            unseen_states(self.demo([0, 1]), singleton_summary([(5, 0)]))

    @settings(max_examples=200, deadline=None)
    @given(st.sets(st.integers(0, 60), min_size=1, max_size=40), st.data())
    def test_partition_property(self, states, data):
        d = self.demo(states)
        covered = data.draw(
            st.sets(st.sampled_from(sorted(states)), max_size=len(states))
        )
        t = singleton_summary([(s, 0) for s in sorted(covered)]) if covered else None
        if t is None:
            return
        unseen = unseen_states(d, t)
        assert set(unseen) | set(t.states()) == set(d.states.tolist())
        assert set(unseen).isdisjoint(t.states())


class TestSummaryJson:
    def test_round_trip(self, tmp_path):
        summary = Summary(trajectories=(
            Trajectory(((0, 1), (3, 2))),
            Trajectory(((5, 0), (6, 4))),
        ))
        path = tmp_path / "summary.json"
        summary.to_json(path, domain="gridworld", extractor="irl")
        doc = json.loads(path.read_text())
        assert doc["domain"] == "gridworld" and doc["extractor"] == "irl"
        assert doc["k"] == 4 and doc["l"] == 2
        assert doc["trajectories"][0][1] == {"state": 3, "action": 2}
        loaded = Summary.from_json(path)
        assert loaded.pairs() == summary.pairs()
