"""Shared domain types: tabular MDPs, policies, trajectories, summaries.

Everything here is immutable after construction (arrays are flagged
read-only) so instances can be shared freely across parallel workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-9


class PolisumError(Exception):
    """Base class for package errors."""


class ConfigError(PolisumError):
    """Invalid specification or configuration."""


class ExtractionError(PolisumError):
    """Summary extraction could not be completed."""


class FitError(PolisumError):
    """Model fitting failed (e.g. singular similarity graph)."""


class PredictionError(PolisumError):
    """Prediction from a fitted model failed."""


class EvaluationError(PolisumError):
    """Policy evaluation hit an undefined state or failed rollout."""


class IntegrationError(PolisumError):
    """Numerical integration produced non-finite values."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabularMDP:
    """Finite MDP with per-state feature vectors.

    Transitions come in one of two forms: ``next_state`` (S, A) for
    deterministic dynamics, or ``transition_matrix`` (S, A, S) for
    stochastic ones.  Exactly one must be provided.
    """

    n_states: int
    n_actions: int
    features: np.ndarray  # (S, d)
    discount: float
    start_distribution: np.ndarray  # (S,)
    next_state: np.ndarray | None = None
    transition_matrix: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError(f"discount must be in [0, 1), got {self.discount}")
        feats = _freeze(np.asarray(self.features, dtype=float))
        if feats.shape[0] != self.n_states or not np.all(np.isfinite(feats)):
            raise ConfigError("features must be a finite (n_states, d) array")
        start = _freeze(np.asarray(self.start_distribution, dtype=float))
        if start.shape != (self.n_states,) or abs(start.sum() - 1.0) > PROB_TOL:
            raise ConfigError("start_distribution must sum to 1 over states")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "start_distribution", start)
        if (self.next_state is None) == (self.transition_matrix is None):
            raise ConfigError("provide exactly one of next_state / transition_matrix")
        if self.next_state is not None:
            ns = _freeze(np.asarray(self.next_state, dtype=np.int64))
            if ns.shape != (self.n_states, self.n_actions):
                raise ConfigError("next_state must have shape (n_states, n_actions)")
            if ns.min() < 0 or ns.max() >= self.n_states:
                raise ConfigError("next_state indices out of range")
            object.__setattr__(self, "next_state", ns)
        else:
            tm = _freeze(np.asarray(self.transition_matrix, dtype=float))
            if tm.shape != (self.n_states, self.n_actions, self.n_states):
                raise ConfigError("transition_matrix must be (S, A, S)")
            rows = tm.sum(axis=2)
            if np.max(np.abs(rows - 1.0)) > PROB_TOL or tm.min() < 0:
                raise ConfigError("each transition row must be a probability vector")
            object.__setattr__(self, "transition_matrix", tm)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return self.next_state is not None

    def transition(self, s: int, a: int) -> np.ndarray:
        """Probability vector over successor states of (s, a)."""
        if self.next_state is not None:
            row = np.zeros(self.n_states)
            row[self.next_state[s, a]] = 1.0
            return row
        return np.array(self.transition_matrix[s, a])

    def successors(self, s: int, a: int):
        """(indices, probabilities) of the positive-probability successors."""
        if self.next_state is not None:
            return np.array([self.next_state[s, a]]), np.array([1.0])
        row = self.transition_matrix[s, a]
        idx = np.nonzero(row)[0]
        return idx, row[idx]

    def step_expectation(self, values: np.ndarray) -> np.ndarray:
        """E[values(s') | s, a] for every (s, a); values may be (S,) or (S, d)."""
        if self.next_state is not None:
            return values[self.next_state]
        return np.einsum("sat,t...->sa...", self.transition_matrix, values)


@dataclass(frozen=True)
class Policy:
    """Canonical action per state plus the full set of optimal actions."""

    canonical: np.ndarray  # (S,) int
    optimal_mask: np.ndarray  # (S, A) bool

    def __post_init__(self):
        canon = _freeze(np.asarray(self.canonical, dtype=np.int64))
        mask = _freeze(np.asarray(self.optimal_mask, dtype=bool))
        if canon.ndim != 1 or mask.ndim != 2 or mask.shape[0] != canon.shape[0]:
            raise ConfigError("canonical (S,) and optimal_mask (S, A) are required")
        if not mask[np.arange(canon.shape[0]), canon].all():
            raise ConfigError("canonical action must belong to the optimal set")
        if not mask.any(axis=1).all():
            raise ConfigError("every state needs a non-empty optimal set")
        object.__setattr__(self, "canonical", canon)
        object.__setattr__(self, "optimal_mask", mask)

    @property
    def n_states(self) -> int:
        return self.canonical.shape[0]

    @property
    def n_actions(self) -> int:
        return self.optimal_mask.shape[1]

    def optimal_set(self, s: int) -> list[int]:
        return np.nonzero(self.optimal_mask[s])[0].tolist()

    def is_optimal(self, s: int, a: int) -> bool:
        return bool(self.optimal_mask[s, a])

    def to_dict(self, domain: str = "", seed: int | None = None) -> dict:
        return {
            "domain": domain,
            "seed": seed,
            "canonical": self.canonical.tolist(),
            "optimal_set": [self.optimal_set(s) for s in range(self.n_states)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Policy":
        canonical = np.asarray(doc["canonical"], dtype=np.int64)
        n_actions = max(max(acts) for acts in doc["optimal_set"]) + 1
        mask = np.zeros((len(canonical), n_actions), dtype=bool)
        for s, acts in enumerate(doc["optimal_set"]):
            mask[s, acts] = True
        return cls(canonical=canonical, optimal_mask=mask)


@dataclass(frozen=True)
class Trajectory:
    """Ordered (state, action) pairs produced by rolling out a policy."""

    steps: tuple  # tuple of (state, action) int pairs

    def __post_init__(self):
        steps = tuple((int(s), int(a)) for s, a in self.steps)
        if len(steps) < 1:
            raise ConfigError("a trajectory needs at least one step")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> list[int]:
        return [s for s, _ in self.steps]

    @property
    def start(self) -> int:
        return self.steps[0][0]


def validate_trajectory(traj: Trajectory, mdp: TabularMDP, policy: Policy) -> None:
    """Check actions are canonical and consecutive states are reachable."""
    for t, (s, a) in enumerate(traj.steps):
        if a != policy.canonical[s]:
            raise ConfigError(f"step {t}: action {a} is not canonical at state {s}")
        if t + 1 < len(traj.steps):
            nxt = traj.steps[t + 1][0]
            idx, _ = mdp.successors(s, a)
            if nxt not in idx:
                raise ConfigError(f"step {t}: state {nxt} unreachable from ({s}, {a})")


@dataclass(frozen=True)
class Summary:
    """Budgeted list of trajectories; the budget counts state-action pairs."""

    trajectories: tuple  # tuple of Trajectory

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    @property
    def budget(self) -> int:
        return sum(len(t) for t in self.trajectories)

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectories)

    def pairs(self) -> list[tuple[int, int]]:
        return [step for traj in self.trajectories for step in traj.steps]

    def states(self) -> list[int]:
        """Unique visited states, ascending."""
        return sorted({s for traj in self.trajectories for s in traj.states})

    def to_dict(self, domain: str = "", extractor: str = "") -> dict:
        lengths = {len(t) for t in self.trajectories}
        return {
            "domain": domain,
            "extractor": extractor,
            "k": self.budget,
            "l": lengths.pop() if len(lengths) == 1 else None,
            "trajectories": [
                [{"state": s, "action": a} for s, a in traj.steps]
                for traj in self.trajectories
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Summary":
        trajs = tuple(
            Trajectory(tuple((p["state"], p["action"]) for p in steps))
            for steps in doc["trajectories"]
        )
        return cls(trajectories=trajs)

    def to_json(self, path, domain: str = "", extractor: str = "") -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(domain, extractor), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "Summary":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class DemonstrationSet:
    """All state-action pairs demonstrating a policy: one canonical action
    per unique state, states ascending."""

    states: np.ndarray  # (n,) unique, ascending
    actions: np.ndarray  # (n,) canonical action per state

    def __post_init__(self):
        states = _freeze(np.asarray(self.states, dtype=np.int64))
        actions = _freeze(np.asarray(self.actions, dtype=np.int64))
        if states.ndim != 1 or states.shape != actions.shape or states.size == 0:
            raise ConfigError("demonstration set needs aligned non-empty state/action arrays")
        if np.any(np.diff(states) <= 0):
            raise ConfigError("demonstration states must be unique and ascending")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.states.tolist(), self.actions.tolist()))

    def action_of(self, state: int) -> int:
        i = np.searchsorted(self.states, state)
        if i == len(self.states) or self.states[i] != state:
            raise KeyError(f"state {state} not in demonstration set")
        return int(self.actions[i])

    @classmethod
    def from_policy(cls, policy: Policy, states=None) -> "DemonstrationSet":
        if states is None:
            states = np.arange(policy.n_states)
        states = np.unique(np.asarray(states, dtype=np.int64))
        return cls(states=states, actions=policy.canonical[states])


def unseen_states(demo: DemonstrationSet, summary: Summary) -> list[int]:
    """States of the demonstration set not visited by the summary, ascending."""
    covered = set(summary.states())
    missing = covered.difference(demo.states.tolist())
    if missing:
        raise ConfigError(f"summary visits states outside the demonstration set: {sorted(missing)}")
    return [int(s) for s in demo.states if int(s) not in covered]
