"""MDP solvers and policy-value estimation.

Value iteration uses the landed-in reward convention,
``Q(s, a) = E[r(s') + gamma * V(s')]``, which yields the same optimal
action sets as the occupied-state convention while matching the rollout
return used by :func:`rollout_values`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import ExtraTreesRegressor

from .core import EvaluationError, Policy, TabularMDP

OPTIMAL_Q_TOL = 1e-6


def q_backup(mdp: TabularMDP, rewards: np.ndarray, values: np.ndarray) -> np.ndarray:
    """One Bellman backup: Q[s, a] = E[r(s') + gamma * values(s')]."""
    target = rewards + mdp.discount * values
    return mdp.step_expectation(target)


def greedy_policy(q: np.ndarray, tol: float = OPTIMAL_Q_TOL) -> Policy:
    """Greedy policy of a Q table; optimal set = actions within tol of the max."""
    best = q.max(axis=1, keepdims=True)
    mask = q >= best - tol
    return Policy(canonical=mask.argmax(axis=1), optimal_mask=mask)


def value_iteration(mdp: TabularMDP, rewards, tol: float = 1e-8,
                    max_iters: int = 100_000) -> tuple[np.ndarray, Policy]:
    """Solve the MDP by Bellman optimality backups until the max-norm
    change drops below ``tol``.  Returns (state values, greedy policy)."""
    rewards = np.asarray(rewards, dtype=float)
    if not np.all(np.isfinite(rewards)):
        raise ValueError("rewards must be finite")
    values = np.zeros(mdp.n_states)
    for _ in range(max_iters):
        q = q_backup(mdp, rewards, values)
        new_values = q.max(axis=1)
        delta = np.max(np.abs(new_values - values))
        values = new_values
        if delta < tol:
            break
    q = q_backup(mdp, rewards, values)
    return values, greedy_policy(q)


def bellman_residual(mdp: TabularMDP, rewards, values: np.ndarray) -> float:
    """Max-norm distance between values and one further optimality backup."""
    q = q_backup(mdp, np.asarray(rewards, dtype=float), values)
    return float(np.max(np.abs(q.max(axis=1) - values)))


def rollout(mdp: TabularMDP, actions: np.ndarray, start: int, n_steps: int,
            rng: np.random.Generator | None = None) -> list[tuple[int, int]]:
    """Roll a deterministic action table forward; stochastic rows are sampled."""
    actions = np.asarray(actions)
    steps = []
    s = int(start)
    for _ in range(n_steps):
        a = int(actions[s])
        steps.append((s, a))
        if mdp.next_state is not None:
            s = int(mdp.next_state[s, a])
        else:
            row = mdp.transition_matrix[s, a]
            if rng is None:
                raise ValueError("stochastic rollout needs an rng")
            s = int(rng.choice(mdp.n_states, p=row))
    return steps


def rollout_values(mdp: TabularMDP, actions, step_rewards, horizon: int,
                   starts=None) -> np.ndarray:
    """Discounted ``horizon``-step return of one deterministic rollout per
    start state, under the landed-in convention (reward collected on
    arrival, discounted by the step at which the action was taken).

    ``step_rewards`` maps (s, a, s') arrays to per-transition rewards.
    Deterministic MDPs only; raises if an action is undefined (< 0).
    """
    if mdp.next_state is None:
        raise EvaluationError("exact rollout values need deterministic transitions")
    actions = np.asarray(actions, dtype=np.int64)
    starts = np.arange(mdp.n_states) if starts is None else np.asarray(starts)
    current = starts.copy()
    returns = np.zeros(len(starts))
    for t in range(horizon):
        acts = actions[current]
        if np.any(acts < 0):
            bad = current[np.nonzero(acts < 0)[0][0]]
            raise EvaluationError(f"policy has no action at reached state {bad}")
        nxt = mdp.next_state[current, acts]
        returns += mdp.discount**t * step_rewards(current, acts, nxt)
        current = nxt
    return returns


def estimate_value(mdp: TabularMDP, actions, step_rewards, horizon: int = 10,
                   starts=None) -> float:
    """Mean discounted rollout return over start states (uniform by default)."""
    return float(np.mean(rollout_values(mdp, actions, step_rewards, horizon, starts)))


@dataclass
class QEnsemble:
    """Per-action regressors approximating Q(features, action)."""

    models: list
    n_iterations: int

    @property
    def n_actions(self) -> int:
        return len(self.models)

    def q_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.column_stack([m.predict(X) for m in self.models])

    def greedy_actions(self, X: np.ndarray) -> np.ndarray:
        return self.q_values(X).argmax(axis=1)


def fitted_q_iteration(X, A, R, X_next, n_actions: int, gamma: float = 0.98,
                       n_iters: int = 20, n_trees: int = 50,
                       min_samples_leaf: int = 1, seed: int = 0) -> QEnsemble:
    """Batch fitted Q iteration with an extremely randomized tree ensemble,
    after Ernst et al.  Each iteration regresses the one-step Bellman target
    ``r + gamma * max_a' Q(x', a')`` separately per action.
    """
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=np.int64)
    R = np.asarray(R, dtype=float)
    X_next = np.asarray(X_next, dtype=float)
    if len(X) == 0:
        raise ValueError("fitted Q iteration needs a non-empty batch")

    by_action = [np.nonzero(A == a)[0] for a in range(n_actions)]
    if any(len(idx) == 0 for idx in by_action):
        missing = [a for a, idx in enumerate(by_action) if len(idx) == 0]
        raise ValueError(f"batch has no transitions for actions {missing}")

    models = None
    q_next = np.zeros(len(X))
    for it in range(n_iters):
        targets = R + gamma * q_next
        if not np.all(np.isfinite(targets)):
            raise ArithmeticError(f"non-finite regression targets at iteration {it}")
        models = [
            ExtraTreesRegressor(n_estimators=n_trees, random_state=seed + a,
                                min_samples_leaf=min_samples_leaf, n_jobs=1)
            .fit(X[idx], targets[idx])
            for a, idx in enumerate(by_action)
        ]
        if it + 1 < n_iters:
            q_all = np.column_stack([m.predict(X_next) for m in models])
            q_next = q_all.max(axis=1)
    return QEnsemble(models=models, n_iterations=n_iters)
