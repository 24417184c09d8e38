"""Reward-inference branch: discounted feature expectations, the halfspace
constraints under which a policy stays optimal, SCOT-style budgeted
demonstration selection (Brown & Niekum 2019), and maximum-entropy reward
recovery (Ziebart et al. 2008).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .core import (
    DemonstrationSet,
    ExtractionError,
    FitError,
    Policy,
    Summary,
    TabularMDP,
    Trajectory,
)
from .solvers import value_iteration

ZERO_NORMAL_TOL = 1e-9
DUPLICATE_TOL = 1e-9
REDUNDANCY_TOL = 1e-9


@dataclass(frozen=True)
class FeatureExpectation:
    """Discounted feature sum from taking ``origin`` then following the policy."""

    mu: np.ndarray
    origin: tuple  # (state, action)


@dataclass(frozen=True)
class HalfspaceConstraint:
    """Unit-norm weight-space constraint: w . normal >= 0 keeps the source
    action at least as good as its alternative."""

    normal: np.ndarray
    source: tuple  # (state, action, alternative action)

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)


def _expect_under_policy(mdp: TabularMDP, canonical: np.ndarray, values: np.ndarray):
    """E[values(s') | s, canonical(s)] for every state; values is (S, d)."""
    if mdp.next_state is not None:
        return values[mdp.next_state[np.arange(mdp.n_states), canonical]]
    rows = mdp.transition_matrix[np.arange(mdp.n_states), canonical]
    return rows @ values


def policy_feature_sums(mdp: TabularMDP, policy: Policy, horizon: int,
                        gamma: float) -> np.ndarray:
    """(S, d) discounted feature sums of following the canonical policy for
    ``horizon`` steps from each state."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    phi = mdp.features
    sums = phi.copy()
    for _ in range(horizon - 1):
        sums = phi + gamma * _expect_under_policy(mdp, policy.canonical, sums)
    return sums


def all_feature_expectations(mdp: TabularMDP, policy: Policy, horizon: int,
                             gamma: float) -> np.ndarray:
    """(S, A, d) array of mu[s, a]: take ``a`` at ``s``, follow the policy."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon == 1:
        return np.broadcast_to(
            mdp.features[:, None, :], (mdp.n_states, mdp.n_actions, mdp.n_features)
        ).copy()
    tail = policy_feature_sums(mdp, policy, horizon - 1, gamma)
    return mdp.features[:, None, :] + gamma * mdp.step_expectation(tail)


def feature_expectations(mdp: TabularMDP, policy: Policy, s: int, a: int,
                         horizon: int, gamma: float) -> FeatureExpectation:
    mu = all_feature_expectations(mdp, policy, horizon, gamma)[s, a]
    return FeatureExpectation(mu=mu, origin=(int(s), int(a)))


def _state_constraint_normals(mu: np.ndarray, s: int, a: int):
    """Non-zero unit normals mu[s, a] - mu[s, a'] for every alternative a'."""
    out = []
    for alt in range(mu.shape[1]):
        if alt == a:
            continue
        normal = mu[s, a] - mu[s, alt]
        norm = np.linalg.norm(normal)
        if norm > ZERO_NORMAL_TOL:
            out.append((normal / norm, alt))
    return out


def bec_constraints(mdp: TabularMDP, policy: Policy, demo: DemonstrationSet,
                    horizon: int, gamma: float) -> list[HalfspaceConstraint]:
    """Halfspace constraints pinning the canonical action of every
    demonstrated state against each alternative; normalized, zero normals
    dropped and near-duplicates (within 1e-9) merged."""
    mu = all_feature_expectations(mdp, policy, horizon, gamma)
    kept: list[HalfspaceConstraint] = []
    stack = np.empty((0, mdp.n_features))
    for s, a in demo.pairs:
        for normal, alt in _state_constraint_normals(mu, s, a):
            if len(kept) and np.min(np.linalg.norm(stack - normal, axis=1)) <= DUPLICATE_TOL:
                continue
            kept.append(HalfspaceConstraint(normal=normal, source=(s, a, alt)))
            stack = np.vstack([stack, normal])
    return kept


def prune_constraints(constraints: list[HalfspaceConstraint],
                      tol: float = REDUNDANCY_TOL) -> list[HalfspaceConstraint]:
    """Drop non-binding constraints.

    A constraint is redundant when minimizing ``c . w`` subject to the
    remaining constraints (and the box |w| <= 1) cannot go below ``-tol``.
    Constraints are tested in order against the surviving set, so mutually
    redundant near-duplicates cannot eliminate each other.
    """
    if len(constraints) <= 1:
        return list(constraints)
    normals = [c.normal for c in constraints]
    active = list(range(len(constraints)))
    for i in range(len(constraints)):
        others = [j for j in active if j != i]
        if not others:
            break
        res = linprog(
            c=normals[i],
            A_ub=-np.vstack([normals[j] for j in others]),
            b_ub=np.zeros(len(others)),
            bounds=(-1, 1),
            method="highs",
        )
        if res.status != 0:
            raise ExtractionError(f"constraint-pruning LP failed: {res.message}")
        if res.fun >= -tol:
            active.remove(i)
    return [constraints[i] for i in active]


def canonical_rollout(mdp: TabularMDP, policy: Policy, start: int, length: int,
                      rng: np.random.Generator | None = None) -> Trajectory:
    """Length-``length`` canonical-policy rollout; stochastic rows sampled."""
    steps = []
    s = int(start)
    for _ in range(length):
        a = int(policy.canonical[s])
        steps.append((s, a))
        if mdp.next_state is not None:
            s = int(mdp.next_state[s, a])
        else:
            s = int(rng.choice(mdp.n_states, p=mdp.transition_matrix[s, a]))
    return Trajectory(tuple(steps))


def _match_pruned(normals: list, pruned: np.ndarray) -> set[int]:
    """Indices of pruned constraints matched (within tolerance) by any normal."""
    hits = set()
    for normal, _alt in normals:
        d = np.linalg.norm(pruned - normal, axis=1)
        j = int(np.argmin(d))
        if d[j] <= 10 * DUPLICATE_TOL:
            hits.add(j)
    return hits


def scot_extract(mdp: TabularMDP, policy: Policy, demo: DemonstrationSet,
                 k: int, l: int, seed: int, horizon: int,
                 gamma: float | None = None, candidates=None,
                 irl_state_of=None) -> Summary:
    """Greedy set-cover selection of ``k/l`` canonical rollouts of length
    ``l`` whose visited states jointly cover the pruned constraint set;
    leftover budget is filled with uniformly random unused candidates.

    By default the candidate pool is one canonical rollout per demonstrated
    state on ``mdp`` itself.  Domains that summarize raw trajectories while
    inferring rewards on a discretized model pass their own ``candidates``
    plus ``irl_state_of`` mapping visited states onto ``mdp``'s states.
    """
    if l < 1 or k % l != 0:
        raise ExtractionError(f"budget k={k} must be a positive multiple of l={l}")
    gamma = mdp.discount if gamma is None else gamma
    n_needed = k // l
    rng = np.random.default_rng(seed)

    if candidates is None:
        candidates = [canonical_rollout(mdp, policy, s, l, rng) for s in demo.states]
    if any(len(t) != l for t in candidates):
        raise ExtractionError("candidate trajectories must have length l")
    if len(candidates) < n_needed:
        raise ExtractionError(
            f"only {len(candidates)} candidate trajectories for a budget of {n_needed}"
        )
    irl_state_of = irl_state_of or (lambda s: s)

    pruned = prune_constraints(bec_constraints(mdp, policy, demo, horizon, gamma))
    pruned_stack = np.vstack([c.normal for c in pruned]) if pruned else np.empty((0, mdp.n_features))

    mu = all_feature_expectations(mdp, policy, horizon, gamma)
    state_cover = {
        int(s): _match_pruned(_state_constraint_normals(mu, int(s), int(a)), pruned_stack)
        for s, a in demo.pairs
    }
    # a step only covers its state's constraints when it demonstrates that
    # state's canonical action (always true for canonical rollouts)
    canonical_of = dict(demo.pairs)
    coverage = []
    for traj in candidates:
        cov: set[int] = set()
        for s, a in traj.steps:
            c = irl_state_of(s)
            if canonical_of.get(c) == a:
                cov |= state_cover.get(c, set())
        coverage.append(cov)

    chosen: list[int] = []
    uncovered = set(range(len(pruned)))
    while uncovered and len(chosen) < n_needed:
        best, best_count = None, 0
        for i, cov in enumerate(coverage):
            if i in chosen:
                continue
            count = len(cov & uncovered)
            if count > best_count:
                best, best_count = i, count
        if best is None:
            break
        chosen.append(best)
        uncovered -= coverage[best]

    unused = [i for i in range(len(candidates)) if i not in chosen]
    n_fill = n_needed - len(chosen)
    if n_fill:
        chosen.extend(rng.choice(unused, size=n_fill, replace=False).tolist())
    return Summary(trajectories=tuple(candidates[i] for i in chosen))


@dataclass(frozen=True)
class MaxEntConfig:
    learning_rate: float
    rollout_horizon: int
    discount: float
    max_iters: int = 100
    stop_tol: float = 1e-5

    def __post_init__(self):
        if self.learning_rate <= 0 or self.rollout_horizon < 1 or self.discount < 0:
            raise ValueError("learning rate, horizon and discount must be positive")


def _soft_policies(mdp: TabularMDP, rewards: np.ndarray, horizon: int, gamma: float):
    """Backward soft-max DP over a finite horizon with time-decayed rewards.

    Step ``t`` uses reward ``gamma**t * r(s)`` so that, for deterministic
    dynamics, the induced path distribution is the Boltzmann distribution
    over discounted returns.  Returns (per-step policies, values[t] for
    t = 0..horizon with values[horizon] = 0).
    """
    values = [None] * (horizon + 1)
    values[horizon] = np.zeros(mdp.n_states)
    policies = [None] * horizon
    for t in reversed(range(horizon)):
        q = gamma**t * rewards[:, None] + mdp.step_expectation(values[t + 1])
        values[t] = logsumexp(q, axis=1)
        policies[t] = np.exp(q - values[t][:, None])
    return policies, values


def _propagate(mdp: TabularMDP, dist: np.ndarray, policy_t: np.ndarray) -> np.ndarray:
    flow = dist[:, None] * policy_t
    if mdp.next_state is not None:
        out = np.zeros(mdp.n_states)
        np.add.at(out, mdp.next_state.ravel(), flow.ravel())
        return out
    return np.einsum("sa,sat->t", flow, mdp.transition_matrix)


def empirical_feature_counts(mdp: TabularMDP, trajectories, gamma: float) -> np.ndarray:
    """Mean discounted feature sum over trajectories."""
    total = np.zeros(mdp.n_features)
    for traj in trajectories:
        for t, (s, _a) in enumerate(traj.steps):
            total += gamma**t * mdp.features[s]
    return total / len(trajectories)


def maxent_gradient(mdp: TabularMDP, trajectories, w: np.ndarray, horizon: int,
                    gamma: float) -> np.ndarray:
    """Ascent direction: empirical discounted state-feature counts of the
    observed trajectories minus the soft policy's expected counts over the
    same windows.  The soft policy looks ``horizon`` steps ahead; matching
    uses states only, so single-state demonstrations carry no action signal.
    """
    trajectories = list(trajectories)
    if any(len(t) > horizon for t in trajectories):
        raise FitError("trajectory longer than the rollout horizon")
    policies, _ = _soft_policies(mdp, mdp.features @ w, horizon, gamma)
    expected = _expected_window_counts(mdp, policies, trajectories, gamma)
    return empirical_feature_counts(mdp, trajectories, gamma) - expected


def _expected_window_counts(mdp: TabularMDP, policies, trajectories,
                            gamma: float) -> np.ndarray:
    starts_by_length: dict[int, np.ndarray] = {}
    share = 1.0 / len(trajectories)
    for traj in trajectories:
        dist = starts_by_length.setdefault(len(traj), np.zeros(mdp.n_states))
        dist[traj.start] += share
    counts = np.zeros(mdp.n_features)
    for length, start_dist in starts_by_length.items():
        dist = start_dist
        for t in range(length):
            counts += gamma**t * dist @ mdp.features
            if t + 1 < length:
                dist = _propagate(mdp, dist, policies[t])
    return counts


def maxent_log_likelihood(mdp: TabularMDP, trajectories, w: np.ndarray,
                          horizon: int, gamma: float) -> float:
    """Mean log-probability of the trajectories under the soft-max path
    distribution.  Defined for trajectories whose length equals the horizon,
    where (for deterministic dynamics) the feature-matching gradient is the
    exact derivative of this quantity."""
    trajectories = list(trajectories)
    if any(len(t) != horizon for t in trajectories):
        raise FitError("path likelihood needs trajectories of exactly the horizon length")
    rewards = mdp.features @ w
    _, values = _soft_policies(mdp, rewards, horizon, gamma)
    total = 0.0
    for traj in trajectories:
        ret = sum(gamma**t * rewards[s] for t, (s, _a) in enumerate(traj.steps))
        total += ret - values[0][traj.start]
    return total / len(trajectories)


class MaxEntIrl(BaseEstimator):
    """Maximum-entropy linear reward recovery from demonstrated trajectories.

    ``fit`` runs plain gradient ascent from w = 0, stopping early once the
    per-state rewards move less than ``stop_tol`` between iterations, then
    solves the MDP under the learned reward.  Follows the scikit-learn
    estimator protocol so configurations sweep cleanly.
    """

    def __init__(self, learning_rate=1.0, rollout_horizon=10, discount=None,
                 max_iters=100, stop_tol=1e-5):
        self.learning_rate = learning_rate
        self.rollout_horizon = rollout_horizon
        self.discount = discount
        self.max_iters = max_iters
        self.stop_tol = stop_tol

    def fit(self, mdp: TabularMDP, trajectories):
        trajectories = list(trajectories)
        if not trajectories:
            raise FitError("cannot fit on an empty summary")
        gamma = mdp.discount if self.discount is None else self.discount
        horizon = self.rollout_horizon
        if any(len(t) > horizon for t in trajectories):
            raise FitError("trajectory longer than the rollout horizon")
        empirical = empirical_feature_counts(mdp, trajectories, gamma)

        w = np.zeros(mdp.n_features)
        rewards_prev = np.zeros(mdp.n_states)
        for it in range(self.max_iters):
            policies, _ = _soft_policies(mdp, mdp.features @ w, horizon, gamma)
            grad = empirical - _expected_window_counts(mdp, policies,
                                                       trajectories, gamma)
            if not np.all(np.isfinite(grad)):
                raise FitError(f"non-finite gradient at iteration {it}")
            w = w + self.learning_rate * grad
            rewards = mdp.features @ w
            self.n_iter_ = it + 1
            if np.max(np.abs(rewards - rewards_prev)) < self.stop_tol:
                break
            rewards_prev = rewards

        self.weights_ = w
        _, self.policy_ = value_iteration(mdp, mdp.features @ w)
        return self

    def predict(self, states) -> np.ndarray:
        return self.policy_.canonical[np.asarray(states, dtype=np.int64)]


def maxent_reconstruct(mdp: TabularMDP, summary: Summary,
                       cfg: MaxEntConfig) -> tuple[np.ndarray, Policy]:
    """Recover reward weights from a summary and return them with the greedy
    policy of the induced reward."""
    est = MaxEntIrl(
        learning_rate=cfg.learning_rate,
        rollout_horizon=cfg.rollout_horizon,
        discount=cfg.discount,
        max_iters=cfg.max_iters,
        stop_tol=cfg.stop_tol,
    ).fit(mdp, summary.trajectories)
    return est.weights_, est.policy_
