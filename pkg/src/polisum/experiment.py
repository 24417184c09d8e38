"""Per-domain experiment wiring: builds the demonstration set, runs both
extractors, reconstructs with both user models, and evaluates the domain's
value protocol.

Demonstration-space conventions: gridworld and PAC-MAN use MDP state ids
directly.  HIV demonstration states are the unique states of a fresh
5-episode batch under the solved policy.  Reward inference runs on the
100-cluster discretization, but summaries always hold original batch
states: reward-side extraction selects l-step batch segments (which are the
policy's own rollouts on the deterministic simulator) and maps them onto
clusters only for constraint coverage and reward recovery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DemonstrationSet, Policy, Summary, TabularMDP, Trajectory
from .envs.gridworld import GridworldSpec, build_gridworld, state_rewards
from .envs.hiv import (
    EPISODE_STEPS,
    N_ACTIONS as HIV_ACTIONS,
    Episode,
    kmeans_discretize,
    log_features,
    perturbed_start,
    run_episode,
)
from .envs.pacman import STAY, PacmanSpec, build_pacman
from .il import KernelSpec, al_extract, fit_grf, grf_predict, harmonic_extension
from .irl import MaxEntConfig, canonical_rollout, maxent_reconstruct, scot_extract
from .solvers import estimate_value, fitted_q_iteration, value_iteration

DOMAINS = ("gridworld", "pacman", "hiv")


@dataclass(frozen=True)
class TaggedSummary:
    """A summary plus the space its states live in.  All extractors emit
    demonstration-state summaries; the tag is kept so callers can assert
    what they are holding."""

    summary: Summary
    space: str = "demo"


def _seed_ints(seed: int, n: int) -> list[int]:
    return [int(v) for v in np.random.SeedSequence([int(seed)]).generate_state(n)]


class _TabularExperiment:
    """Shared logic for domains whose demonstration states are MDP states;
    ``il_X`` rows align with ``demo.states``."""

    domain: str
    irl_horizon: int
    maxent_lr: float

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def demo_policy(self) -> Policy:
        return self.policy_star

    def maxent_config(self) -> MaxEntConfig:
        return MaxEntConfig(
            learning_rate=self.maxent_lr,
            rollout_horizon=self.irl_horizon,
            discount=self.mdp.discount,
        )

    # -- extraction -----------------------------------------------------
    def extract_irl(self, k: int, l: int, seed: int) -> TaggedSummary:
        summary = scot_extract(self.mdp, self.policy_star, self.demo, k, l,
                               seed, horizon=self.irl_horizon)
        return TaggedSummary(summary, "demo")

    def extract_il(self, k: int, kernel: KernelSpec) -> TaggedSummary:
        summary = al_extract(self.demo, self.il_X, k, kernel,
                             n_classes=self.n_actions)
        return TaggedSummary(summary, "demo")

    def random_summary(self, model: str, k: int, l: int, seed: int) -> TaggedSummary:
        l = 1 if model == "il" else l
        if l < 1 or k % l != 0 or k // l > len(self.demo):
            raise ValueError(
                f"cannot draw {k}/{l} rollouts from {len(self.demo)} states"
            )
        rng = np.random.default_rng(seed)
        starts = rng.choice(self.demo.states, size=k // l, replace=False)
        trajs = tuple(
            canonical_rollout(self.mdp, self.policy_star, s, l, rng) for s in starts
        )
        return TaggedSummary(Summary(trajectories=trajs), "demo")

    # -- reconstruction ----------------------------------------------------
    def unseen_of(self, tagged: TaggedSummary) -> list[int]:
        covered = set(tagged.summary.states())
        return [int(s) for s in self.demo.states if int(s) not in covered]

    def irl_space_summary(self, tagged: TaggedSummary) -> Summary:
        return tagged.summary

    def reconstruct_irl(self, tagged: TaggedSummary) -> Policy:
        _, policy = maxent_reconstruct(self.mdp, tagged.summary, self.maxent_config())
        return policy

    def irl_predictions(self, policy: Policy, states) -> np.ndarray:
        return policy.canonical[np.asarray(states, dtype=np.int64)]

    def reconstruct_il(self, tagged: TaggedSummary, kernel: KernelSpec):
        """(hard predictions over unseen states ascending, fitted model)."""
        covered = set(tagged.summary.states())
        y = np.full(len(self.demo), -1, dtype=np.int64)
        for i, s in enumerate(self.demo.states.tolist()):
            if s in covered:
                y[i] = self.demo.actions[i]
        model = fit_grf(self.il_X, y, self.n_actions, kernel,
                        node_states=self.demo.states)
        _, hard = grf_predict(model)
        return hard, model

    # -- value protocol -------------------------------------------------------
    def _step_rewards(self, s, a, s_next):
        raise NotImplementedError

    def _absorbed_action(self) -> int:
        return 0

    def value_of_actions(self, actions) -> float:
        return estimate_value(self.mdp, actions, self._step_rewards, horizon=10,
                              starts=self.demo.states)

    def value_star(self) -> float:
        return self.value_of_actions(self.policy_star.canonical)

    def value_of_irl(self, policy: Policy) -> float:
        return self.value_of_actions(policy.canonical)

    def value_of_il(self, tagged: TaggedSummary, predictions, unseen, model) -> float:
        """The imitation reconstruction acts with its hard predictions on
        unseen states and the demonstrated actions on summary states."""
        actions = np.full(self.mdp.n_states, self._absorbed_action(), dtype=np.int64)
        actions[self.demo.states] = self.demo.actions
        actions[np.asarray(unseen, dtype=np.int64)] = predictions
        return self.value_of_actions(actions)


class GridworldExperiment(_TabularExperiment):
    domain = "gridworld"
    irl_horizon = 10
    maxent_lr = 1.0

    def __init__(self, seed: int):
        self.seed = seed
        self.spec = GridworldSpec(seed=seed)
        self.mdp, self.irl_X, self.il_X = build_gridworld(self.spec)
        self.rewards = state_rewards(self.spec, self.mdp)
        self.values, self.policy_star = value_iteration(self.mdp, self.rewards)
        self.demo = DemonstrationSet.from_policy(self.policy_star)
        self.w_true = np.asarray(self.spec.color_rewards)

    def _step_rewards(self, s, a, s_next):
        return self.rewards[np.asarray(s_next)]


class PacmanExperiment(_TabularExperiment):
    domain = "pacman"
    irl_horizon = 10
    maxent_lr = 0.1

    def __init__(self, seed: int):
        self.seed = seed
        self.world = build_pacman(PacmanSpec(seed=seed))
        self.mdp = self.world.mdp
        self.policy_star = self.world.policy
        self.demo = DemonstrationSet.from_policy(
            self.policy_star, states=self.world.decision_ids
        )
        self.il_X = self.world.il_features[self.demo.states]

    def _step_rewards(self, s, a, s_next):
        return self.world.step_rewards(s, a, s_next)

    def _absorbed_action(self) -> int:
        return STAY


class HivExperiment:
    """HIV pipeline: fitted-Q policy on the simulator, a 5-episode
    demonstration batch, and the k-means cluster MDP for the reward side.

    The domain's regressor spec (200 trees, min leaf 5) smooths the greedy
    argmax so treatment decisions form coherent multi-step segments instead
    of flipping on regression noise at near-tied action values; fully-grown
    50-tree ensembles toggle drugs almost every step.
    """

    domain = "hiv"
    irl_horizon = 25
    maxent_lr = 0.01
    discount = 0.98

    def __init__(self, seed: int, n_train_episodes: int = 30, fqi_iters: int = 200,
                 fqi_trees: int = 200, fqi_leaf: int = 5,
                 n_demo_episodes: int = 5, n_value_episodes: int = 5,
                 episode_steps: int = EPISODE_STEPS, n_clusters: int = 100):
        self.seed = seed
        self.episode_steps = episode_steps
        self.fqi_trees = fqi_trees
        self.fqi_leaf = fqi_leaf
        train_seed, demo_seed, value_seed, km_seed = _seed_ints(seed, 4)

        self.ensemble = self._train_fqi(train_seed, n_train_episodes, fqi_iters)
        self.policy_star_fn = self._greedy_fn(self.ensemble)

        rng = np.random.default_rng(demo_seed)
        self.demo_episodes = [
            run_episode(self.policy_star_fn, perturbed_start(rng), episode_steps)
            for _ in range(n_demo_episodes)
        ]
        self.discretized = kmeans_discretize(self.demo_episodes, n_clusters, km_seed)

        states = np.vstack([ep.states[:-1] for ep in self.demo_episodes])
        actions = np.concatenate([ep.actions for ep in self.demo_episodes])
        _, first, inverse = np.unique(states, axis=0, return_index=True,
                                      return_inverse=True)
        keep = np.sort(first)
        self.demo_raw = states[keep]
        self.demo = DemonstrationSet(
            states=np.arange(len(keep)), actions=actions[keep]
        )
        # demo id of every batch position (episode-major), for segment slicing
        self._position_demo = np.searchsorted(keep, first[inverse])
        self._episode_lengths = [ep.n_steps for ep in self.demo_episodes]
        self.il_X = self.discretized.scaler.transform(self.demo_raw)
        self.demo_to_cluster = self.discretized.assign(self.demo_raw)

        mask = np.zeros((len(self.demo), HIV_ACTIONS), dtype=bool)
        mask[np.arange(len(self.demo)), self.demo.actions] = True
        self.demo_policy = Policy(canonical=self.demo.actions, optimal_mask=mask)

        self.mdp = self._cluster_mdp()
        self.cluster_policy = self._cluster_policy()
        self.irl_demo = DemonstrationSet(
            states=np.arange(self.discretized.n_clusters),
            actions=self.discretized.cluster_actions,
        )
        value_rng = np.random.default_rng(value_seed)
        self._value_starts = [
            perturbed_start(value_rng) for _ in range(n_value_episodes)
        ]
        self._value_star = None

    # -- construction helpers ------------------------------------------------
    def _train_fqi(self, seed: int, n_episodes: int, n_iters: int):
        """Batch collection in three rounds: random exploration first, then
        eps-greedy against the latest ensemble, refitting after each round."""
        rng = np.random.default_rng(seed)
        batch: list[Episode] = []
        ensemble = None
        for round_eps in np.array_split(np.arange(n_episodes), min(3, n_episodes)):
            for _ in round_eps:
                policy = self._exploration_fn(ensemble, rng, eps=0.15)
                batch.append(
                    run_episode(policy, perturbed_start(rng), self.episode_steps)
                )
            X = np.vstack([log_features(ep.states[:-1]) for ep in batch])
            A = np.concatenate([ep.actions for ep in batch])
            R = np.concatenate([ep.rewards for ep in batch])
            X2 = np.vstack([log_features(ep.states[1:]) for ep in batch])
            ensemble = fitted_q_iteration(X, A, R, X2, HIV_ACTIONS,
                                          gamma=self.discount, n_iters=n_iters,
                                          n_trees=self.fqi_trees,
                                          min_samples_leaf=self.fqi_leaf,
                                          seed=seed)
        return ensemble

    def _exploration_fn(self, ensemble, rng, eps: float):
        def act(x):
            if ensemble is None or rng.random() < eps:
                return int(rng.integers(HIV_ACTIONS))
            return int(ensemble.greedy_actions(log_features(x)[None, :])[0])

        return act

    def _greedy_fn(self, ensemble):
        def act(x):
            return int(ensemble.greedy_actions(log_features(x)[None, :])[0])

        return act

    def _cluster_mdp(self) -> TabularMDP:
        starts = np.zeros(self.discretized.n_clusters)
        offset = 0
        for ep in self.demo_episodes:
            starts[self.discretized.assignment[offset]] += 1.0
            offset += len(ep.states)
        return TabularMDP(
            n_states=self.discretized.n_clusters,
            n_actions=HIV_ACTIONS,
            features=self.discretized.centers,
            discount=self.discount,
            start_distribution=starts / starts.sum(),
            transition_matrix=self.discretized.empirical_transition,
        )

    def _cluster_policy(self) -> Policy:
        acts = self.discretized.cluster_actions
        mask = np.zeros((len(acts), HIV_ACTIONS), dtype=bool)
        mask[np.arange(len(acts)), acts] = True
        return Policy(canonical=acts, optimal_mask=mask)

    @property
    def n_actions(self) -> int:
        return HIV_ACTIONS

    def maxent_config(self) -> MaxEntConfig:
        return MaxEntConfig(learning_rate=self.maxent_lr,
                            rollout_horizon=self.irl_horizon,
                            discount=self.discount)

    # -- extraction -------------------------------------------------------
    def _segment_candidates(self, l: int) -> list:
        """Every l-step window of the demonstration episodes.  On the
        deterministic simulator these are exactly the solved policy's
        length-l rollouts from each batch state."""
        segments = []
        offset = 0
        for n_steps in self._episode_lengths:
            ids = self._position_demo[offset : offset + n_steps]
            acts = self.demo.actions[ids]
            for t in range(n_steps - l + 1):
                segments.append(Trajectory(tuple(
                    (int(ids[t + j]), int(acts[t + j])) for j in range(l)
                )))
            offset += n_steps
        return segments

    def extract_irl(self, k: int, l: int, seed: int) -> TaggedSummary:
        summary = scot_extract(
            self.mdp, self.cluster_policy, self.irl_demo, k, l, seed,
            horizon=self.irl_horizon,
            candidates=self._segment_candidates(l),
            irl_state_of=lambda s: int(self.demo_to_cluster[s]),
        )
        return TaggedSummary(summary, "demo")

    def extract_il(self, k: int, kernel: KernelSpec) -> TaggedSummary:
        summary = al_extract(self.demo, self.il_X, k, kernel,
                             n_classes=HIV_ACTIONS)
        return TaggedSummary(summary, "demo")

    def random_summary(self, model: str, k: int, l: int, seed: int) -> TaggedSummary:
        rng = np.random.default_rng(seed)
        if model == "il":
            states = rng.choice(self.demo.states, size=k, replace=False)
            trajs = tuple(
                Trajectory(((int(s), int(self.demo.action_of(int(s)))),))
                for s in states
            )
            return TaggedSummary(Summary(trajectories=trajs), "demo")
        if l < 1 or k % l != 0:
            raise ValueError("budget must be divisible by trajectory length")
        candidates = self._segment_candidates(l)
        picks = rng.choice(len(candidates), size=k // l, replace=False)
        return TaggedSummary(
            Summary(trajectories=tuple(candidates[int(i)] for i in picks)), "demo"
        )

    # -- reconstruction ------------------------------------------------------
    def unseen_of(self, tagged: TaggedSummary) -> list[int]:
        covered = set(tagged.summary.states())
        return [int(s) for s in self.demo.states if int(s) not in covered]

    def irl_space_summary(self, tagged: TaggedSummary) -> Summary:
        """Map a batch-state summary onto the cluster model for reward
        inference; everything else keeps the original states."""
        trajs = tuple(
            Trajectory(tuple((int(self.demo_to_cluster[s]), int(a))
                             for s, a in traj.steps))
            for traj in tagged.summary.trajectories
        )
        return Summary(trajectories=trajs)

    def reconstruct_irl(self, tagged: TaggedSummary) -> Policy:
        _, policy = maxent_reconstruct(self.mdp, self.irl_space_summary(tagged),
                                       self.maxent_config())
        return policy

    def irl_predictions(self, policy: Policy, states) -> np.ndarray:
        clusters = self.demo_to_cluster[np.asarray(states, dtype=np.int64)]
        return policy.canonical[clusters]

    def reconstruct_il(self, tagged: TaggedSummary, kernel: KernelSpec):
        covered = set(tagged.summary.states())
        y = np.where(
            np.isin(self.demo.states, list(covered)), self.demo.actions, -1
        ).astype(np.int64)
        model = fit_grf(self.il_X, y, HIV_ACTIONS, kernel,
                        node_states=self.demo.states)
        _, hard = grf_predict(model)
        return hard, model

    # -- value protocol --------------------------------------------------------
    def _episode_value(self, policy_fn) -> float:
        totals = [
            run_episode(policy_fn, start, self.episode_steps).total_reward
            for start in self._value_starts
        ]
        return float(np.mean(totals))

    def value_star(self) -> float:
        if self._value_star is None:
            self._value_star = self._episode_value(self.policy_star_fn)
        return self._value_star

    def value_of_irl(self, policy: Policy) -> float:
        def act(x):
            return int(policy.canonical[self.discretized.assign(x[None, :])[0]])

        return self._episode_value(act)

    def value_of_il(self, tagged: TaggedSummary, predictions, unseen, model) -> float:
        def act(x):
            scaled = self.discretized.scaler.transform(x)[0]
            return int(harmonic_extension(model, scaled[None, :])[0])

        return self._episode_value(act)


def make_experiment(domain: str, seed: int, **kwargs):
    if domain == "gridworld":
        return GridworldExperiment(seed, **kwargs)
    if domain == "pacman":
        return PacmanExperiment(seed, **kwargs)
    if domain == "hiv":
        return HivExperiment(seed, **kwargs)
    raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
