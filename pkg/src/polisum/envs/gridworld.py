"""Random colored gridworld: 9x9 cells, 5 colors, one-hot color features.

Actions are up/down/left/right/stay; moving off the grid leaves the agent
in place.  The reward of a transition is the color reward of the cell the
agent lands in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ConfigError, TabularMDP

REWARD_VALUES = (100.0, 10.0, 0.0, -10.0, -100.0)

# (drow, dcol) per action: up, down, left, right, stay
ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))
N_ACTIONS = 5

# neighbor order for the stacked imitation features: N, E, S, W
NEIGHBOR_DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass(frozen=True)
class GridworldSpec:
    seed: int
    width: int = 9
    height: int = 9
    n_colors: int = 5
    color_rewards: tuple = REWARD_VALUES

    def __post_init__(self):
        rewards = tuple(float(r) for r in self.color_rewards)
        if sorted(rewards) != sorted(REWARD_VALUES) or len(rewards) != self.n_colors:
            raise ConfigError(
                f"color_rewards must be a permutation of {REWARD_VALUES}, got {rewards}"
            )
        object.__setattr__(self, "color_rewards", rewards)


def build_gridworld(spec: GridworldSpec):
    """Return (mdp, irl_features, il_features).

    Colors are drawn i.i.d. uniform per cell from the spec seed.  IRL
    features are the cell's color one-hot; IL features stack the cell's
    one-hot with its four neighbors' (N, E, S, W), zero-padded at borders.
    The MDP's ``features`` are the IRL ones and its rewards derive from
    ``color_rewards``.
    """
    rng = np.random.default_rng(spec.seed)
    h, w, c = spec.height, spec.width, spec.n_colors
    n_states = h * w
    colors = rng.integers(0, c, size=n_states)

    irl = np.zeros((n_states, c))
    irl[np.arange(n_states), colors] = 1.0

    il = np.zeros((n_states, c * (1 + len(NEIGHBOR_DELTAS))))
    il[:, :c] = irl
    for s in range(n_states):
        r, col = divmod(s, w)
        for j, (dr, dc) in enumerate(NEIGHBOR_DELTAS):
            nr, nc = r + dr, col + dc
            if 0 <= nr < h and 0 <= nc < w:
                il[s, (j + 1) * c : (j + 2) * c] = irl[nr * w + nc]

    next_state = np.empty((n_states, N_ACTIONS), dtype=np.int64)
    for s in range(n_states):
        r, col = divmod(s, w)
        for a, (dr, dc) in enumerate(ACTION_DELTAS):
            nr, nc = r + dr, col + dc
            next_state[s, a] = nr * w + nc if 0 <= nr < h and 0 <= nc < w else s

    mdp = TabularMDP(
        n_states=n_states,
        n_actions=N_ACTIONS,
        features=irl,
        discount=0.95,
        start_distribution=np.full(n_states, 1.0 / n_states),
        next_state=next_state,
    )
    return mdp, irl, il


def state_rewards(spec: GridworldSpec, mdp: TabularMDP) -> np.ndarray:
    """Per-state reward: the color reward of the cell, i.e. w_true . phi(s)."""
    return mdp.features @ np.asarray(spec.color_rewards)
