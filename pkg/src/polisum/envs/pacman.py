"""Small PAC-MAN grid: one pellet walled on three sides, one deterministic
chasing ghost.

The joint state is (pacman cell, ghost cell, pellet present).  Pacman moves
first (bumping walls leaves it in place), the pellet is consumed on arrival,
then the ghost takes the move that most reduces Manhattan distance to
pacman, preferring horizontal moves on ties.  States with pacman caught or
the pellet gone are absorbing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..core import ConfigError, Policy, TabularMDP

# (dx, dy) per action: up, down, left, right, stay
ACTION_DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))
N_ACTIONS = 5
STAY = 4

# feature/neighbor order: N, E, S, W
DIRECTION_DELTAS = ((0, -1), (1, 0), (0, 1), (-1, 0))

# ghost move preference on distance ties: horizontal first
GHOST_ORDER = ((1, 0), (-1, 0), (0, -1), (0, 1), (0, 0))

UNREACHABLE = 10**6


@dataclass(frozen=True)
class PacmanSpec:
    seed: int = 0
    width: int = 6
    height: int = 7
    pellet_pos: tuple = (2, 3)
    wall_cells: frozenset = frozenset({(2, 2), (1, 3), (3, 3)})
    ghost_start: tuple = (0, 0)
    pacman_starts: tuple = ()  # empty = every free cell except pellet and ghost

    def __post_init__(self):
        walls = frozenset(tuple(c) for c in self.wall_cells)
        object.__setattr__(self, "wall_cells", walls)
        px, py = self.pellet_pos
        if not (0 < px < self.width - 1 and 0 < py < self.height - 1):
            raise ConfigError("pellet must sit in the grid interior")
        sides = sum(
            (px + dx, py + dy) in walls for dx, dy in DIRECTION_DELTAS
        )
        if sides != 3:
            raise ConfigError(f"pellet must be walled on exactly 3 sides, found {sides}")
        if self.pellet_pos in walls or self.ghost_start in walls:
            raise ConfigError("pellet and ghost cannot start inside walls")
        starts = tuple(tuple(c) for c in self.pacman_starts) or tuple(
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in walls and (x, y) != self.pellet_pos
            and (x, y) != self.ghost_start
        )
        for c in starts:
            if c in walls or c == self.pellet_pos:
                raise ConfigError(f"invalid pacman start {c}")
        object.__setattr__(self, "pacman_starts", starts)


class _Grid:
    def __init__(self, spec: PacmanSpec):
        self.spec = spec
        self.free = [
            (x, y)
            for y in range(spec.height)
            for x in range(spec.width)
            if (x, y) not in spec.wall_cells
        ]
        self.food_dist = self._bfs_from(spec.pellet_pos)

    def in_grid(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.spec.width and 0 <= y < self.spec.height

    def passable(self, cell) -> bool:
        return self.in_grid(cell) and cell not in self.spec.wall_cells

    def _bfs_from(self, origin) -> dict:
        dist = {origin: 0}
        queue = deque([origin])
        while queue:
            x, y = queue.popleft()
            for dx, dy in DIRECTION_DELTAS:
                nxt = (x + dx, y + dy)
                if self.passable(nxt) and nxt not in dist:
                    dist[nxt] = dist[(x, y)] + 1
                    queue.append(nxt)
        return dist

    def ghost_move(self, ghost, pacman):
        """Deterministic chase step: legal move minimizing Manhattan distance,
        horizontal moves preferred on ties."""
        best, best_d = ghost, None
        for dx, dy in GHOST_ORDER:
            cand = (ghost[0] + dx, ghost[1] + dy)
            if not self.passable(cand) and cand != ghost:
                continue
            d = abs(cand[0] - pacman[0]) + abs(cand[1] - pacman[1])
            if best_d is None or d < best_d:
                best, best_d = cand, d
        return best

    def step(self, state, action):
        """Joint transition; absorbing once caught or once the pellet is gone."""
        pac, ghost, pellet = state
        if pac == ghost or not pellet:
            return state
        dx, dy = ACTION_DELTAS[action]
        target = (pac[0] + dx, pac[1] + dy)
        if not self.passable(target):
            target = pac
        if target == ghost:
            return (target, ghost, pellet)
        pellet_after = pellet and target != self.spec.pellet_pos
        new_ghost = self.ghost_move(ghost, target)
        return (target, new_ghost, pellet_after)


def _is_dead(state) -> bool:
    return state[0] == state[1]


def _is_terminal(state) -> bool:
    return _is_dead(state) or not state[2]


@dataclass
class PacmanDomain:
    """Enumerated joint MDP plus the safe shortest-path policy."""

    spec: PacmanSpec
    mdp: TabularMDP
    irl_features: np.ndarray
    il_features: np.ndarray
    policy: Policy
    states: list  # state id -> (pacman, ghost, pellet)
    decision_ids: np.ndarray  # alive states with the pellet present
    _index: dict = field(repr=False, default_factory=dict)

    def state_id(self, state) -> int:
        return self._index[state]

    def step_rewards(self, s, a, s_next) -> np.ndarray:
        """Event rewards per transition: -1 per live step, +10 for eating,
        -500 for getting caught, 0 once absorbed."""
        s = np.asarray(s)
        s_next = np.asarray(s_next)
        live = ~self._terminal[s]
        ate = self._pellet[s] & ~self._pellet[s_next]
        died = ~self._dead[s] & self._dead[s_next]
        return live * (-1.0 + 10.0 * ate - 500.0 * died)

    def __post_init__(self):
        self._index = {st: i for i, st in enumerate(self.states)}
        self._dead = np.array([_is_dead(st) for st in self.states])
        self._pellet = np.array([bool(st[2]) for st in self.states])
        self._terminal = self._dead | ~self._pellet


def _enumerate_states(grid: _Grid, spec: PacmanSpec):
    """Reachable closure of the joint dynamics from every start, any action."""
    seen = set()
    queue = deque()
    for pac in spec.pacman_starts:
        st = (pac, spec.ghost_start, True)
        if st not in seen:
            seen.add(st)
            queue.append(st)
    while queue:
        st = queue.popleft()
        if _is_terminal(st):
            continue
        for a in range(N_ACTIONS):
            nxt = grid.step(st, a)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return sorted(seen, key=lambda s: (s[0], s[1], s[2]))


def _safe_policy(grid, states, index, next_ids):
    """Backward BFS over the joint dynamics, never entering caught states.
    Optimal actions lead to a fastest safe pellet capture; states with no
    safe route fall back to any non-fatal action."""
    n = len(states)
    dist = np.full(n, UNREACHABLE, dtype=np.int64)
    preds = [[] for _ in range(n)]
    queue = deque()
    for i, st in enumerate(states):
        if not st[2] and not _is_dead(st):
            dist[i] = 0
            queue.append(i)
        if not _is_terminal(st):
            for a in range(N_ACTIONS):
                j = next_ids[i, a]
                if not _is_dead(states[j]):
                    preds[j].append(i)
    while queue:
        j = queue.popleft()
        for i in preds[j]:
            if dist[i] == UNREACHABLE:
                dist[i] = dist[j] + 1
                queue.append(i)

    canonical = np.full(n, STAY, dtype=np.int64)
    mask = np.zeros((n, N_ACTIONS), dtype=bool)
    for i, st in enumerate(states):
        if _is_terminal(st):
            mask[i, :] = True  # behaviorally identical self-loops
            continue
        succ = next_ids[i]
        alive = np.array([not _is_dead(states[j]) for j in succ])
        succ_dist = np.where(alive, dist[succ], UNREACHABLE + 1)
        best = succ_dist.min()
        if best <= UNREACHABLE:
            mask[i] = succ_dist == best
        else:
            mask[i] = alive if alive.any() else np.ones(N_ACTIONS, dtype=bool)
        canonical[i] = int(np.nonzero(mask[i])[0][0])
    return Policy(canonical=canonical, optimal_mask=mask)


def _features(grid: _Grid, spec: PacmanSpec, states):
    """IRL: [maze distance to food, food consumed, caught by ghost].
    IL: food-direction one-hot (N, E, S, W) plus per-direction collision
    indicators (wall, border or the ghost's cell)."""
    n = len(states)
    irl = np.zeros((n, 3))
    il = np.zeros((n, 8))
    for i, (pac, ghost, pellet) in enumerate(states):
        consumed = not pellet
        irl[i, 0] = 0.0 if consumed else grid.food_dist.get(pac, UNREACHABLE)
        irl[i, 1] = float(consumed)
        irl[i, 2] = float(pac == ghost)
        if pellet:
            d_here = grid.food_dist.get(pac)
            if d_here is not None and d_here > 0:
                for j, (dx, dy) in enumerate(DIRECTION_DELTAS):
                    nxt = (pac[0] + dx, pac[1] + dy)
                    if grid.passable(nxt) and grid.food_dist.get(nxt, UNREACHABLE) == d_here - 1:
                        il[i, j] = 1.0
                        break
        for j, (dx, dy) in enumerate(DIRECTION_DELTAS):
            nxt = (pac[0] + dx, pac[1] + dy)
            if not grid.passable(nxt) or nxt == ghost:
                il[i, 4 + j] = 1.0
    return irl, il


def build_pacman(spec: PacmanSpec) -> PacmanDomain:
    grid = _Grid(spec)
    for start in spec.pacman_starts:
        if start not in grid.food_dist:
            raise ConfigError(f"pellet unreachable from pacman start {start}")
    if spec.ghost_start not in grid.food_dist and spec.ghost_start not in grid.free:
        raise ConfigError("ghost start must be a free cell")

    states = _enumerate_states(grid, spec)
    index = {st: i for i, st in enumerate(states)}
    n = len(states)
    next_ids = np.empty((n, N_ACTIONS), dtype=np.int64)
    for i, st in enumerate(states):
        for a in range(N_ACTIONS):
            next_ids[i, a] = index[grid.step(st, a)]

    irl, il = _features(grid, spec, states)

    start_ids = [index[(p, spec.ghost_start, True)] for p in spec.pacman_starts]
    start_dist = np.zeros(n)
    start_dist[start_ids] = 1.0 / len(start_ids)

    mdp = TabularMDP(
        n_states=n,
        n_actions=N_ACTIONS,
        features=irl,
        discount=0.95,
        start_distribution=start_dist,
        next_state=next_ids,
    )
    policy = _safe_policy(grid, states, index, next_ids)
    decision_ids = np.array(
        [i for i, st in enumerate(states) if not _is_terminal(st)], dtype=np.int64
    )
    return PacmanDomain(
        spec=spec,
        mdp=mdp,
        irl_features=irl,
        il_features=il,
        policy=policy,
        states=states,
        decision_ids=decision_ids,
    )
