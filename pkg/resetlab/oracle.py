"""Exact ground truth for enumerable gridworlds: BFS distances and value iteration.

Rewards follow the terminate-on-entry convention: entering the goal pays 1 and
ends the episode, so V*(goal) = 0 and V*(s) = gamma ** (dist(s) - 1).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from .env import Cell, Goal, GridWorld

DEFAULT_TOLERANCE = 1e-10
MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class DistanceTable:
    goal: Goal
    dist: Dict[Cell, Optional[int]]

    def __getitem__(self, cell: Cell) -> Optional[int]:
        return self.dist[cell]


@dataclass(frozen=True)
class ValueTable:
    goal: Goal
    values: Dict[Cell, float]
    gamma: float
    tolerance: float

    def __getitem__(self, cell: Cell) -> float:
        return self.values[cell]

    def bellman_residual(self, env: GridWorld) -> float:
        """Largest violation of the Bellman optimality equation over non-goal cells."""
        worst = 0.0
        for cell, v in self.values.items():
            if cell == self.goal.cell:
                continue
            best = max(
                _backup(env, cell, a, self.goal, self.gamma, self.values)
                for a in range(env.num_actions)
            )
            worst = max(worst, abs(best - v))
        return worst


def _backup(
    env: GridWorld,
    cell: Cell,
    action: int,
    goal: Goal,
    gamma: float,
    values: Dict[Cell, float],
) -> float:
    nxt = env.transition(cell, action)
    if nxt == goal.cell:
        return 1.0
    return gamma * values[nxt]


def shortest_paths(env: GridWorld, g: Goal) -> DistanceTable:
    """Minimum number of steps from every free cell to ``g`` (None if unreachable)."""
    free = env.free_cells()
    preds: Dict[Cell, List[Cell]] = {cell: [] for cell in free}
    for cell in free:
        for a in range(env.num_actions):
            nxt = env.transition(cell, a)
            if nxt != cell:
                preds[nxt].append(cell)
    dist: Dict[Cell, Optional[int]] = {cell: None for cell in free}
    dist[g.cell] = 0
    queue = deque([g.cell])
    while queue:
        cell = queue.popleft()
        for p in preds[cell]:
            if dist[p] is None:
                dist[p] = dist[cell] + 1  # type: ignore[operator]
                queue.append(p)
    return DistanceTable(goal=g, dist=dist)


def _dynamics(env: GridWorld, g: Goal):
    free = env.free_cells()
    index = {cell: i for i, cell in enumerate(free)}
    nxt = np.array(
        [
            [index[env.transition(cell, a)] for a in range(env.num_actions)]
            for cell in free
        ],
        dtype=np.int64,
    )
    enters_goal = nxt == index[g.cell]
    return free, index, nxt, enters_goal


def value_iteration(
    env: GridWorld,
    g: Goal,
    gamma: float,
    tolerance: float = DEFAULT_TOLERANCE,
) -> ValueTable:
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    free, index, nxt, enters_goal = _dynamics(env, g)
    reward = enters_goal.astype(np.float64)
    v = np.zeros(len(free))
    goal_i = index[g.cell]
    for _ in range(MAX_SWEEPS):
        q = reward + gamma * np.where(enters_goal, 0.0, v[nxt])
        new_v = q.max(axis=1)
        new_v[goal_i] = 0.0
        delta = float(np.max(np.abs(new_v - v)))
        v = new_v
        if delta < tolerance:
            break
    else:
        raise RuntimeError(f"value iteration did not converge in {MAX_SWEEPS} sweeps")
    return ValueTable(
        goal=g,
        values={cell: float(v[i]) for cell, i in index.items()},
        gamma=gamma,
        tolerance=tolerance,
    )


def optimal_q(env: GridWorld, g: Goal, gamma: float) -> np.ndarray:
    """Q* as a ``(num_cells, num_actions)`` array in ``env.free_cells()`` order."""
    vt = value_iteration(env, g, gamma)
    free, _, nxt, enters_goal = _dynamics(env, g)
    v = np.array([vt.values[cell] for cell in free])
    return enters_goal.astype(np.float64) + gamma * np.where(enters_goal, 0.0, v[nxt])


def optimal_competency(dist: int, gamma_sc: float) -> float:
    """Fixed point of the success-critic recursion under an optimal policy."""
    if dist <= 0:
        raise ValueError(f"competency is defined for dist >= 1, got {dist}")
    return gamma_sc ** (dist - 1)


def oracle_rows(env: GridWorld, gamma: float) -> List[Dict[str, Any]]:
    """Rows for the oracle CSV: one per (cell, goal) in enumeration order."""
    tables = {}
    for goal in env.goals:
        tables[goal.kind] = (
            shortest_paths(env, goal),
            value_iteration(env, goal, gamma),
        )
    rows = []
    for cell, goal in env.enumerate_states():
        dt, vt = tables[goal.kind]
        d = dt[cell]
        rows.append(
            {
                "cell_x": cell[1],
                "cell_y": cell[0],
                "goal_kind": goal.kind.value,
                "dist": "" if d is None else d,
                "v_star": vt[cell],
                "f_star": optimal_competency(d, gamma) if d else "",
            }
        )
    return rows
