"""Success critic: a Q-function whose reward and termination both come from f(s', g).

Its policy expectation is the agent's competency F(s, g) in [0, 1], which the
switching controllers consult.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .env import Cell, Goal, GridWorld
from .learner import Batch, QLearner, QTable


class CriticPolicy(str, Enum):
    GREEDY = "greedy"
    EPSILON_MIXTURE = "epsilon_mixture"


@dataclass(frozen=True)
class CriticConfig:
    lr: float = 0.1
    policy: CriticPolicy = CriticPolicy.GREEDY

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", CriticPolicy(self.policy))
        if not (0.0 <= self.lr <= 1.0):
            raise ValueError(f"critic lr must be in [0, 1], got {self.lr}")


class SuccessCritic:
    def __init__(
        self,
        env: GridWorld,
        learner: QLearner,
        config: Optional[CriticConfig] = None,
        root_seed: Optional[int] = None,
    ):
        self.env = env
        self.learner = learner
        self.config = config or CriticConfig()
        self.root_seed = root_seed
        # discount tied to the agent critic
        self.gamma_sc = learner.config.gamma
        self.target_sync_every = learner.config.target_sync_every
        self.table = QTable(
            env.num_cells, len(env.goals), env.num_actions, clip=(0.0, 1.0)
        )
        self.updates = 0
        # exploration rate used by the ε-mixture expectation
        self.epsilon = 0.0

    def _expected(
        self, qf: np.ndarray, cells: np.ndarray, goals: np.ndarray
    ) -> np.ndarray:
        greedy = np.argmax(self.learner.table.q[cells, goals], axis=-1)
        values = qf[cells, goals, greedy]
        if self.config.policy is CriticPolicy.EPSILON_MIXTURE:
            uniform = qf[cells, goals].mean(axis=-1)
            values = (1.0 - self.epsilon) * values + self.epsilon * uniform
        return values

    def targets(self, batch: Batch) -> np.ndarray:
        nxt = self._expected(self.table.target, batch.next_state, batch.goal)
        return np.where(batch.success, 1.0, self.gamma_sc * nxt)

    def update(self, batch: Batch) -> None:
        if len(batch) == 0:
            return
        self.table.apply(
            batch.state, batch.goal, batch.action, self.targets(batch), self.config.lr
        )
        self.updates += 1
        if self.updates % self.target_sync_every == 0:
            self.sync_target()

    def sync_target(self) -> None:
        self.table.sync()

    def competency(self, s: Cell, g: Goal) -> float:
        cells = np.array([self.env.cell_index(s)])
        goals = np.array([self.env.goal_index(g)])
        value = self._expected(self.table.q, cells, goals)[0]
        return float(min(1.0, max(0.0, value)))

    def competency_table(self) -> np.ndarray:
        """Competency for every (cell, goal) as a ``(cells, goals)`` array."""
        n_cells, n_goals, _ = self.table.q.shape
        cells, goals = np.meshgrid(
            np.arange(n_cells), np.arange(n_goals), indexing="ij"
        )
        values = self._expected(self.table.q, cells.ravel(), goals.ravel())
        return np.clip(values, 0.0, 1.0).reshape(n_cells, n_goals)
