"""Goal-conditioned tabular Q-learning with replay, a hard-synced target and ε-greedy.

The training loop follows the usual DQN shape (initial collect, one update per
environment step, periodic target sync) over an exact table indexed
``[cell, goal, action]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .env import Cell, Goal, GridWorld


class BootstrapStrategy(str, Enum):
    TIMEOUT_NONTERMINAL = "timeout_nonterminal"
    TIMEOUT_TERMINAL = "timeout_terminal"


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95
    lr: float = 0.1
    batch_size: int = 128
    target_sync_every: int = 500
    initial_collect: int = 512
    replay_capacity: int = 50_000
    eps_init: float = 1.0
    eps_end: float = 0.1
    eps_decay_steps: int = 10_000
    bootstrap_strategy: BootstrapStrategy = BootstrapStrategy.TIMEOUT_NONTERMINAL

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "bootstrap_strategy", BootstrapStrategy(self.bootstrap_strategy)
        )
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not (0.0 <= self.lr <= 1.0):
            raise ValueError(f"lr must be in [0, 1], got {self.lr}")
        positive = (
            "batch_size",
            "target_sync_every",
            "replay_capacity",
            "eps_decay_steps",
        )
        for name in positive:
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.initial_collect < 0:
            raise ValueError(
                f"initial_collect must be >= 0, got {self.initial_collect}"
            )
        if not (0.0 <= self.eps_end <= self.eps_init <= 1.0):
            raise ValueError(
                "need 0 <= eps_end <= eps_init <= 1,"
                f" got {self.eps_end}, {self.eps_init}"
            )


@dataclass(frozen=True)
class Transition:
    state: Cell
    goal: Goal
    action: int
    reward: float
    next_state: Cell
    terminal: bool = False
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.terminal and self.truncated:
            raise ValueError("a transition cannot be both terminal and truncated")


@dataclass(frozen=True)
class Batch:
    """Column view of sampled transitions, as table indices."""

    state: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    terminal: np.ndarray
    truncated: np.ndarray
    success: np.ndarray

    def __len__(self) -> int:
        return len(self.state)


class ReplayBuffer:
    """Fixed-capacity ring of encoded transitions with uniform sampling."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.rng = rng
        self._state = np.zeros(capacity, dtype=np.int64)
        self._goal = np.zeros(capacity, dtype=np.int64)
        self._action = np.zeros(capacity, dtype=np.int64)
        self._reward = np.zeros(capacity, dtype=np.float64)
        self._next_state = np.zeros(capacity, dtype=np.int64)
        self._terminal = np.zeros(capacity, dtype=bool)
        self._truncated = np.zeros(capacity, dtype=bool)
        self._success = np.zeros(capacity, dtype=bool)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(
        self,
        state: int,
        goal: int,
        action: int,
        reward: float,
        next_state: int,
        terminal: bool,
        truncated: bool,
        success: bool,
    ) -> None:
        i = self._cursor
        self._state[i] = state
        self._goal[i] = goal
        self._action[i] = action
        self._reward[i] = reward
        self._next_state[i] = next_state
        self._terminal[i] = terminal
        self._truncated[i] = truncated
        self._success[i] = success
        # oldest entry is overwritten once full
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, n: int) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return self.rng.integers(0, self._size, size=n)

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch(
            state=self._state[idx],
            goal=self._goal[idx],
            action=self._action[idx],
            reward=self._reward[idx],
            next_state=self._next_state[idx],
            terminal=self._terminal[idx],
            truncated=self._truncated[idx],
            success=self._success[idx],
        )

    def sample(self, n: int) -> Batch:
        return self.gather(self.sample_indices(n))

    def contents(self) -> Batch:
        """Stored transitions, oldest first."""
        if self._size < self.capacity:
            idx = np.arange(self._size)
        else:
            idx = (np.arange(self.capacity) + self._cursor) % self.capacity
        return self.gather(idx)


class QTable:
    """Online and target action-value arrays of shape (cells, goals, actions)."""

    def __init__(
        self,
        num_cells: int,
        num_goals: int,
        num_actions: int,
        clip: Optional[tuple] = None,
    ):
        self.q = np.zeros((num_cells, num_goals, num_actions), dtype=np.float64)
        self.target = self.q.copy()
        self.clip = clip

    def sync(self) -> None:
        self.target = self.q.copy()

    def apply(
        self,
        state: np.ndarray,
        goal: np.ndarray,
        action: np.ndarray,
        targets: np.ndarray,
        lr: float,
    ) -> None:
        """One TD step per distinct entry; duplicates average their errors."""
        flat = np.ravel_multi_index((state, goal, action), self.q.shape)
        uniq, inverse, counts = np.unique(flat, return_inverse=True, return_counts=True)
        view = self.q.reshape(-1)
        errors = targets - view[flat]
        sums = np.bincount(inverse, weights=errors, minlength=len(uniq))
        updated = view[uniq] + lr * sums / counts
        if self.clip is not None:
            updated = np.clip(updated, *self.clip)
        view[uniq] = updated


class QLearner:
    """ε-greedy goal-conditioned Q-learning agent over a :class:`QTable`."""

    def __init__(
        self,
        env: GridWorld,
        config: AgentConfig,
        explore_rng: np.random.Generator,
        replay_rng: np.random.Generator,
        root_seed: Optional[int] = None,
    ):
        self.env = env
        self.config = config
        self.rng = explore_rng
        self.root_seed = root_seed
        self.table = QTable(env.num_cells, len(env.goals), env.num_actions)
        self.replay = ReplayBuffer(config.replay_capacity, replay_rng)
        self.updates = 0

    def epsilon(self, step: int) -> float:
        cfg = self.config
        frac = min(1.0, max(0, step) / cfg.eps_decay_steps)
        return cfg.eps_init + (cfg.eps_end - cfg.eps_init) * frac

    def q_values(self, cell: Cell, goal: Goal) -> np.ndarray:
        return self.table.q[self.env.cell_index(cell), self.env.goal_index(goal)]

    def greedy_action(self, cell: Cell, goal: Goal) -> int:
        # np.argmax breaks ties toward the lowest action index
        return int(np.argmax(self.q_values(cell, goal)))

    def act(self, cell: Cell, goal: Goal, step_count: int) -> int:
        """ε-greedy training action; greedy ties are broken at random."""
        if self.rng.random() < self.epsilon(step_count):
            return int(self.rng.integers(self.env.num_actions))
        q = self.q_values(cell, goal)
        best = np.flatnonzero(q == q.max())
        if len(best) == 1:
            return int(best[0])
        return int(self.rng.choice(best))

    def td_target(self, tr: Transition) -> float:
        if tr.terminal:
            return float(tr.reward)
        if (
            tr.truncated
            and self.config.bootstrap_strategy is BootstrapStrategy.TIMEOUT_TERMINAL
        ):
            return float(tr.reward)
        nxt = self.table.target[
            self.env.cell_index(tr.next_state), self.env.goal_index(tr.goal)
        ]
        return float(tr.reward + self.config.gamma * np.max(nxt))

    def td_targets(self, batch: Batch) -> np.ndarray:
        bootstrap = ~batch.terminal
        if self.config.bootstrap_strategy is BootstrapStrategy.TIMEOUT_TERMINAL:
            bootstrap = bootstrap & ~batch.truncated
        next_max = self.table.target[batch.next_state, batch.goal].max(axis=-1)
        return batch.reward + self.config.gamma * np.where(bootstrap, next_max, 0.0)

    def encode(self, tr: Transition) -> tuple:
        return (
            self.env.cell_index(tr.state),
            self.env.goal_index(tr.goal),
            int(tr.action),
            float(tr.reward),
            self.env.cell_index(tr.next_state),
            bool(tr.terminal),
            bool(tr.truncated),
            tr.next_state == tr.goal.cell,
        )

    def make_batch(self, transitions: Sequence[Transition]) -> Batch:
        cols = list(zip(*(self.encode(tr) for tr in transitions)))
        dtypes = (np.int64, np.int64, np.int64, np.float64, np.int64, bool, bool, bool)
        arrays = [np.asarray(col, dtype=dt) for col, dt in zip(cols, dtypes)]
        return Batch(*arrays)

    def observe(self, tr: Transition) -> None:
        self.replay.add(*self.encode(tr))

    def preload(self, transitions: Iterable[Transition]) -> None:
        count = 0
        for tr in transitions:
            self.observe(tr)
            count += 1
        logging.getLogger(__name__).info(
            "preloaded %d transitions, replay size %d", count, len(self.replay)
        )

    @property
    def ready(self) -> bool:
        return len(self.replay) >= max(1, self.config.initial_collect)

    def update(self, batch: Batch) -> None:
        if not self.ready or len(batch) == 0:
            return
        targets = self.td_targets(batch)
        self.table.apply(batch.state, batch.goal, batch.action, targets, self.config.lr)
        self.updates += 1
        if self.updates % self.config.target_sync_every == 0:
            self.sync_target()

    def sync_target(self) -> None:
        self.table.sync()

    def train_step(self) -> Optional[Batch]:
        """Sample, update and return one batch; None before initial collect."""
        if not self.ready:
            return None
        batch = self.replay.sample(self.config.batch_size)
        self.update(batch)
        return batch


def transitions_from_rows(rows: List[dict], goals: Sequence[Goal]) -> List[Transition]:
    """Build transitions from CSV-style rows (cell_x/cell_y, next_x/next_y, ...)."""
    by_kind = {g.kind.value: g for g in goals}
    out = []
    for row in rows:
        out.append(
            Transition(
                state=(int(row["cell_y"]), int(row["cell_x"])),
                goal=by_kind[str(row["goal_kind"])],
                action=int(row["action"]),
                reward=float(row["reward"]),
                next_state=(int(row["next_y"]), int(row["next_x"])),
                terminal=str(row["terminal"]).lower() in ("1", "true"),
                truncated=str(row["truncated"]).lower() in ("1", "true"),
            )
        )
    return out
