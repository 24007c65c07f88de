"""Goal-conditioned deterministic gridworlds run in the reset-free deployment regime.

Cells are ``(row, col)`` tuples with row 0 at the top. Actions are indices into
:data:`ACTIONS`. A blocked move leaves the agent where it is.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

Cell = Tuple[int, int]

ACTIONS: Tuple[str, ...] = ("up", "down", "left", "right")
_DELTAS: Tuple[Cell, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))

MAX_ENUMERABLE_CELLS = 10_000

# 11x11, internal walls on row 5 and column 5, doorways at (5,2) (5,8) (2,5) (8,5)
FOUR_ROOMS_MAP = """\
###########
#S...#....#
#.........#
#....#....#
#....#....#
##.#####.##
#....#....#
#....#....#
#.........#
#....#...G#
###########
"""

BUILTIN_MAPS: Dict[str, str] = {"four_rooms": FOUR_ROOMS_MAP}


class GoalKind(str, Enum):
    FORWARD = "forward"
    RESET = "reset"

    def other(self) -> "GoalKind":
        return GoalKind.RESET if self is GoalKind.FORWARD else GoalKind.FORWARD


@dataclass(frozen=True)
class Goal:
    kind: GoalKind
    cell: Cell


@dataclass(frozen=True)
class EnvState:
    agent_cell: Cell
    global_step: int = 0


@dataclass(frozen=True)
class DeploymentConfig:
    hard_reset_frequency: int = 50_000
    total_train_steps: int = 50_000
    eval_episode_limit: int = 100

    def __post_init__(self) -> None:
        for name in ("hard_reset_frequency", "total_train_steps", "eval_episode_limit"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


def _move(cell: Cell, action: int) -> Cell:
    dr, dc = _DELTAS[action]
    return (cell[0] + dr, cell[1] + dc)


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    walls: FrozenSet[Cell]
    start_cell: Cell
    forward_goal_cell: Cell
    reset_goal_cell: Optional[Cell] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "walls", frozenset(self.walls))
        if self.reset_goal_cell is None:
            object.__setattr__(self, "reset_goal_cell", self.start_cell)
        problems = self._problems()
        if problems:
            raise ValueError(
                "Invalid grid layout:\n" + "\n".join(f"  - {p}" for p in problems)
            )

    def _problems(self) -> List[str]:
        problems: List[str] = []
        if self.width < 3 or self.height < 3:
            return [f"grid {self.width}x{self.height} is too small to enclose"]
        for r in range(self.height):
            for c in range(self.width):
                on_edge = r in (0, self.height - 1) or c in (0, self.width - 1)
                if on_edge and (r, c) not in self.walls:
                    problems.append(f"boundary cell {(r, c)} is not a wall")
        named = {
            "start": self.start_cell,
            "forward goal": self.forward_goal_cell,
            "reset goal": self.reset_goal_cell,
        }
        for label, cell in named.items():
            if not self.in_bounds(cell):  # type: ignore[arg-type]
                problems.append(f"{label} cell {cell} is outside the grid")
            elif cell in self.walls:
                problems.append(f"{label} cell {cell} is a wall")
        if problems:
            return problems
        reach = self.reachable_from(self.start_cell)
        if self.forward_goal_cell not in reach:
            problems.append("forward goal is not reachable from start")
        if self.reset_goal_cell not in reach:
            problems.append("reset goal is not reachable from start")
        if self.start_cell not in self.reachable_from(self.forward_goal_cell):
            problems.append("start is not reachable from forward goal")
        return problems

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.walls

    def reachable_from(self, origin: Cell) -> set:
        seen = {origin}
        queue = deque([origin])
        while queue:
            cell = queue.popleft()
            for a in range(len(ACTIONS)):
                nxt = _move(cell, a)
                if self.is_free(nxt) and nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen

    def free_cells(self) -> List[Cell]:
        return [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in self.walls
        ]


def parse_map(text: str) -> GridSpec:
    """Parse the plain-text map format.

    ``#`` wall, ``.`` free, ``S`` start, ``G`` forward goal and optionally ``R``
    for a reset goal distinct from the start. One row per line.
    """
    rows = [line.rstrip("\r") for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("map is empty")
    width = len(rows[0])
    walls = set()
    marks: Dict[str, Cell] = {}
    for r, line in enumerate(rows):
        if len(line) != width:
            raise ValueError(
                f"map row {r} has width {len(line)}, expected {width}"
            )
        for c, ch in enumerate(line):
            if ch == "#":
                walls.add((r, c))
            elif ch in "SGR":
                if ch in marks:
                    raise ValueError(f"map marks '{ch}' more than once")
                marks[ch] = (r, c)
            elif ch != ".":
                raise ValueError(f"unknown map character {ch!r} at {(r, c)}")
    for required in "SG":
        if required not in marks:
            raise ValueError(f"map has no '{required}' cell")
    return GridSpec(
        width=width,
        height=len(rows),
        walls=frozenset(walls),
        start_cell=marks["S"],
        forward_goal_cell=marks["G"],
        reset_goal_cell=marks.get("R"),
    )


def dump_map(spec: GridSpec) -> str:
    lines = []
    for r in range(spec.height):
        row = []
        for c in range(spec.width):
            cell = (r, c)
            if cell in spec.walls:
                row.append("#")
            elif cell == spec.start_cell:
                row.append("S")
            elif cell == spec.forward_goal_cell:
                row.append("G")
            elif cell == spec.reset_goal_cell:
                row.append("R")
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def load_grid(source: str) -> GridSpec:
    """Load a builtin layout by id or a map file by path."""
    if source in BUILTIN_MAPS:
        return parse_map(BUILTIN_MAPS[source])
    path = Path(source)
    if not path.is_file():
        available = ", ".join(sorted(BUILTIN_MAPS))
        raise ValueError(
            f"unknown grid '{source}': not a builtin ({available}) or a map file"
        )
    return parse_map(path.read_text(encoding="utf-8"))


def four_rooms() -> GridSpec:
    return parse_map(FOUR_ROOMS_MAP)


class GridWorld:
    """Deterministic goal-conditioned gridworld with rare hard resets."""

    num_actions = len(ACTIONS)

    def __init__(
        self,
        spec: GridSpec,
        deployment: Optional[DeploymentConfig] = None,
        rng: Optional[np.random.Generator] = None,
        root_seed: Optional[int] = None,
    ):
        self.spec = spec
        self.deployment = deployment or DeploymentConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.root_seed = root_seed
        self._free = spec.free_cells()
        self._cell_index = {cell: i for i, cell in enumerate(self._free)}
        # start and goal distributions are point masses, stored as tuples
        self.initial_cells: Tuple[Cell, ...] = (spec.start_cell,)
        self.goals: Tuple[Goal, ...] = (
            Goal(GoalKind.FORWARD, spec.forward_goal_cell),
            Goal(GoalKind.RESET, spec.reset_goal_cell),  # type: ignore[arg-type]
        )
        walls = np.zeros((spec.height, spec.width), dtype=np.uint8)
        for r, c in spec.walls:
            walls[r, c] = 1
        self._walls_plane = walls
        self.state = self.hard_reset()

    @property
    def forward_goal(self) -> Goal:
        return self.goals[0]

    @property
    def reset_goal(self) -> Goal:
        return self.goals[1]

    def goal(self, kind: GoalKind) -> Goal:
        return self.forward_goal if kind is GoalKind.FORWARD else self.reset_goal

    def free_cells(self) -> List[Cell]:
        return list(self._free)

    @property
    def num_cells(self) -> int:
        return len(self._free)

    def cell_index(self, cell: Cell) -> int:
        return self._cell_index[cell]

    def goal_index(self, goal: Goal) -> int:
        return 0 if goal.kind is GoalKind.FORWARD else 1

    def transition(self, cell: Cell, action: int) -> Cell:
        """Pure dynamics: the cell reached by taking ``action`` in ``cell``."""
        if not isinstance(action, (int, np.integer)) or not (
            0 <= int(action) < self.num_actions
        ):
            raise ValueError(
                f"invalid action {action!r}; expected an index in "
                f"0..{self.num_actions - 1}"
            )
        nxt = _move(cell, int(action))
        return nxt if self.spec.is_free(nxt) else cell

    def hard_reset(self) -> EnvState:
        i = int(self.rng.integers(len(self.initial_cells)))
        self.state = EnvState(agent_cell=self.initial_cells[i], global_step=0)
        return self.state

    def reset_episode(self) -> EnvState:
        """Return the agent to ρ without touching the hard-reset schedule."""
        i = int(self.rng.integers(len(self.initial_cells)))
        self.state = EnvState(
            agent_cell=self.initial_cells[i], global_step=self.state.global_step
        )
        return self.state

    def step(self, action: int) -> EnvState:
        nxt = self.transition(self.state.agent_cell, action)
        self.state = EnvState(agent_cell=nxt, global_step=self.state.global_step + 1)
        if self.state.global_step >= self.deployment.hard_reset_frequency:
            logging.getLogger(__name__).debug(
                "hard reset after %d steps", self.state.global_step
            )
            return self.hard_reset()
        return self.state

    def success(self, s: EnvState, g: Goal) -> bool:
        return s.agent_cell == g.cell

    def reward(self, s_next: EnvState, g: Goal) -> float:
        return 1.0 if self.success(s_next, g) else 0.0

    def encode(self, s: EnvState, g: Goal) -> np.ndarray:
        obs = np.zeros((3, self.spec.height, self.spec.width), dtype=np.uint8)
        obs[0][s.agent_cell] = 1
        obs[1] = self._walls_plane
        obs[2][g.cell] = 1
        return obs

    def decode(self, obs: np.ndarray) -> Tuple[Cell, Cell]:
        """Recover ``(agent_cell, goal_cell)`` from an encoded observation."""
        agent = np.argwhere(obs[0] == 1)
        goal = np.argwhere(obs[2] == 1)
        if len(agent) != 1 or len(goal) != 1:
            raise ValueError("observation must have exactly one agent and goal bit")
        return (int(agent[0][0]), int(agent[0][1])), (int(goal[0][0]), int(goal[0][1]))

    def enumerate_states(self) -> List[Tuple[Cell, Goal]]:
        size = self.spec.width * self.spec.height
        if size > MAX_ENUMERABLE_CELLS:
            raise ValueError(
                f"grid has {size} cells, above the enumeration limit "
                f"of {MAX_ENUMERABLE_CELLS}"
            )
        return [(cell, goal) for cell in self._free for goal in self.goals]

    def copy(self) -> "GridWorld":
        """A fresh, independent instance over the same layout."""
        return GridWorld(self.spec, self.deployment)


class ChainMDP(GridWorld):
    """A one-row corridor of ``length`` non-goal cells ending in the goal.

    Moving right always advances one cell; ``RIGHT`` is the action index.
    """

    RIGHT = ACTIONS.index("right")

    def __init__(
        self,
        length: int = 5,
        deployment: Optional[DeploymentConfig] = None,
        rng: Optional[np.random.Generator] = None,
        root_seed: Optional[int] = None,
    ):
        if length < 1:
            raise ValueError(f"chain length must be >= 1, got {length}")
        self.length = length
        super().__init__(corridor_spec(length), deployment, rng, root_seed)

    def copy(self) -> "ChainMDP":
        return ChainMDP(self.length, self.deployment)


def corridor_spec(length: int) -> GridSpec:
    width = length + 3
    row = "#S" + "." * (length - 1) + "G#"
    text = "\n".join(["#" * width, row, "#" * width])
    return parse_map(text)
