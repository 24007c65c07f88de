"""Run and sweep orchestration.

A run builds its components from four independent RNG streams spawned off the
root seed, trains, evaluates on an isolated environment copy and writes its
RunLog. A sweep enumerates a parameter grid and runs every (cell, seed) pair on
a thread pool; failures are recorded per run and the remaining runs continue.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import __version__
from .config import (
    ExperimentConfig,
    apply_overrides,
    config_hash,
    from_dict,
    set_path,
    to_dict,
)
from .env import GridWorld, dump_map, load_grid
from .errors import ConfigError
from .learner import QLearner, transitions_from_rows
from .metrics import evaluate
from .runlog import RunLog, read_csv
from .success_critic import SuccessCritic
from .switching import TrainingHooks, run_training

STREAMS = ("env", "exploration", "switching", "replay")

DEFAULT_GRID: Dict[str, List[Any]] = {
    "switching.beta": [0.0, 0.9, 0.95],
    "switching.min_length_fraction": [0.0, 0.25, 0.5, 0.75],
    "switching.zeta": [0.25, 0.5, 0.75, 1.0],
}


def spawn_streams(root_seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(root_seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


@dataclass
class Components:
    env: GridWorld
    learner: QLearner
    critic: SuccessCritic
    streams: Dict[str, np.random.Generator]


def build_components(config: ExperimentConfig, seed: int) -> Components:
    streams = spawn_streams(seed)
    grid = load_grid(config.env.grid)
    env = GridWorld(grid, config.deployment, rng=streams["env"], root_seed=seed)
    learner = QLearner(
        env, config.agent, streams["exploration"], streams["replay"], root_seed=seed
    )
    if config.preload:
        rows = read_csv(Path(config.preload))
        learner.preload(transitions_from_rows(rows, env.goals))
    critic = SuccessCritic(env, learner, config.critic, root_seed=seed)
    return Components(env, learner, critic, streams)


def run_experiment(
    config: ExperimentConfig, seed: int, run_dir: Optional[Path] = None
) -> RunLog:
    """Train one seed and, when ``run_dir`` is given, write its RunLog there."""
    comps = build_components(config, seed)
    eval_env = comps.env.copy()
    ev = config.evaluation

    def evaluator(step: int):
        return evaluate(
            eval_env,
            comps.learner,
            episodes=ev.episodes,
            limit=config.deployment.eval_episode_limit,
            train_step=step,
        )

    hooks = TrainingHooks(
        evaluator=evaluator if ev.every > 0 else None,
        eval_every=ev.every,
        snapshot_steps=ev.snapshot_steps,
        trace_switches=ev.trace_switches,
        options={
            "rc_threshold": config.controller.rc_threshold,
            "rc_competency_goal": config.controller.rc_competency_goal,
        },
    )
    log = run_training(
        comps.env,
        comps.learner,
        comps.critic,
        config.controller.kind,
        config.switching,
        config.deployment,
        comps.streams["switching"],
        seed,
        hooks,
    )
    if run_dir is not None:
        manifest = {
            "name": config.name,
            "seed": seed,
            "config": to_dict(config),
            "config_hash": config_hash(config),
            "code_version": __version__,
            "grid_map": dump_map(comps.env.spec),
        }
        log.write(Path(run_dir), comps.env, manifest)
        logging.getLogger(__name__).info("wrote run %s", run_dir)
    return log


@dataclass(frozen=True)
class SweepCell:
    index: int
    overrides: Tuple[Tuple[str, Any], ...]
    config: ExperimentConfig

    @property
    def label(self) -> str:
        return f"cell_{self.index:03d}"


@dataclass
class SweepSpec:
    """A base config mapping and a grid of dotted-path parameter values.

    Cells are enumerated lexicographically: parameter paths sorted, then the
    value index of each path, the last path varying fastest.
    """

    base: Dict[str, Any]
    grid: Dict[str, List[Any]] = field(default_factory=lambda: dict(DEFAULT_GRID))

    @classmethod
    def from_mapping(
        cls, data: Dict[str, Any], overrides: Iterable[str] = ()
    ) -> "SweepSpec":
        """Split a merged YAML mapping into base config and ``sweep.grid``."""
        data = dict(data)
        sweep = data.pop("sweep", None) or {}
        if not isinstance(sweep, dict) or set(sweep) - {"grid"}:
            raise ConfigError(["sweep: expected a mapping with a single 'grid' key"])
        grid = sweep.get("grid")
        base = apply_overrides(data, overrides)
        return cls(base=base, grid=dict(DEFAULT_GRID if grid is None else grid))

    def cells(self) -> List[SweepCell]:
        problems = []
        for path, values in self.grid.items():
            if not isinstance(values, list) or not values:
                problems.append(f"sweep.grid.{path}: expected a non-empty list")
        if problems:
            raise ConfigError(problems, header="Invalid sweep grid")
        paths = sorted(self.grid)
        cells = []
        for i, combo in enumerate(
            itertools.product(*(range(len(self.grid[p])) for p in paths))
        ):
            overrides = tuple((p, self.grid[p][j]) for p, j in zip(paths, combo))
            data = self.base
            for path, value in overrides:
                data = set_path(data, path, value)
            try:
                config = from_dict(data)
            except ConfigError as e:
                raise ConfigError(
                    [f"cell_{i:03d} {dict(overrides)}: {p}" for p in e.problems],
                    header="Invalid sweep cell",
                ) from e
            cells.append(SweepCell(i, overrides, config))
        return cells


class RunStatus:
    cell: str
    seed: int
    state: str
    started_at: Optional[float]
    ended_at: Optional[float]
    error: Optional[str]

    def __init__(self, cell: str, seed: int):
        self.cell = cell
        self.seed = seed
        self.state = "pending"
        self.started_at = None
        self.ended_at = None
        self.error = None


class SweepStatus:
    runs: Dict[Tuple[str, int], RunStatus]
    started_at: Optional[float]
    ended_at: Optional[float]

    def __init__(self):
        self.runs = {}
        self.started_at = None
        self.ended_at = None

    def cell_state(self, cell: str) -> str:
        states = {st.state for (c, _), st in self.runs.items() if c == cell}
        if "failed" in states:
            return "failed"
        if states == {"succeeded"}:
            return "succeeded"
        return "running" if "running" in states else "pending"


class SweepRunner:
    def __init__(
        self, spec: SweepSpec, output_root: Path, parallelism: int = 1
    ):
        if parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {parallelism}")
        self.spec = spec
        self.output_root = Path(output_root)
        self.parallelism = parallelism
        self.cells = spec.cells()
        self.status = SweepStatus()
        self.logs: Dict[Tuple[str, int], RunLog] = {}
        # guards status and logs when runs finish concurrently
        self._lock = threading.RLock()

    def _update_status(
        self, key: Tuple[str, int], state: Optional[str] = None, **kwargs
    ) -> None:
        with self._lock:
            st = self.status.runs.get(key)
            if st:
                if state is not None:
                    st.state = state
                for k, v in kwargs.items():
                    setattr(st, k, v)

    def run_dir(self, cell: SweepCell, seed: int) -> Path:
        return self.output_root / cell.label / f"seed_{seed}"

    def run(self) -> List[RunLog]:
        """Execute every (cell, seed); return completed logs in enumeration order."""
        logger = logging.getLogger(__name__)
        jobs = [(cell, seed) for cell in self.cells for seed in cell.config.seeds]
        with self._lock:
            self.status.started_at = time.time()
            for cell, seed in jobs:
                self.status.runs[(cell.label, seed)] = RunStatus(cell.label, seed)
        logger.info(
            "sweep starting: %d cells, %d runs, parallelism %d",
            len(self.cells),
            len(jobs),
            self.parallelism,
        )

        def task(cell: SweepCell, seed: int) -> None:
            key = (cell.label, seed)
            logger.info("starting run: %s seed %d", cell.label, seed)
            self._update_status(key, state="running", started_at=time.time())
            try:
                log = run_experiment(cell.config, seed, self.run_dir(cell, seed))
            except Exception as e:
                self._update_status(
                    key, state="failed", error=str(e), ended_at=time.time()
                )
                logger.exception("run failed: %s seed %d", cell.label, seed)
                return
            with self._lock:
                self.logs[key] = log
            self._update_status(key, state="succeeded", ended_at=time.time())
            logger.info("run succeeded: %s seed %d", cell.label, seed)

        with ThreadPoolExecutor(max_workers=self.parallelism) as executor:
            futures: Dict[Future, Tuple[str, int]] = {
                executor.submit(task, cell, seed): (cell.label, seed)
                for cell, seed in jobs
            }
            for f in as_completed(futures):
                f.result()

        with self._lock:
            self.status.ended_at = time.time()
        self.write_index()
        failed = [k for k, st in self.status.runs.items() if st.state == "failed"]
        if failed:
            logger.warning("sweep finished with %d failed runs", len(failed))
        return [
            self.logs[(cell.label, seed)]
            for cell, seed in jobs
            if (cell.label, seed) in self.logs
        ]

    def index(self) -> Dict[str, Any]:
        """Execution-order independent summary of the sweep."""
        cells = []
        for cell in self.cells:
            runs = []
            for seed in cell.config.seeds:
                st = self.status.runs[(cell.label, seed)]
                runs.append(
                    {
                        "seed": seed,
                        "dir": f"{cell.label}/seed_{seed}",
                        "status": st.state,
                        "error": st.error,
                    }
                )
            cells.append(
                {
                    "cell": cell.label,
                    "overrides": {p: v for p, v in cell.overrides},
                    "config_hash": config_hash(cell.config),
                    "status": self.status.cell_state(cell.label),
                    "runs": runs,
                }
            )
        grid = {p: self.spec.grid[p] for p in sorted(self.spec.grid)}
        return {"grid": grid, "cells": cells}

    def write_index(self) -> Path:
        self.output_root.mkdir(parents=True, exist_ok=True)
        path = self.output_root / "sweep.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.index(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path
