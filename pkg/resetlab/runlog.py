"""In-memory run records and their on-disk CSV/JSON layout.

A run directory holds::

    manifest.json        config, config hash, seed, code version, status
    training.csv         one row per environment step
    eval.csv             one row per evaluation episode
    switch_trace.csv     competency queries made by the switching rule
    q_table.csv          final agent Q-table
    competency.csv       final success-critic table
    snapshots/           per-cell max Q at requested steps
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .env import ACTIONS, Cell, GridWorld

if TYPE_CHECKING:
    from .metrics import EvalRecord

TRAINING_FIELDS = [
    "step",
    "cell_x",
    "cell_y",
    "goal_kind",
    "traj_len_at_boundary",
    "switch_reason",
    "epsilon",
    "replay_size",
]
EVAL_FIELDS = ["train_step", "episode", "return", "success", "length"]
TRACE_FIELDS = ["step", "t", "c", "lambda", "drew", "reason"]
TABLE_FIELDS = ["cell_x", "cell_y", "goal_kind", "action", "q"]
SNAPSHOT_FIELDS = ["cell_x", "cell_y", "goal_kind", "max_q"]


def fmt(x: Optional[float]) -> str:
    return "" if x is None else format(float(x), ".12g")


@dataclass(frozen=True)
class TrainingRow:
    step: int
    cell: Cell
    goal_kind: str
    traj_len: Optional[int]
    reason: str
    epsilon: float
    replay_size: int


@dataclass(frozen=True)
class TraceRow:
    step: int
    t: int
    competency: float
    probability: Optional[float]
    draw: Optional[float]
    reason: str


@dataclass
class RunLog:
    root_seed: int
    training: List[TrainingRow] = field(default_factory=list)
    evaluations: List["EvalRecord"] = field(default_factory=list)
    trace: List[TraceRow] = field(default_factory=list)
    q_snapshots: Dict[int, np.ndarray] = field(default_factory=dict)
    q_table: Optional[np.ndarray] = None
    competency_table: Optional[np.ndarray] = None
    manifest: Dict[str, Any] = field(default_factory=dict)
    run_dir: Optional[Path] = None

    def trajectory_lengths(self) -> List[int]:
        return [row.traj_len for row in self.training if row.traj_len is not None]

    def write(self, run_dir: Path, env: GridWorld, manifest: Dict[str, Any]) -> Path:
        """Write every file, flagging the manifest partial if any write fails."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        writers = {
            "training.csv": lambda p: _write_csv(
                p, TRAINING_FIELDS, (_training_record(r) for r in self.training)
            ),
            "eval.csv": lambda p: _write_csv(
                p, EVAL_FIELDS, (_eval_record(r) for r in self.evaluations)
            ),
            "switch_trace.csv": lambda p: _write_csv(
                p, TRACE_FIELDS, (_trace_record(r) for r in self.trace)
            ),
        }
        tables = {"q_table.csv": self.q_table, "competency.csv": self.competency_table}
        for name, table in tables.items():
            if table is not None:
                writers[name] = lambda p, t=table: _write_csv(
                    p, TABLE_FIELDS, table_rows(env, t)
                )
        for step in sorted(self.q_snapshots):
            name = f"snapshots/max_q_step_{step:08d}.csv"
            values = self.q_snapshots[step]
            writers[name] = lambda p, v=values: _write_csv(
                p, SNAPSHOT_FIELDS, snapshot_rows(env, v)
            )

        missing = []
        for name, write in writers.items():
            path = run_dir / name
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                write(path)
            except OSError:
                logging.getLogger(__name__).exception("failed writing %s", path)
                missing.append(name)

        self.manifest = dict(manifest)
        self.manifest["files"] = sorted(set(writers) - set(missing))
        self.manifest["missing"] = missing
        self.manifest["status"] = "partial" if missing else "complete"
        self.manifest.setdefault("code_version", __version__)
        with open(run_dir / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(self.manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        self.run_dir = run_dir
        if missing:
            raise RuntimeError(
                f"run outputs incomplete in {run_dir}: missing {', '.join(missing)}"
            )
        return run_dir


def _write_csv(path: Path, fields: Sequence[str], records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(fields)
        for rec in records:
            w.writerow(rec)


def _training_record(r: TrainingRow) -> list:
    return [
        r.step,
        r.cell[1],
        r.cell[0],
        r.goal_kind,
        "" if r.traj_len is None else r.traj_len,
        r.reason,
        fmt(r.epsilon),
        r.replay_size,
    ]


def _eval_record(r: "EvalRecord") -> list:
    return [
        r.train_step,
        r.episode_index,
        fmt(r.episode_return),
        int(r.success),
        r.episode_length,
    ]


def _trace_record(r: TraceRow) -> list:
    return [r.step, r.t, fmt(r.competency), fmt(r.probability), fmt(r.draw), r.reason]


def table_rows(env: GridWorld, table: np.ndarray):
    """Rows of a ``(cells, goals, actions)`` table in enumeration order."""
    for cell, goal in env.enumerate_states():
        ci, gi = env.cell_index(cell), env.goal_index(goal)
        for a in range(len(ACTIONS)):
            yield [cell[1], cell[0], goal.kind.value, a, fmt(table[ci, gi, a])]


def snapshot_rows(env: GridWorld, values: np.ndarray):
    for cell, goal in env.enumerate_states():
        yield [
            cell[1],
            cell[0],
            goal.kind.value,
            fmt(values[env.cell_index(cell), env.goal_index(goal)]),
        ]


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def read_manifest(run_dir: Path) -> Dict[str, Any]:
    with open(Path(run_dir) / "manifest.json", "r", encoding="utf-8") as f:
        return json.load(f)


def read_training(run_dir: Path) -> List[TrainingRow]:
    rows = []
    for rec in read_csv(Path(run_dir) / "training.csv"):
        traj = rec["traj_len_at_boundary"]
        rows.append(
            TrainingRow(
                step=int(rec["step"]),
                cell=(int(rec["cell_y"]), int(rec["cell_x"])),
                goal_kind=rec["goal_kind"],
                traj_len=int(traj) if traj else None,
                reason=rec["switch_reason"],
                epsilon=float(rec["epsilon"]),
                replay_size=int(rec["replay_size"]),
            )
        )
    return rows


def read_snapshot(run_dir: Path, step: int) -> Dict[tuple, float]:
    """``{(cell, goal_kind): max_q}`` for the snapshot taken at ``step``."""
    path = Path(run_dir) / "snapshots" / f"max_q_step_{step:08d}.csv"
    if not path.is_file():
        raise ValueError(f"no Q snapshot at step {step} in {run_dir}")
    out = {}
    for rec in read_csv(path):
        cell = (int(rec["cell_y"]), int(rec["cell_x"]))
        out[(cell, rec["goal_kind"])] = float(rec["max_q"])
    return out
