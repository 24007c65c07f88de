"""Evaluation protocol, OVPD, heatmap windows and aggregate statistics.

Aggregates follow the rliable conventions: the interquartile mean is a 25%
trimmed mean, confidence intervals come from a stratified percentile bootstrap
that resamples runs independently within each task.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .env import Cell, Goal, GoalKind, GridWorld
from .oracle import ValueTable
from .runlog import TrainingRow

Policy = Callable[[Cell, Goal], int]

HEATMAP_WINDOW = 2_000
BOOTSTRAP_REPS = 2_000


@dataclass(frozen=True)
class EvalRecord:
    train_step: int
    episode_index: int
    episode_return: float
    success: bool
    episode_length: int


class AggregateMethod(str, Enum):
    IQM = "iqm"
    MEAN = "mean"
    MEDIAN = "median"
    OPTIMALITY_GAP = "optimality_gap"


@dataclass(frozen=True)
class AggregateStat:
    point: float
    ci_low: float
    ci_high: float
    method: AggregateMethod


@dataclass
class HeatmapWindow:
    start_step: int
    window_len: int
    visit_counts: Dict[Cell, int] = field(default_factory=dict)
    forward_counts: Dict[Cell, int] = field(default_factory=dict)
    max_q: Dict[Tuple[Cell, str], float] = field(default_factory=dict)


def evaluate(
    env_copy: GridWorld,
    learner,
    episodes: int = 10,
    limit: int = 100,
    train_step: int = 0,
    policy: Optional[Policy] = None,
) -> List[EvalRecord]:
    """Run greedy episodes from ρ toward the forward goal on an isolated env."""
    act = policy or learner.greedy_action
    goal = env_copy.goal(GoalKind.FORWARD)
    records = []
    for ep in range(episodes):
        state = env_copy.hard_reset()
        total = 0.0
        length = 0
        success = False
        for _ in range(limit):
            state = env_copy.step(act(state.agent_cell, goal))
            length += 1
            total += env_copy.reward(state, goal)
            if env_copy.success(state, goal):
                success = True
                break
        records.append(EvalRecord(train_step, ep, total, success, length))
    return records


def success_curve(records: Sequence[EvalRecord]) -> List[Tuple[int, float]]:
    """Per-evaluation success rate, ordered by training step."""
    by_step: Dict[int, List[bool]] = {}
    for r in records:
        by_step.setdefault(r.train_step, []).append(r.success)
    return [(step, float(np.mean(v))) for step, v in sorted(by_step.items())]


def ovpd_value(max_q: float, v_star: float) -> float:
    if v_star <= 0:
        raise ValueError(f"OVPD needs a positive optimal value, got {v_star}")
    return abs(max_q - v_star) / v_star


def ovpd(
    learner_q: Callable[[Cell, Goal], np.ndarray],
    v_star: ValueTable,
    s: Cell,
    g_forward: Goal,
) -> float:
    """|max_a Q(s, a) - V*(s)| / V*(s); undefined at the goal cell."""
    if s == g_forward.cell:
        raise ValueError(f"OVPD is undefined at the goal cell {s}")
    return ovpd_value(float(np.max(learner_q(s, g_forward))), v_star[s])


def iqm(samples: Sequence[float]) -> float:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("iqm needs at least one sample")
    return float(stats.trim_mean(x, 0.25))


def optimality_gap(samples: Sequence[float], target: float = 1.0) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return float(np.mean(np.maximum(target - x, 0.0)))


def _aggregate_rows(method: AggregateMethod, x: np.ndarray) -> np.ndarray:
    """Apply ``method`` along the last axis."""
    if method is AggregateMethod.IQM:
        return stats.trim_mean(x, 0.25, axis=-1)
    if method is AggregateMethod.MEAN:
        return x.mean(axis=-1)
    if method is AggregateMethod.MEDIAN:
        return np.median(x, axis=-1)
    return np.maximum(1.0 - x, 0.0).mean(axis=-1)


def aggregate(method: AggregateMethod, samples: Sequence[float]) -> float:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("aggregate needs at least one sample")
    return float(_aggregate_rows(AggregateMethod(method), x))


def bootstrap_ci(
    samples_per_task: Mapping[str, Sequence[float]],
    reps: int = BOOTSTRAP_REPS,
    level: float = 0.95,
    rng: Union[np.random.Generator, int, None] = None,
    method: AggregateMethod = AggregateMethod.IQM,
) -> AggregateStat:
    """Stratified percentile bootstrap over runs within each task.

    Tasks are visited in sorted-name order; each draws a ``(reps, runs)``
    index block from ``rng``.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must be in (0, 1), got {level}")
    method = AggregateMethod(method)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    tasks = [
        np.asarray(samples_per_task[k], dtype=np.float64)
        for k in sorted(samples_per_task)
    ]
    if not tasks or any(t.size == 0 for t in tasks):
        raise ValueError("every task needs at least one run")
    point = float(_aggregate_rows(method, np.concatenate(tasks)))
    resampled = np.concatenate(
        [t[rng.integers(0, t.size, size=(reps, t.size))] for t in tasks], axis=1
    )
    values = _aggregate_rows(method, resampled)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(values, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    # the interval always brackets the point estimate
    return AggregateStat(
        point=point,
        ci_low=float(min(lo, point)),
        ci_high=float(max(hi, point)),
        method=method,
    )


def auc(eval_curve: Sequence[float]) -> float:
    """Normalized area under a success-rate curve: the mean over evaluations."""
    x = np.asarray(eval_curve, dtype=np.float64)
    if x.size == 0:
        raise ValueError("auc needs at least one evaluation point")
    return float(x.mean())


def normalize(scores: Sequence[float], low: float, high: float) -> np.ndarray:
    """Per-task min-max normalization, ``high`` mapping to 1."""
    if high <= low:
        raise ValueError(f"normalization needs high > low, got [{low}, {high}]")
    return (np.asarray(scores, dtype=np.float64) - low) / (high - low)


def heatmap(
    run_log: Sequence[TrainingRow],
    start_step: int,
    max_q: Optional[Mapping[Tuple[Cell, str], float]] = None,
    window_len: int = HEATMAP_WINDOW,
) -> HeatmapWindow:
    """Visit counts over ``window_len`` logged steps from ``start_step``.

    ``visit_counts`` covers every step in the window; ``forward_counts`` only
    the steps taken toward the forward goal.
    """
    window = [r for r in run_log if start_step <= r.step < start_step + window_len]
    if len(window) < window_len:
        raise ValueError(
            f"log has {len(window)} steps after {start_step}, need {window_len}"
        )
    visits = Counter(r.cell for r in window)
    forward = Counter(r.cell for r in window if r.goal_kind == GoalKind.FORWARD.value)
    return HeatmapWindow(
        start_step=start_step,
        window_len=window_len,
        visit_counts=dict(visits),
        forward_counts=dict(forward),
        max_q=dict(max_q or {}),
    )


def window_ovpd(window: HeatmapWindow, v_star: ValueTable) -> Optional[float]:
    """Visit-weighted OVPD over non-goal cells visited in forward mode."""
    total = 0.0
    weight = 0
    for cell, count in window.forward_counts.items():
        key = (cell, GoalKind.FORWARD.value)
        if cell == v_star.goal.cell or key not in window.max_q:
            continue
        total += count * ovpd_value(window.max_q[key], v_star[cell])
        weight += count
    return total / weight if weight else None
