"""Controller switching rules and the reset-free training loop.

``should_switch`` evaluates its checks in a fixed order: goal reached, then the
maximum trajectory length, then the minimum length, then (only for trajectories
drawn for checking) a Bernoulli draw with probability c * (1 - beta ** t).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, Optional

import numpy as np

from .env import Cell, DeploymentConfig, EnvState, Goal, GoalKind, GridWorld
from .errors import ConfigError
from .learner import QLearner, Transition
from .runlog import RunLog, TraceRow, TrainingRow
from .success_critic import SuccessCritic

CompetencyFn = Callable[[Cell, Goal], float]


class SwitchReason(str, Enum):
    NONE = "none"
    GOAL_REACHED = "goal_reached"
    TRUNCATED = "truncated"
    EARLY_SWITCH = "early_switch"
    # only emitted by the training loop, never by a switching rule
    HARD_RESET = "hard_reset"


class ControllerKind(str, Enum):
    RISC = "risc"
    FBRL = "fbrl"
    REVERSE_CURRICULUM = "reverse_curriculum"
    NAIVE = "naive"
    EPISODIC_ORACLE = "episodic_oracle"


@dataclass(frozen=True)
class SwitchConfig:
    zeta: float = 0.5
    min_length_fraction: float = 0.0
    max_length: int = 100
    beta: float = 0.95

    def __post_init__(self) -> None:
        if not (0.0 <= self.zeta <= 1.0):
            raise ValueError(f"zeta must be in [0, 1], got {self.zeta}")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.max_length < 1:
            raise ValueError(f"max_length must be >= 1, got {self.max_length}")
        if not (0.0 <= self.min_length_fraction < 1.0):
            raise ValueError(
                f"min_length_fraction must be in [0, 1), got {self.min_length_fraction}"
            )

    @property
    def min_length(self) -> int:
        """m in steps, rounded down from the configured fraction of M."""
        return int(math.floor(self.min_length_fraction * self.max_length))


@dataclass
class TrajectoryContext:
    goal: Goal
    t: int = 0
    check_switch: bool = False


@dataclass(frozen=True)
class SwitchDecision:
    switch: bool
    reason: SwitchReason = SwitchReason.NONE
    competency: Optional[float] = None
    probability: Optional[float] = None
    draw: Optional[float] = None

    def __post_init__(self) -> None:
        if self.switch == (self.reason is SwitchReason.NONE):
            raise ValueError(
                f"switch={self.switch} is inconsistent with reason {self.reason.value}"
            )


NO_SWITCH = SwitchDecision(False)


def begin_trajectory(zeta: float, rng: np.random.Generator) -> bool:
    """Decide once per trajectory whether early-switch checks apply to it."""
    if not (0.0 <= zeta <= 1.0):
        raise ValueError(f"zeta must be in [0, 1], got {zeta}")
    return bool(rng.random() < zeta)


def switch_probability(c: float, beta: float, t: int) -> float:
    return c * (1.0 - beta**t)


def should_switch(
    t: int,
    s: Cell,
    g: Goal,
    check_switch: bool,
    competency_fn: CompetencyFn,
    cfg: SwitchConfig,
    rng: np.random.Generator,
) -> SwitchDecision:
    if s == g.cell:
        return SwitchDecision(True, SwitchReason.GOAL_REACHED)
    if t >= cfg.max_length:
        return SwitchDecision(True, SwitchReason.TRUNCATED)
    if t < cfg.min_length:
        return NO_SWITCH
    if not check_switch:
        return NO_SWITCH
    c = competency_fn(s, g)
    lam = switch_probability(c, cfg.beta, t)
    draw = float(rng.random())
    if draw < lam:
        return SwitchDecision(True, SwitchReason.EARLY_SWITCH, c, lam, draw)
    return SwitchDecision(False, SwitchReason.NONE, c, lam, draw)


def switch_goals(
    ctx: TrajectoryContext, env: GridWorld, zeta: float, rng: np.random.Generator
) -> TrajectoryContext:
    return TrajectoryContext(
        goal=env.goal(ctx.goal.kind.other()),
        t=0,
        check_switch=begin_trajectory(zeta, rng),
    )


def rc_should_switch(
    t: int,
    s: Cell,
    g: Goal,
    competency_fn: CompetencyFn,
    threshold: float,
    cfg: SwitchConfig,
) -> SwitchDecision:
    """Reverse-curriculum rule: backward trajectories hand off below ``threshold``."""
    if s == g.cell:
        return SwitchDecision(True, SwitchReason.GOAL_REACHED)
    if t >= cfg.max_length:
        return SwitchDecision(True, SwitchReason.TRUNCATED)
    if g.kind is not GoalKind.RESET:
        return NO_SWITCH
    c = competency_fn(s, g)
    if c < threshold:
        return SwitchDecision(True, SwitchReason.EARLY_SWITCH, competency=c)
    return SwitchDecision(False, competency=c)


def check_seeds(root_seed: int, components: Dict[str, Any]) -> None:
    problems = []
    for name, comp in components.items():
        seed = getattr(comp, "root_seed", None)
        if seed != root_seed:
            problems.append(f"{name} was seeded from {seed}, expected {root_seed}")
    if problems:
        raise ConfigError(problems, header="Component seed mismatch")


@dataclass
class TrainingHooks:
    """Optional callbacks and recording switches for :func:`run_training`."""

    evaluator: Optional[Callable[[int], Iterable[Any]]] = None
    eval_every: int = 0
    snapshot_steps: Iterable[int] = ()
    trace_switches: bool = False
    options: Dict[str, Any] = field(default_factory=dict)


def run_training(
    env: GridWorld,
    learner: QLearner,
    success_critic: SuccessCritic,
    controller_kind: ControllerKind,
    cfg: SwitchConfig,
    deployment: DeploymentConfig,
    rng: np.random.Generator,
    root_seed: int,
    hooks: Optional[TrainingHooks] = None,
) -> RunLog:
    """Run the deployment regime for ``deployment.total_train_steps`` steps."""
    from .controllers import create_controller

    hooks = hooks or TrainingHooks()
    check_seeds(
        root_seed, {"env": env, "learner": learner, "success_critic": success_critic}
    )
    controller = create_controller(
        ControllerKind(controller_kind).value,
        env=env,
        cfg=cfg,
        deployment=deployment,
        rng=rng,
        **hooks.options,
    )
    logger = logging.getLogger(__name__)
    logger.info(
        "training %s for %d steps (seed %d)",
        controller.kind.value,
        deployment.total_train_steps,
        root_seed,
    )

    log = RunLog(root_seed=root_seed)
    snapshots = set(hooks.snapshot_steps)
    competency = success_critic.competency
    state = env.hard_reset()
    ctx = controller.start()

    for step in range(deployment.total_train_steps):
        if step in snapshots:
            log.q_snapshots[step] = learner.table.q.max(axis=-1).copy()
        cell = state.agent_cell
        goal = ctx.goal
        eps = learner.epsilon(step)
        success_critic.epsilon = eps
        action = learner.act(cell, goal, step)
        arrival = env.transition(cell, action)
        state = env.step(action)
        ctx.t += 1

        decision = controller.decide(ctx, arrival, competency)
        hard_reset = state.global_step == 0
        if hard_reset and not decision.switch:
            decision = SwitchDecision(True, SwitchReason.HARD_RESET)

        reached = EnvState(agent_cell=arrival)
        terminal = env.success(reached, goal)
        tr = Transition(
            state=cell,
            goal=goal,
            action=action,
            reward=env.reward(reached, goal),
            next_state=arrival,
            terminal=terminal,
            truncated=decision.switch and not terminal,
        )
        learner.observe(tr)
        batch = learner.train_step()
        if batch is not None:
            success_critic.update(batch)

        if hooks.trace_switches and decision.competency is not None:
            log.trace.append(
                TraceRow(
                    step=step,
                    t=ctx.t,
                    competency=decision.competency,
                    probability=decision.probability,
                    draw=decision.draw,
                    reason=decision.reason.value,
                )
            )
        log.training.append(
            TrainingRow(
                step=step,
                cell=cell,
                goal_kind=goal.kind.value,
                traj_len=ctx.t if decision.switch else None,
                reason=decision.reason.value,
                epsilon=eps,
                replay_size=len(learner.replay),
            )
        )

        if decision.switch:
            logger.debug(
                "step %d: %s after %d steps toward %s",
                step,
                decision.reason.value,
                ctx.t,
                goal.kind.value,
            )
            if hard_reset:
                ctx = controller.start()
            else:
                ctx = controller.next_context(ctx)
                if controller.resets_environment:
                    state = env.reset_episode()

        if hooks.evaluator is not None and hooks.eval_every > 0:
            if (step + 1) % hooks.eval_every == 0:
                log.evaluations.extend(hooks.evaluator(step + 1))

    log.q_table = learner.table.q.copy()
    log.competency_table = success_critic.table.q.copy()
    logger.info(
        "training finished: %d boundaries, %d learner updates",
        sum(1 for row in log.training if row.traj_len is not None),
        learner.updates,
    )
    return log
