from __future__ import annotations

from typing import Any

import numpy as np

from ..env import Cell, DeploymentConfig, GoalKind, GridWorld
from ..switching import (
    CompetencyFn,
    ControllerKind,
    SwitchConfig,
    SwitchDecision,
    TrajectoryContext,
    begin_trajectory,
    switch_goals,
)


class Controller:
    """Decides trajectory boundaries and which goal the agent pursues next.

    Subclasses set ``kind`` and implement :meth:`decide`. Controllers that
    alternate between forward and reset goals keep ``toggles_goals``; the
    episodic oracle additionally returns the agent to the initial state at
    every boundary.
    """

    kind: ControllerKind
    toggles_goals = True
    resets_environment = False

    def __init__(
        self,
        env: GridWorld,
        cfg: SwitchConfig,
        deployment: DeploymentConfig,
        rng: np.random.Generator,
        **options: Any,
    ):
        self.env = env
        self.cfg = cfg
        self.deployment = deployment
        self.rng = rng
        self.options = options

    @property
    def zeta(self) -> float:
        return 0.0

    def start(self) -> TrajectoryContext:
        return TrajectoryContext(
            goal=self.env.goal(GoalKind.FORWARD),
            t=0,
            check_switch=begin_trajectory(self.zeta, self.rng),
        )

    def next_context(self, ctx: TrajectoryContext) -> TrajectoryContext:
        if self.toggles_goals:
            return switch_goals(ctx, self.env, self.zeta, self.rng)
        return TrajectoryContext(
            goal=ctx.goal, t=0, check_switch=begin_trajectory(self.zeta, self.rng)
        )

    def decide(
        self, ctx: TrajectoryContext, s: Cell, competency_fn: CompetencyFn
    ) -> SwitchDecision:
        raise NotImplementedError
