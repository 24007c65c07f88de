from __future__ import annotations

from ..env import Cell
from ..switching import (
    NO_SWITCH,
    CompetencyFn,
    ControllerKind,
    SwitchDecision,
    SwitchReason,
    TrajectoryContext,
)
from .base import Controller


class NaiveController(Controller):
    """Always pursues the forward goal; never truncates.

    Entering the goal still ends the trajectory (the transition is terminal)
    but the agent keeps going from the goal cell toward the same goal.
    """

    kind = ControllerKind.NAIVE
    toggles_goals = False

    def decide(
        self, ctx: TrajectoryContext, s: Cell, competency_fn: CompetencyFn
    ) -> SwitchDecision:
        if s == ctx.goal.cell:
            return SwitchDecision(True, SwitchReason.GOAL_REACHED)
        return NO_SWITCH


class EpisodicOracleController(Controller):
    """Forward-only episodes of at most ``eval_episode_limit`` steps, each from ρ."""

    kind = ControllerKind.EPISODIC_ORACLE
    toggles_goals = False
    resets_environment = True

    def decide(
        self, ctx: TrajectoryContext, s: Cell, competency_fn: CompetencyFn
    ) -> SwitchDecision:
        if s == ctx.goal.cell:
            return SwitchDecision(True, SwitchReason.GOAL_REACHED)
        if ctx.t >= self.deployment.eval_episode_limit:
            return SwitchDecision(True, SwitchReason.TRUNCATED)
        return NO_SWITCH
