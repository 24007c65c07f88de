from __future__ import annotations

from ..env import Cell, Goal, GoalKind
from ..switching import (
    CompetencyFn,
    ControllerKind,
    SwitchDecision,
    TrajectoryContext,
    rc_should_switch,
)
from .base import Controller

DEFAULT_THRESHOLD = 0.2


class ReverseCurriculumController(Controller):
    """Backward trajectories hand control to the forward goal once competency drops.

    ``rc_competency_goal`` picks whose competency is watched: the reset goal
    being pursued (default) or the forward goal the agent is moving away from.
    """

    kind = ControllerKind.REVERSE_CURRICULUM

    def __init__(self, *args, **options):
        super().__init__(*args, **options)
        self.threshold = float(options.get("rc_threshold", DEFAULT_THRESHOLD))
        self.watch = GoalKind(options.get("rc_competency_goal", GoalKind.RESET))

    def decide(
        self, ctx: TrajectoryContext, s: Cell, competency_fn: CompetencyFn
    ) -> SwitchDecision:
        if self.watch is GoalKind.FORWARD:
            forward = self.env.goal(GoalKind.FORWARD)

            def watched(cell: Cell, _g: Goal) -> float:
                return competency_fn(cell, forward)

        else:
            watched = competency_fn
        return rc_should_switch(ctx.t, s, ctx.goal, watched, self.threshold, self.cfg)
