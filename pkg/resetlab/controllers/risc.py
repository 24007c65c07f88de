from __future__ import annotations

from ..env import Cell
from ..switching import (
    CompetencyFn,
    ControllerKind,
    SwitchDecision,
    TrajectoryContext,
    should_switch,
)
from .base import Controller


class RiscController(Controller):
    """Forward/backward alternation with competency-driven early switching."""

    kind = ControllerKind.RISC

    @property
    def zeta(self) -> float:
        return self.cfg.zeta

    def decide(
        self, ctx: TrajectoryContext, s: Cell, competency_fn: CompetencyFn
    ) -> SwitchDecision:
        return should_switch(
            ctx.t, s, ctx.goal, ctx.check_switch, competency_fn, self.cfg, self.rng
        )


class ForwardBackwardController(RiscController):
    """Plain forward/backward alternation: goal reached or M steps only."""

    kind = ControllerKind.FBRL

    @property
    def zeta(self) -> float:
        return 0.0
