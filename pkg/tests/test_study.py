"""Full 4-rooms study: six controllers, five seeds, 50k steps each.

Deselected by default; run with ``pytest -m slow -s`` to see the CIs.
"""

from pathlib import Path
from typing import Dict, List

import numpy as np
import pytest

from resetlab.config import load_config
from resetlab.metrics import AggregateMethod, auc, bootstrap_ci, success_curve
from resetlab.runlog import RunLog
from resetlab.runner import run_experiment

pytestmark = [pytest.mark.slow, pytest.mark.timeout(3600)]

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BASE = CONFIGS / "four_rooms_risc.yaml"
VARIANTS = [
    "risc",
    "fbrl_nonterminal",
    "fbrl_terminal",
    "reverse_curriculum",
    "naive",
    "episodic_oracle",
]
MODULATIONS_OFF = [
    "switching.zeta=1.0",
    "switching.min_length_fraction=0.0",
    "switching.beta=0.0",
]


def train(paths: List[Path], overrides: List[str] = ()) -> List[RunLog]:
    cfg = load_config([str(p) for p in paths], overrides)
    return [run_experiment(cfg, seed) for seed in cfg.seeds]


@pytest.fixture(scope="module")
def study() -> Dict[str, List[RunLog]]:
    out = {"risc": train([BASE])}
    for name in VARIANTS[1:]:
        out[name] = train([BASE, CONFIGS / "study" / f"{name}.yaml"])
    return out


def aucs(logs: List[RunLog]) -> List[float]:
    return [auc([rate for _, rate in success_curve(log.evaluations)]) for log in logs]


def mean_length(logs: List[RunLog]) -> float:
    return float(np.mean([np.mean(log.trajectory_lengths()) for log in logs]))


def test_study_report(study):
    for name, logs in study.items():
        stat = bootstrap_ci(
            {name: aucs(logs)}, reps=2000, rng=0, method=AggregateMethod.MEAN
        )
        ci = f"[{stat.ci_low:.3f}, {stat.ci_high:.3f}]"
        print(f"{name:20s} AUC {stat.point:.3f} {ci}")


def test_episodic_oracle_solves_the_task(study):
    for log in study["episodic_oracle"]:
        assert max(rate for _, rate in success_curve(log.evaluations)) == 1.0


def test_risc_beats_baselines(study):
    risc = np.mean(aucs(study["risc"]))
    assert risc >= np.mean(aucs(study["reverse_curriculum"]))
    assert risc >= np.mean(aucs(study["fbrl_terminal"]))


def test_timeout_aware_bootstrapping_helps(study):
    nonterminal = np.mean(aucs(study["fbrl_nonterminal"]))
    assert nonterminal >= np.mean(aucs(study["fbrl_terminal"]))


def test_modulations_lengthen_trajectories(study):
    unmodulated = train([BASE], MODULATIONS_OFF)
    assert mean_length(unmodulated) < mean_length(study["risc"])
